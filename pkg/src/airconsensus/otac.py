"""Over-the-air aggregation: encoding, rounds, decoding, consensus update.

Each transmitter maps a bounded scalar onto symbol energy through an affine
power map and sends random-sign symbols; simultaneous transmissions add up
in the channel, so the average received energy carries a weighted sum of
the transmitted values.  A second set of reference symbols, sent at the
power-map maximum, lets the receiver estimate the same weighted sum of
ones, and the pair yields an unbiased estimate of (sum of weights,
weighted sum of values) without any channel state information.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ProtocolParams:
    """Aggregation protocol constants.

    b_symbols : number of information/reference symbol pairs per scalar.
    delta_min, delta_max : admissible input range; the power map sends
        delta_min to zero energy and delta_max to peak_power.
    peak_power : per-symbol power ceiling, identical across agents.
    """

    b_symbols: int
    delta_min: float
    delta_max: float
    peak_power: float = 1.0

    def __post_init__(self):
        if self.b_symbols < 1:
            raise ValueError("b_symbols must be >= 1")
        if not self.delta_max > self.delta_min:
            raise ValueError("delta_max must exceed delta_min")
        if not self.peak_power > 0:
            raise ValueError("peak_power must be positive")

    @property
    def delta(self):
        return self.delta_max - self.delta_min

    def power_map(self, x):
        """Affine energy map g(x) = peak_power * (x - delta_min) / delta."""
        return self.peak_power * (np.asarray(x) - self.delta_min) / self.delta


@dataclass
class EncodedFrame:
    """2B random-sign symbols for one scalar transmission.

    Even indices (0, 2, ...) hold information symbols of energy g(value);
    odd indices hold reference symbols of energy g(delta_max) = peak power.
    """

    symbols: np.ndarray
    clamped: bool = False


def encode(value, params, rng):
    """Encode one scalar into a 2B-symbol frame.

    Values outside [delta_min, delta_max] are clamped first and the frame
    carries a diagnostic flag.  Signs are i.i.d. uniform on {-1, +1}.
    """
    clamped = value < params.delta_min or value > params.delta_max
    v = min(max(value, params.delta_min), params.delta_max)
    b = params.b_symbols
    amp_info = np.sqrt(params.power_map(v))
    amp_ref = np.sqrt(params.peak_power)
    signs = rng.integers(0, 2, size=2 * b) * 2.0 - 1.0
    symbols = np.empty(2 * b)
    symbols[0::2] = amp_info * signs[0::2]
    symbols[1::2] = amp_ref * signs[1::2]
    return EncodedFrame(symbols=symbols, clamped=bool(clamped))


@dataclass
class OtaRoundOutput:
    """Receiver-side estimates from one scalar round.

    v_hat estimates the weighted sum of transmitted values; v_prime_hat
    estimates the sum of the weights themselves.
    """

    v_hat: float
    v_prime_hat: float


def post_process(received, m_w, params):
    """Turn one 2B-symbol reception into the two energy estimates.

    The information estimate rescales the bias-corrected mean information
    energy by the input range and re-adds the range offset through the
    weight estimate.
    """
    received = np.asarray(received)
    b = params.b_symbols
    if received.size != 2 * b:
        raise ValueError("received frame length must be 2*b_symbols")
    y_info = received[0::2]
    y_ref = received[1::2]
    v_prime = float(np.sum(np.abs(y_ref) ** 2) / b - m_w)
    v_hat = float(
        params.delta * (np.sum(np.abs(y_info) ** 2) / b - m_w)
        + params.delta_min * v_prime
    )
    return OtaRoundOutput(v_hat=v_hat, v_prime_hat=v_prime)


@dataclass
class OtaRoundResult:
    """Everything one vector aggregation round produced.

    v_hat, v_prime_hat : (N, M) per-receiver estimates (rows of
        non-receivers are zero and flagged by ``receivers``).
    receivers : (N,) bool mask of agents that listened this round.
    nu : realized link weights, shape (M_eff, N, N) indexed by coordinate
        (broadcast when coordinate-coherent), transmitter, receiver.
        Always reflects the drawn channel, even for links a silent zero
        component never excited.
    symbols_sent, energy : transmit-side ledger (count, sum of |s|^2).
    channel_uses : network-wide synchronized symbol slots consumed.
    clamped : number of inputs clamped into the admissible range.
    """

    v_hat: np.ndarray
    v_prime_hat: np.ndarray
    receivers: np.ndarray
    nu: np.ndarray
    symbols_sent: int
    energy: float
    channel_uses: int
    clamped: int


def run_vector_round(lambdas, topology, noise, params, streams,
                     coordinate_coherent=True, skip_zeros=False):
    """Run one synchronized vector aggregation round over the network.

    Parameters
    ----------
    lambdas : (N, M) array of per-agent vectors; only transmitters' rows
        are read.
    topology : TopologySnapshot with roles for this slot.
    noise : NoiseModel.
    params : ProtocolParams.
    streams : dict with "fading", "noise", "signs" generators.
    coordinate_coherent : share one fading draw across all M coordinates
        and send a single shared reference round, so the network consumes
        (M+1)*B symbol slots; otherwise every coordinate runs its own
        2B-slot scalar round (2*B*M slots) with independent fading.
    skip_zeros : transmitters go silent on exactly-zero components.
        Requires delta_min == 0, so a zero component carries no
        information energy regardless; in per-coordinate mode the matching
        reference symbols are suppressed too, which drops the silent agent
        from that coordinate's estimated weight sum and saves its
        reference energy.  A shared reference round cannot be split per
        coordinate, so in coherent mode only the information ledger
        shrinks.

    Returns an OtaRoundResult.
    """
    lambdas = np.asarray(lambdas, dtype=float)
    n, m = lambdas.shape
    if topology.n_agents != n:
        raise ValueError("lambdas row count does not match topology")
    if skip_zeros and params.delta_min != 0.0:
        raise ValueError("skip_zeros requires delta_min == 0")
    b = params.b_symbols
    tx = topology.role_tx
    rx = ~tx
    tx_idx = np.flatnonzero(tx)
    rx_idx = np.flatnonzero(rx)
    t_cnt = tx_idx.size

    clipped = np.clip(lambdas, params.delta_min, params.delta_max)
    clamped = int(np.sum(clipped != lambdas))
    amp_info = np.sqrt(params.power_map(clipped[tx_idx]))    # (T, M)
    amp_ref = np.sqrt(params.peak_power)

    # all arithmetic runs on the transmitter -> receiver block; roles
    # partition the agents, so those are the only links a round excites.
    # Same law and draw order as sample_fading(..., active_only=True).
    m_eff = 1 if coordinate_coherent else m
    rng_fade = streams["fading"]
    shape = (m_eff, b, t_cnt, rx_idx.size)
    xi = rng_fade.standard_normal(shape) + 1j * rng_fade.standard_normal(shape)
    xi *= np.sqrt(topology.link_var[np.ix_(tx_idx, rx_idx)] / 2.0)

    rng_noise = streams["noise"]
    rng_signs = streams["signs"]

    def complex_noise(shape):
        return np.sqrt(noise.m_w / 2.0) * (
            rng_noise.standard_normal(shape)
            + 1j * rng_noise.standard_normal(shape)
        )

    # information symbols: coordinate m, pair b, transmitter t
    signs_info = rng_signs.integers(0, 2, size=(m, b, t_cnt)) * 2.0 - 1.0
    sym_info = amp_info.T[:, None, :] * signs_info     # (M, B, T)
    if coordinate_coherent:
        y_info = np.einsum("btr,mbt->mbr", xi[0], sym_info)   # (M, B, R)
        signs_ref = rng_signs.integers(0, 2, size=(b, t_cnt)) * 2.0 - 1.0
        sym_ref = amp_ref * signs_ref                   # (B, T)
        y_ref = np.einsum("btr,bt->br", xi[0], sym_ref)  # (B, R)
        y_info += complex_noise(y_info.shape)
        y_ref += complex_noise(y_ref.shape)
        nu_block = (params.peak_power / b) * np.sum(np.abs(xi) ** 2, axis=1)
        vp_r = np.sum(np.abs(y_ref) ** 2, axis=0) / b - noise.m_w  # (R,)
        v_prime_rx = np.broadcast_to(vp_r[:, None], (rx_idx.size, m)).copy()
        channel_uses = (m + 1) * b
        ref_count = t_cnt * b
    else:
        y_info = np.einsum("mbtr,mbt->mbr", xi, sym_info)
        signs_ref = rng_signs.integers(0, 2, size=(m, b, t_cnt)) * 2.0 - 1.0
        if skip_zeros:
            ref_amp = np.where(amp_info.T > 0, amp_ref, 0.0)[:, None, :]
        else:
            ref_amp = amp_ref
        sym_ref = ref_amp * signs_ref                   # (M, B, T)
        y_ref = np.einsum("mbtr,mbt->mbr", xi, sym_ref)
        y_info += complex_noise(y_info.shape)
        y_ref += complex_noise(y_ref.shape)
        nu_block = (params.peak_power / b) * np.sum(np.abs(xi) ** 2, axis=1)
        v_prime_rx = (np.sum(np.abs(y_ref) ** 2, axis=1) / b - noise.m_w).T
        channel_uses = 2 * b * m
        if skip_zeros:
            ref_count = int((amp_info > 0).sum()) * b
        else:
            ref_count = t_cnt * m * b

    e_info = np.sum(np.abs(y_info) ** 2, axis=1) / b - noise.m_w  # (M, R)
    v_hat = np.zeros((n, m))
    v_prime = np.zeros((n, m))
    v_hat[rx_idx] = params.delta * e_info.T + params.delta_min * v_prime_rx
    v_prime[rx_idx] = v_prime_rx
    nu = np.zeros((m_eff, n, n))
    nu[:, tx_idx[:, None], rx_idx[None, :]] = nu_block

    # transmit-side ledger
    active_info = (amp_info > 0) if skip_zeros else np.ones_like(
        amp_info, dtype=bool)
    symbols_sent = int(active_info.sum()) * b + ref_count
    energy = float(
        b * np.sum(amp_info ** 2)
        + params.peak_power * ref_count
    )

    return OtaRoundResult(
        v_hat=v_hat, v_prime_hat=v_prime, receivers=rx, nu=nu,
        symbols_sent=symbols_sent, energy=energy,
        channel_uses=channel_uses, clamped=clamped,
    )


def consensus_update(lambda_r, v_hat, v_prime_hat, beta_i, gamma_i):
    """Noisy mixing step: (1 - beta*gamma*v') .* lambda + beta*gamma*v.

    Element-wise; broadcasts over leading axes, so it applies equally to a
    single agent's vector or to a stacked (N, M) batch.
    """
    bg = beta_i * gamma_i
    return (1.0 - bg * np.asarray(v_prime_hat)) * np.asarray(lambda_r) \
        + bg * np.asarray(v_hat)


def gamma_bound(neighbor_weight_sums):
    """Largest admissible consensus normalization.

    Takes per-receiver sums of expected link weights (peak power times
    link variance, summed over potential transmitters) and returns the
    reciprocal of their maximum; any gamma in (0, bound] keeps the
    expected mixing matrix nonnegative.
    """
    sums = np.asarray(neighbor_weight_sums, dtype=float)
    if sums.size == 0:
        raise ValueError("need at least one receiver")
    peak = float(np.max(sums))
    if peak <= 0:
        raise ValueError("expected weights must include a positive entry")
    return 1.0 / peak


def gamma_for_topology(topology, peak_power=1.0):
    """Admissible gamma for a snapshot, assuming every neighbor may send."""
    sums = (peak_power * topology.link_var).sum(axis=0)
    return gamma_bound(sums)
