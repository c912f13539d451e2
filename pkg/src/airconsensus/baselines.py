"""Baseline communication schemes and the backend adapters for all schemes.

Four references bracket the over-the-air scheme: no communication (NOC),
an idealized noiseless network average (CEN), a digital TDMA broadcast
with dithered quantization and outage-limited rate (DBC), and an analog
TDMA broadcast with training-based power estimation (ANB).  Every scheme,
including the over-the-air one, is exposed through the same backend
registry so the simulation loop is scheme-agnostic.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from . import apsm
from .apsm import AverageEstimate, NeighborEstimate, OtaEstimate, RoundContext
from .channel import friis_link_power
from .otac import gamma_for_topology, run_vector_round


@dataclass(frozen=True)
class DbcConfig:
    """Digital broadcast constants.

    The payload is one scale header plus the parameter vector quantized to
    ``quant_levels`` uniform levels on (-1, 1]; the rate is the largest
    one whose outage probability under unit-mean exponential channel power
    stays below ``outage_target`` at the reference distance.
    """

    quant_levels: int = 40
    header_bits: int = 64
    outage_target: float = 0.2
    ref_distance_m: float = 500.0
    bandwidth_hz: float = 1e6
    shuffle: bool = False

    def __post_init__(self):
        if self.quant_levels < 2:
            raise ValueError("need at least two quantizer levels")
        if not 0.0 < self.outage_target < 1.0:
            raise ValueError("outage target must lie in (0, 1)")


@dataclass(frozen=True)
class AnbConfig:
    """Analog broadcast constants.

    ``tx_power`` is the broadcaster's own peak power; it is a radio
    property of the scheme and deliberately not tied to whatever power
    the aggregation protocol runs at.
    """

    training_symbols: int = 4
    power_gate_factor: float = 2.0
    tx_power: float = 1.0

    def __post_init__(self):
        if self.training_symbols < 1:
            raise ValueError("need at least one training symbol")
        if self.tx_power <= 0:
            raise ValueError("transmit power must be positive")


def cen_round(all_lambdas):
    """Exact noiseless average of all agents' vectors."""
    return np.asarray(all_lambdas, dtype=float).mean(axis=0)


def noc_round(n_agents):
    """No communication: every agent gets nothing."""
    return [None] * n_agents


def dbc_rate(snr_mean_linear, config=DbcConfig()):
    """Largest rate meeting the outage target under Rayleigh fading.

    With channel power E ~ Exp(1), P(log2(1 + snr*E) < R) <= target gives
    R = log2(1 - snr * ln(1 - target)).
    """
    if snr_mean_linear <= 0:
        return 0.0
    return math.log2(1.0 - snr_mean_linear * math.log1p(-config.outage_target))


def _dither_quantize(values, levels, rng):
    """Subtractive-dither quantization onto cell centers of (-1, 1].

    One shared dither per component; the reconstruction error equals the
    rounding error of the dithered value, so it is unbiased and bounded by
    half a step.  Rounding is not saturated: a dithered boundary value may
    land one cell outside the nominal range.
    """
    step = 2.0 / levels
    dither = rng.uniform(-step / 2.0, step / 2.0, size=values.shape)
    u = values + dither
    # nearest center of the grid {-1 + (k + 1/2) step}
    q = (np.round(u / step - 0.5) + 0.5) * step
    return q - dither


def dbc_encode(lam, config, streams):
    """Quantize a vector for broadcast; returns (reconstruction, bits).

    The scale header (max magnitude) travels error-free alongside the
    quantized normalized vector.
    """
    lam = np.asarray(lam, dtype=float)
    scale = float(np.max(np.abs(lam)))
    if scale > 0:
        recon = scale * _dither_quantize(lam / scale, config.quant_levels,
                                         streams["dither"])
    else:
        streams["dither"].uniform(-1.0, 1.0, size=lam.shape)  # keep stream aligned
        recon = np.zeros_like(lam)
    bits = config.header_bits + lam.size * math.log2(config.quant_levels)
    return recon, bits


def dbc_decode(broadcaster, recon, topology, noise, rate, streams):
    """Outage decisions for one completed broadcast.

    Each other agent decodes independently iff its instantaneous capacity
    under a fresh unit-mean exponential channel power meets the rate.
    Payload entries are None for the broadcaster and receivers in outage.
    """
    n = topology.n_agents
    gains = streams["fading"].exponential(1.0, size=n)
    payloads = [None] * n
    for r in range(n):
        if r == broadcaster:
            continue
        link_snr = topology.link_var[broadcaster, r] / noise.m_w
        capacity = math.log2(1.0 + link_snr * gains[r])
        if capacity >= rate:
            payloads[r] = NeighborEstimate(vector=recon.copy())
    return payloads


def dbc_round(broadcaster, lam, topology, noise, config, streams,
              rate=None, peak_power=1.0):
    """One complete digital broadcast (encode, fade, decode) in one call.

    Returns (payloads, ledger) with the ledger charging the full airtime
    of the broadcast, however many slots it would physically occupy.
    """
    if rate is None:
        snr_ref = friis_link_power(config.ref_distance_m) / noise.m_w
        rate = dbc_rate(snr_ref, config)
    recon, bits = dbc_encode(lam, config, streams)
    payloads = dbc_decode(broadcaster, recon, topology, noise, rate, streams)
    symbols = bits / rate if rate > 0 else float("inf")
    ledger = {
        "symbols": symbols,
        "energy": symbols * peak_power,
        "channel_uses": symbols,
        "clamped": 0,
    }
    return payloads, ledger


def anb_round(broadcaster, lam, topology, noise, params, config, streams):
    """One analog broadcast slot.

    The broadcaster maps each component onto symbol energy with the same
    shape of power map as the aggregation protocol, but at the scheme's
    own transmit power, and prepends training symbols at that power.
    Each receiver estimates the received power from training and inverts
    the power map.  The payload is discarded when the signal power
    actually received over the training window falls below the noise
    gate; the gate sees the realized channel (the same perfect-CSI
    modeling the digital scheme's decode condition uses) so that a pure
    noise burst cannot masquerade as a broadcast.  Returns
    (payloads, ledger).
    """
    lam = np.asarray(lam, dtype=float)
    n = topology.n_agents
    m = lam.size
    params = replace(params, peak_power=config.tx_power)
    b = params.b_symbols
    bt = config.training_symbols
    clipped = np.clip(lam, params.delta_min, params.delta_max)
    clamped = int(np.sum(clipped != lam))
    amp = np.sqrt(params.power_map(clipped))           # (M,)
    amp_t = math.sqrt(params.peak_power)

    var = topology.link_var[broadcaster]                # (N,)
    xi = np.sqrt(var / 2.0) * (
        streams["fading"].standard_normal(n)
        + 1j * streams["fading"].standard_normal(n)
    )

    def noisy(sig, shape):
        w = np.sqrt(noise.m_w / 2.0) * (
            streams["noise"].standard_normal(shape)
            + 1j * streams["noise"].standard_normal(shape)
        )
        return sig + w

    signs_t = streams["signs"].integers(0, 2, size=bt) * 2.0 - 1.0
    sig_t = xi[None, :] * (amp_t * signs_t)[:, None]               # (bt, N)
    y_t = noisy(sig_t, (bt, n))
    p_hat = np.sum(np.abs(y_t) ** 2, axis=0) / bt - noise.m_w      # (N,)
    p_true = np.sum(np.abs(sig_t) ** 2, axis=0) / bt               # (N,)

    signs = streams["signs"].integers(0, 2, size=(m, b)) * 2.0 - 1.0
    sig = xi[None, None, :] * (amp[:, None] * signs)[:, :, None]
    y = noisy(sig, (m, b, n))
    e_hat = np.sum(np.abs(y) ** 2, axis=1) / b - noise.m_w         # (M, N)

    payloads = [None] * n
    gate = config.power_gate_factor * noise.m_w
    for r in range(n):
        if r == broadcaster or p_true[r] < gate or p_hat[r] <= 0:
            continue
        ratio = np.clip(e_hat[:, r] / p_hat[r], 0.0, 1.0)
        est = params.delta_min + params.delta * ratio
        payloads[r] = NeighborEstimate(vector=est)

    ledger = {
        "symbols": m * b + bt,
        "energy": float(b * np.sum(amp ** 2) + bt * params.peak_power),
        "channel_uses": m * b + bt,
        "clamped": clamped,
    }
    return payloads, ledger


class NocBackend:
    def communicate(self, ctx: RoundContext):
        n = ctx.lambdas.shape[0]
        return noc_round(n), {"symbols": 0, "energy": 0.0,
                              "channel_uses": 0, "clamped": 0}


class CenBackend:
    def communicate(self, ctx: RoundContext):
        avg = cen_round(ctx.lambdas)
        payloads = [AverageEstimate(vector=avg) for _ in range(ctx.lambdas.shape[0])]
        return payloads, {"symbols": 0, "energy": 0.0,
                          "channel_uses": 0, "clamped": 0}


class DbcBackend:
    """TDMA digital broadcast with airtime accounting.

    Agents take turns; the next one starts only after the previous
    broadcast has finished.  ``slot_symbols`` is the airtime available per
    iteration (0 means unlimited, so every broadcast lands in the slot it
    started in).  At low rate a single broadcast spans many iterations and
    its payload, encoded from the vector as it was when the broadcast
    began, is delivered only on the iteration it completes.
    """

    def __init__(self, config=DbcConfig(), snr_mean_linear=1.0,
                 peak_power=1.0, slot_symbols=0):
        self.config = config
        self.rate = dbc_rate(snr_mean_linear, config)
        self.peak_power = peak_power
        self.slot_symbols = float(slot_symbols)
        self._order = None
        self._done = 0           # completed broadcasts, drives the TDMA turn
        self._pending = None     # (broadcaster, reconstruction, symbols left)

    def _broadcaster(self, ctx):
        n = ctx.lambdas.shape[0]
        k = self._done % n
        if not self.config.shuffle:
            return k
        if k == 0 or self._order is None or self._order.size != n:
            self._order = ctx.streams["roles"].permutation(n)
        return int(self._order[k])

    def communicate(self, ctx: RoundContext):
        n = ctx.lambdas.shape[0]
        if self._pending is None:
            u = self._broadcaster(ctx)
            recon, bits = dbc_encode(ctx.lambdas[u], self.config, ctx.streams)
            need = bits / self.rate if self.rate > 0 else float("inf")
            self._pending = (u, recon, need)

        u, recon, left = self._pending
        budget = self.slot_symbols if self.slot_symbols > 0 else left
        used = min(left, budget)
        payloads = [None] * n
        if left <= budget:
            payloads = dbc_decode(u, recon, ctx.topology, ctx.noise,
                                  self.rate, ctx.streams)
            self._pending = None
            self._done += 1
        else:
            self._pending = (u, recon, left - budget)

        ledger = {
            "symbols": used,
            "energy": used * self.peak_power,
            "channel_uses": used,
            "clamped": 0,
        }
        return payloads, ledger


class AnbBackend:
    """TDMA analog broadcast; one broadcaster per iteration."""

    def __init__(self, params, config=None):
        self.params = params
        self.config = config or AnbConfig(training_symbols=params.b_symbols)

    def communicate(self, ctx: RoundContext):
        n = ctx.lambdas.shape[0]
        u = ctx.iteration % n
        return anb_round(u, ctx.lambdas[u], ctx.topology, ctx.noise,
                         self.params, self.config, ctx.streams)


class OtaBackend:
    """Over-the-air aggregation with half-duplex roles from the topology.

    ``gate_factor`` applies the same reception sanity check the analog
    broadcast uses: a receiver whose reference power estimate says the
    round-average received power is below gate_factor times the noise
    floor discards the round instead of mixing in what is mostly noise.
    Zero disables the gate.  With ``skip_zeros`` the gate additionally
    acts per coordinate: silent components leave no reference power
    behind, so coordinates whose weight estimate sits under the floor are
    zeroed out and keep their local value rather than mixing in the
    noise-only residue.

    ``gamma_scale`` backs the consensus gain off from its stability
    ceiling.  The ceiling value mixes fastest but also injects the full
    aggregation-estimate noise every round; a fraction of it trades a
    longer mixing time for a proportionally lower noise floor, which pays
    off whenever the run length comfortably exceeds the mixing time.
    The gain may also decay over iterations (``gamma_decay`` as a power
    of floor(i/100)+1, clipped below at ``gamma_floor``): strong early
    mixing removes initial disagreement while the estimates are coarse
    anyway, and the late small gain quiets the aggregation noise.
    """

    def __init__(self, params, coordinate_coherent=True, skip_zeros=False,
                 gate_factor=0.0, gamma_scale=1.0, gamma_decay=0.0,
                 gamma_floor=0.0):
        if not 0.0 < gamma_scale <= 1.0:
            raise ValueError("gamma_scale must lie in (0, 1]")
        self.params = params
        self.coordinate_coherent = coordinate_coherent
        self.skip_zeros = skip_zeros
        self.gate_factor = gate_factor
        self.gamma_scale = gamma_scale
        self.gamma_decay = gamma_decay
        self.gamma_floor = gamma_floor

    def _scale_at(self, iteration):
        s = self.gamma_scale
        if self.gamma_decay > 0:
            s = s * float(iteration // 100 + 1) ** -self.gamma_decay
        return max(s, self.gamma_floor)

    def communicate(self, ctx: RoundContext):
        result = run_vector_round(
            ctx.lambdas, ctx.topology, ctx.noise, self.params, ctx.streams,
            coordinate_coherent=self.coordinate_coherent,
            skip_zeros=self.skip_zeros,
        )
        gamma = self._scale_at(ctx.iteration) * gamma_for_topology(
            ctx.topology, self.params.peak_power)
        accept = np.asarray(result.receivers, dtype=bool).copy()
        v_hat = result.v_hat
        v_prime = result.v_prime_hat
        if self.gate_factor > 0:
            # received power estimate is v_prime_hat + m_w
            floor = (self.gate_factor - 1.0) * ctx.noise.m_w
            if self.skip_zeros:
                # silent components leave coordinates with no reference
                # power; zero those estimates instead of mixing noise
                dead = v_prime < floor
                v_hat = np.where(dead, 0.0, v_hat)
                v_prime = np.where(dead, 0.0, v_prime)
                accept &= ~np.all(dead, axis=1)
            else:
                weak = np.mean(v_prime, axis=1) < floor
                accept &= ~weak
        payloads = [
            OtaEstimate(v_hat=v_hat[r], v_prime_hat=v_prime[r], gamma=gamma)
            if accept[r] else None
            for r in range(ctx.lambdas.shape[0])
        ]
        ledger = {
            "symbols": result.symbols_sent,
            "energy": result.energy,
            "channel_uses": result.channel_uses,
            "clamped": result.clamped,
        }
        return payloads, ledger


apsm.register_backend("NOC", lambda **kw: NocBackend())
apsm.register_backend("CEN", lambda **kw: CenBackend())
apsm.register_backend("DBC", DbcBackend)
apsm.register_backend("ANB", AnbBackend)
apsm.register_backend("OTA-C", OtaBackend)
apsm.register_backend(
    "OTA-CS", lambda params, **kw: OtaBackend(params, skip_zeros=True, **kw)
)
