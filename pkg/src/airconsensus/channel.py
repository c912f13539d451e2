"""Wireless layer: geometry, path loss, block fading, noise, and mobility.

Links follow free-space path loss.  Fading is circularly-symmetric complex
Gaussian, drawn independently per link but with two coherence constraints:
each information/reference symbol pair sees the same coefficient, and all
vector coordinates within one aggregation round share the draw (unless a
caller asks for per-coordinate independence).  Receiver noise is white
complex Gaussian of known power.
"""

from dataclasses import dataclass

import numpy as np

SPEED_OF_LIGHT = 299792458.0
DEFAULT_CARRIER_HZ = 3e9
DEFAULT_TX_POWER_W = 1e-3
DEFAULT_REF_DISTANCE_M = 500.0


def friis_link_power(distance_m, carrier_hz=DEFAULT_CARRIER_HZ,
                     tx_power_w=DEFAULT_TX_POWER_W):
    """Received signal power sigma^2 = (lambda_c / (4 pi d))^2 * P_T.

    Strictly decreasing in distance; accepts scalars or arrays.  Distances
    must be positive.
    """
    d = np.asarray(distance_m, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    wavelength = SPEED_OF_LIGHT / carrier_hz
    out = (wavelength / (4.0 * np.pi * d)) ** 2 * tx_power_w
    return float(out) if np.isscalar(distance_m) else out


@dataclass(frozen=True)
class NoiseModel:
    """Receiver noise power in Watts, identical and known at all receivers."""

    m_w: float

    def __post_init__(self):
        if not (self.m_w > 0 and np.isfinite(self.m_w)):
            raise ValueError("noise power must be positive and finite")


def noise_from_snr(snr_db, ref_distance_m=DEFAULT_REF_DISTANCE_M,
                   carrier_hz=DEFAULT_CARRIER_HZ,
                   tx_power_w=DEFAULT_TX_POWER_W):
    """Noise power that yields the requested SNR at the reference distance."""
    p_ref = friis_link_power(ref_distance_m, carrier_hz, tx_power_w)
    return NoiseModel(m_w=p_ref * 10.0 ** (-snr_db / 10.0))


@dataclass
class TopologySnapshot:
    """Agent positions, per-slot half-duplex roles, and link statistics.

    positions : (N, 3) float array, meters.
    role_tx : (N,) bool array; True marks a transmitter for this slot.
    link_var : (N, N) fading variance per ordered (tx, rx) pair; zero on
        the diagonal.  Symmetric because path loss depends on distance only.
    """

    positions: np.ndarray
    role_tx: np.ndarray
    link_var: np.ndarray

    @property
    def n_agents(self):
        return self.positions.shape[0]

    def active_links(self):
        """Boolean (tx, rx) matrix: complete among opposite-role pairs."""
        tx = self.role_tx
        links = np.outer(tx, ~tx)
        np.fill_diagonal(links, False)
        return links

    def edges(self):
        """Ordered (tx, rx) pairs implied by the current roles."""
        t, r = np.nonzero(self.active_links())
        return list(zip(t.tolist(), r.tolist()))


def make_topology(positions, role_tx, carrier_hz=DEFAULT_CARRIER_HZ,
                  tx_power_w=DEFAULT_TX_POWER_W):
    positions = np.asarray(positions, dtype=float)
    role_tx = np.asarray(role_tx, dtype=bool)
    diff = positions[:, None, :] - positions[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=-1))
    np.fill_diagonal(dist, 1.0)  # placeholder, variance zeroed below
    link_var = friis_link_power(dist, carrier_hz, tx_power_w)
    np.fill_diagonal(link_var, 0.0)
    return TopologySnapshot(positions=positions, role_tx=role_tx,
                            link_var=link_var)


@dataclass
class FadingDraw:
    """One block-fading realization for a full aggregation round.

    xi : complex array of shape (M_eff, B, N, N) indexed by coordinate,
        symbol pair, transmitter, receiver.  M_eff is 1 when coordinates
        share the draw.  Each of the B entries covers one
        information/reference symbol pair (the pairwise coherence).
    variance : (N, N) per-link variance used for the draw.
    """

    xi: np.ndarray
    variance: np.ndarray

    @property
    def pairs(self):
        return self.xi.shape[1]


def sample_fading(topology, b_count, rng, m_count=1, active_only=False):
    """Draw coherent block fading for ``b_count`` (= 2B) symbol slots.

    Returns a draw with B = b_count // 2 independent coefficients per link
    and coordinate; the pairing of each information symbol with its
    reference symbol reuses the coefficient, so only B draws exist.

    With ``active_only`` the draw covers just the transmitter-to-receiver
    block (the only coefficients a half-duplex round can excite) and the
    remaining entries are zero.  Roles partition the agents, so the block
    never touches the diagonal.  This consumes far fewer random numbers;
    the realization differs from a full draw but has the same law on the
    active links.
    """
    if b_count % 2 != 0:
        raise ValueError("b_count must be even (symbol pairs)")
    b_pairs = b_count // 2
    n = topology.n_agents
    if active_only:
        tx_idx = np.flatnonzero(topology.role_tx)
        rx_idx = np.flatnonzero(~topology.role_tx)
        shape = (m_count, b_pairs, tx_idx.size, rx_idx.size)
        block = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        block *= np.sqrt(topology.link_var[np.ix_(tx_idx, rx_idx)] / 2.0)
        xi = np.zeros((m_count, b_pairs, n, n), dtype=complex)
        xi[:, :, tx_idx[:, None], rx_idx[None, :]] = block
        return FadingDraw(xi=xi, variance=topology.link_var)
    scale = np.sqrt(topology.link_var / 2.0)
    shape = (m_count, b_pairs, n, n)
    xi = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    xi *= scale
    return FadingDraw(xi=xi, variance=topology.link_var)


def wmac_superpose(symbols, xi, links, noise, rng):
    """Single-slot multiple-access superposition at every receiver.

    q_r = sum over transmitters t with links[t, r] of xi[t, r] * symbols[t],
    plus one fresh complex noise draw of power m_w per receiver.
    """
    symbols = np.asarray(symbols)
    contrib = (xi * np.where(links, 1.0, 0.0)) * symbols[:, None]
    q = contrib.sum(axis=0)
    n = q.shape[0]
    w = np.sqrt(noise.m_w / 2.0) * (
        rng.standard_normal(n) + 1j * rng.standard_normal(n)
    )
    return q + w


@dataclass
class MobilityState:
    """Renewal-process mobility over a measurement dataset.

    The whole network renews at common instants with geometrically spread
    gaps drawn from a Poisson law (clipped to at least one slot).  At each
    renewal every agent takes a fresh dataset row as its position and
    observes the row value through additive Gaussian noise.  Dataset rows
    are consumed through a seeded shuffle and wrap around when exhausted.
    """

    dataset_xyz: np.ndarray
    dataset_val: np.ndarray
    n_agents: int
    renewal_mean: float = 300.0
    measure_noise_var: float = 0.09
    measure_stride: int = 1
    carrier_hz: float = DEFAULT_CARRIER_HZ
    tx_power_w: float = DEFAULT_TX_POWER_W

    def __post_init__(self):
        self._order = None
        self._cursor = 0
        self._next_renewal = 0
        self.positions = None
        self.measurements = None
        self.true_values = None

    def _take_rows(self, k, rng):
        # draw k distinct rows; a reshuffle mid-draw must not hand the same
        # row to two agents, or they would sit at a zero mutual distance
        total = self.dataset_xyz.shape[0]
        if k > total:
            raise ValueError("dataset smaller than the number of agents")
        rows = []
        while len(rows) < k:
            if self._order is None or self._cursor >= total:
                self._order = rng.permutation(total)
                self._cursor = 0
            cand = int(self._order[self._cursor])
            self._cursor += 1
            if cand not in rows:
                rows.append(cand)
        return np.asarray(rows, dtype=int)


def advance_mobility(state, iteration, streams):
    """Advance one slot: flip half-duplex roles, renew positions when due.

    Returns (topology, renewed).  Positions, and with them the link
    variances, change only at renewal instants.  A renewal always comes
    with a fresh noisy measurement; ``measure_stride`` > 0 additionally
    re-measures every that many slots (fresh observation noise each
    time), while 0 keeps the renewal-only observation model.
    """
    renewed = False
    if iteration >= state._next_renewal:
        rows = state._take_rows(state.n_agents, streams["mobility"])
        state.positions = state.dataset_xyz[rows]
        state.true_values = state.dataset_val[rows]
        gap = max(int(streams["mobility"].poisson(state.renewal_mean)), 1)
        state._next_renewal = iteration + gap
        diff = state.positions[:, None, :] - state.positions[None, :, :]
        dist = np.sqrt((diff ** 2).sum(axis=-1))
        np.fill_diagonal(dist, 1.0)
        state._link_var = friis_link_power(dist, state.carrier_hz,
                                           state.tx_power_w)
        np.fill_diagonal(state._link_var, 0.0)
        renewed = True
    if renewed or (state.measure_stride > 0
                   and iteration % state.measure_stride == 0):
        noise = streams["measure"].normal(
            0.0, np.sqrt(state.measure_noise_var), state.n_agents
        )
        state.measurements = state.true_values + noise
    role_tx = streams["roles"].random(state.n_agents) < 0.5
    topology = TopologySnapshot(positions=state.positions, role_tx=role_tx,
                                link_var=state._link_var)
    return topology, renewed
