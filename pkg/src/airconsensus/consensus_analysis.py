"""Dense matrix form of the mixing step and its statistical verification.

One aggregation round, linearized in the stacked network state, is a
random block matrix plus a multiplicative and an additive noise term.
This module assembles those objects from round traces and checks, on
desk-scale instances (stacked dimension <= 200), the algebraic and
statistical properties the convergence analysis rests on: consensus
vectors are fixed points, the expected matrix is nonnegative with a
spectral gap across the consensus subspace, its second moment is bounded,
and the noise terms are zero mean and uncorrelated with the matrix.
"""

from dataclasses import dataclass, field

import numpy as np

MAX_DENSE_DIM = 200


@dataclass
class ConsensusMatrixSample:
    """One realization: mixing matrix P, diagonal noise W, additive noise n.

    The linearized update for mixing weight beta is
    psi_next = (1 - beta) psi + beta ((P + W) psi + n).
    """

    p: np.ndarray
    w_diag: np.ndarray
    n_vec: np.ndarray


def dense_consensus_projector(n_agents, param_dim):
    """Dense projector onto the consensus subspace (tests and checks only)."""
    return np.kron(np.ones((n_agents, n_agents)) / n_agents, np.eye(param_dim))


def build_matrix_sample(result, lambdas, gamma):
    """Assemble the stacked matrices for one recorded aggregation round.

    ``result`` is an OtaRoundResult; ``lambdas`` the (N, M) inputs the
    round transmitted.  Non-receivers get identity rows with zero noise.
    Row sums of P equal 1 exactly by construction.
    """
    lambdas = np.asarray(lambdas, dtype=float)
    n, m = lambdas.shape
    if result.nu.shape[1:] != (n, n):
        raise ValueError("round trace does not match lambdas shape")
    nu = np.broadcast_to(result.nu, (m, n, n))  # (M, tx, rx)
    mn = n * m
    p = np.zeros((mn, mn))
    w_diag = np.zeros(mn)
    n_vec = np.zeros(mn)
    for r in range(n):
        rows = slice(r * m, (r + 1) * m)
        if not result.receivers[r]:
            p[rows, rows] = np.eye(m)
            continue
        nu_sum = nu[:, :, r].sum(axis=1)            # (M,)
        p[rows, rows] = np.diag(1.0 - gamma * nu_sum)
        for j in range(n):
            if j == r:
                continue
            cols = slice(j * m, (j + 1) * m)
            p[rows, cols] = np.diag(gamma * nu[:, j, r])
        eta_prime = result.v_prime_hat[r] - nu_sum
        eta = result.v_hat[r] - np.einsum("mj,jm->m", nu[:, :, r], lambdas)
        w_diag[r * m:(r + 1) * m] = -gamma * eta_prime
        n_vec[r * m:(r + 1) * m] = gamma * eta
    return ConsensusMatrixSample(p=p, w_diag=w_diag, n_vec=n_vec)


def apply_stacked(sample, lambdas, beta):
    """Linearized update through the stacked matrices."""
    lam_flat = np.asarray(lambdas, dtype=float).reshape(-1)
    k_hat = (sample.p + np.diag(sample.w_diag)) @ lam_flat + sample.n_vec
    out = (1.0 - beta) * lam_flat + beta * k_hat
    return out.reshape(np.asarray(lambdas).shape)


def matrix_form_equivalence(lambdas, result, beta, gamma, tol=1e-12):
    """Replay one round element-wise and through the stacked form.

    Returns (equal, max_abs_diff).  The element-wise path applies the
    noisy mixing update at receivers and the identity elsewhere.
    """
    from .otac import consensus_update

    lambdas = np.asarray(lambdas, dtype=float)
    elementwise = lambdas.copy()
    rx = result.receivers
    elementwise[rx] = consensus_update(
        lambdas[rx], result.v_hat[rx], result.v_prime_hat[rx], beta, gamma)
    stacked = apply_stacked(build_matrix_sample(result, lambdas, gamma),
                            lambdas, beta)
    diff = float(np.max(np.abs(elementwise - stacked)))
    return diff <= tol, diff


@dataclass
class ConsensusMatrixStats:
    """Streaming moments of matrix samples for the statistical checks."""

    n_agents: int
    param_dim: int
    count: int = 0
    sum_p: np.ndarray = None
    sum_ptp: np.ndarray = None
    sum_w: np.ndarray = None
    sum_w2: np.ndarray = None
    sum_n: np.ndarray = None
    sum_n2: np.ndarray = None
    sum_ptw: np.ndarray = None
    sum_ptw2: np.ndarray = None
    sum_ptn: np.ndarray = None
    sum_ptn2: np.ndarray = None
    max_row_dev: float = 0.0
    max_fix_dev: float = 0.0
    max_p_norm2: float = 0.0
    sum_w_norm2: float = 0.0
    sum_n_norm2: float = 0.0

    def __post_init__(self):
        mn = self.n_agents * self.param_dim
        if mn > MAX_DENSE_DIM:
            raise ValueError(
                f"dense verification is limited to stacked dimension "
                f"{MAX_DENSE_DIM}, got {mn}")
        for name in ("sum_p", "sum_ptp", "sum_ptw", "sum_ptw2"):
            setattr(self, name, np.zeros((mn, mn)))
        for name in ("sum_w", "sum_w2", "sum_n", "sum_n2",
                     "sum_ptn", "sum_ptn2"):
            setattr(self, name, np.zeros(mn))

    def add(self, sample):
        p, w, nv = sample.p, sample.w_diag, sample.n_vec
        self.count += 1
        self.sum_p += p
        self.sum_ptp += p.T @ p
        self.sum_w += w
        self.sum_w2 += w ** 2
        self.sum_n += nv
        self.sum_n2 += nv ** 2
        ptw = p.T * w[None, :]
        self.sum_ptw += ptw
        self.sum_ptw2 += ptw ** 2
        ptn = p.T @ nv
        self.sum_ptn += ptn
        self.sum_ptn2 += ptn ** 2
        # exact algebraic identities, tracked per sample
        self.max_row_dev = max(self.max_row_dev,
                               float(np.max(np.abs(p.sum(axis=1) - 1.0))))
        m = self.param_dim
        n = self.n_agents
        basis = np.tile(np.eye(m), (n, 1))           # consensus basis, columns
        self.max_fix_dev = max(self.max_fix_dev,
                               float(np.max(np.abs(p @ basis - basis))))
        self.max_p_norm2 = max(self.max_p_norm2,
                               float(np.linalg.norm(p, 2) ** 2))
        self.sum_w_norm2 += float(np.max(np.abs(w)) ** 2)
        self.sum_n_norm2 += float(np.dot(nv, nv))

    @property
    def mean_p(self):
        return self.sum_p / self.count

    @property
    def mean_ptp(self):
        return self.sum_ptp / self.count


def _perp_basis(n_agents, param_dim):
    """Orthonormal basis of the complement of the consensus subspace."""
    j = dense_consensus_projector(n_agents, param_dim)
    vals, vecs = np.linalg.eigh(j)
    return vecs[:, vals < 0.5]


def _restricted_spectrum(mean_p, n_agents, param_dim):
    q = _perp_basis(n_agents, param_dim)
    r = q.T @ mean_p @ q
    asym = float(np.max(np.abs(r - r.T)))
    vals = np.linalg.eigvalsh((r + r.T) / 2.0)
    return vals, asym


def check_definition3(stats, tol_mc=1e-2, tol_alg=1e-12):
    """Verify the random-consensus-matrix properties from sample moments.

    Clause by clause: (i) consensus vectors are fixed points (exact per
    sample, and for the empirical mean), (ii) the mean matrix is
    entrywise nonnegative, (iii) the spectral gap across the consensus
    complement is positive (reported as eps_hat = 1 - smallest restricted
    eigenvalue, with eps_uniform = 1 - largest restricted eigenvalue as
    the uniform-gap companion), (iv) the mean matrix is radial (spectral
    radius equals 2-norm), (v) the second moment norm is at least 1 and
    finite, reported as delta_hat = ||E[P'P]|| - 1.
    """
    if stats.count < 1:
        raise ValueError("no samples accumulated")
    mean_p = stats.mean_p
    vals, asym = _restricted_spectrum(mean_p, stats.n_agents, stats.param_dim)
    eps_hat = 1.0 - float(vals.min())
    eps_uniform = 1.0 - float(vals.max())
    norm_ptp = float(np.linalg.norm(stats.mean_ptp, 2))
    delta_hat = norm_ptp - 1.0
    spec_radius = float(np.max(np.abs(np.linalg.eigvals(mean_p))))
    two_norm = float(np.linalg.norm(mean_p, 2))
    report = {
        "samples": stats.count,
        "eps_hat": eps_hat,
        "eps_uniform": eps_uniform,
        "delta_hat": delta_hat,
        "mean_asymmetry": asym,
        "sample_row_dev": stats.max_row_dev,
        "sample_fix_dev": stats.max_fix_dev,
        "clause_i_pass": stats.max_fix_dev <= tol_alg,
        "clause_ii_pass": float(mean_p.min()) >= -tol_mc,
        "clause_iii_pass": eps_hat > 1e-9,
        "clause_iv_pass": abs(spec_radius - two_norm) <= tol_mc,
        "clause_v_pass": norm_ptp >= 1.0 - tol_mc and np.isfinite(norm_ptp),
        "row_stochastic_pass": stats.max_row_dev <= tol_alg,
        "mean_p_min_entry": float(mean_p.min()),
        "spectral_radius": spec_radius,
        "two_norm": two_norm,
    }
    report["passed"] = all(report[k] for k in (
        "clause_i_pass", "clause_ii_pass", "clause_iii_pass",
        "clause_iv_pass", "clause_v_pass", "row_stochastic_pass"))
    return report


def check_network_props(stats, tol_mc=1e-2, n_vectors=100, rng=None):
    """Spectral-norm, fixed-point, and uniform-gap checks on the mean matrix.

    Verifies ||mean P||_2 = 1 within tolerance, that the consensus
    projector is fixed on both sides, that the induced disagreement
    operator annihilates it, and the quadratic lower bound
    v' (I - mean P) v >= eps_uniform ||(I - J) v||^2 on random vectors.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    mean_p = stats.mean_p
    mn = mean_p.shape[0]
    j = dense_consensus_projector(stats.n_agents, stats.param_dim)
    l_bar = np.eye(mn) - mean_p
    vals, _ = _restricted_spectrum(mean_p, stats.n_agents, stats.param_dim)
    eps_uniform = 1.0 - float(vals.max())
    two_norm = float(np.linalg.norm(mean_p, 2))
    pj_dev = float(np.max(np.abs(mean_p @ j - j)))
    lj_dev = float(np.max(np.abs(l_bar @ j)))
    quad_margin = np.inf
    for _ in range(n_vectors):
        v = rng.standard_normal(mn)
        lhs = float(v @ (l_bar @ v))
        rhs = eps_uniform * float(np.sum(((np.eye(mn) - j) @ v) ** 2))
        quad_margin = min(quad_margin, lhs - rhs)
    report = {
        "two_norm": two_norm,
        "norm_pass": abs(two_norm - 1.0) <= tol_mc,
        "pj_dev": pj_dev,
        "pj_pass": pj_dev <= tol_mc,
        "lj_dev": lj_dev,
        "lj_pass": lj_dev <= tol_mc,
        "eps_uniform": eps_uniform,
        "quad_margin": quad_margin,
        "quad_pass": quad_margin >= -tol_mc,
    }
    report["passed"] = all(report[k] for k in (
        "norm_pass", "pj_pass", "lj_pass", "quad_pass"))
    return report


def _zero_mean_check(total, total_sq, count):
    """Max |mean| in units of its standard error, plus the raw max."""
    mean = total / count
    var = np.maximum(total_sq / count - mean ** 2, 0.0)
    se = np.sqrt(var / count)
    zero_se = se == 0.0
    ratio = np.where(zero_se, np.where(np.abs(mean) > 0, np.inf, 0.0),
                     np.abs(mean) / np.where(zero_se, 1.0, se))
    return float(np.max(ratio)), float(np.max(np.abs(mean)))


def check_assumption3(stats, se_limit=3.0):
    """Zero-mean and cross-moment checks on the noise companions.

    Tests E[W] = 0, E[n] = 0, E[P'W] = 0, E[P'n] = 0 within ``se_limit``
    standard errors, and reports the empirical moment bounds (squared
    matrix norms) that must be finite.
    """
    c = stats.count
    if c < 2:
        raise ValueError("need at least two samples")
    checks = {
        "w": _zero_mean_check(stats.sum_w, stats.sum_w2, c),
        "n": _zero_mean_check(stats.sum_n, stats.sum_n2, c),
        "ptw": _zero_mean_check(stats.sum_ptw, stats.sum_ptw2, c),
        "ptn": _zero_mean_check(stats.sum_ptn, stats.sum_ptn2, c),
    }
    report = {"samples": c}
    for name, (se_ratio, max_mean) in checks.items():
        report[f"{name}_se_ratio"] = se_ratio
        report[f"{name}_max_mean"] = max_mean
        report[f"{name}_pass"] = se_ratio <= se_limit
    report["a0_hat"] = stats.max_p_norm2
    report["b0_hat"] = stats.sum_w_norm2 / c
    report["c0_hat"] = stats.sum_n_norm2 / c
    report["moments_finite"] = all(np.isfinite(report[k]) for k in
                                   ("a0_hat", "b0_hat", "c0_hat"))
    report["passed"] = report["moments_finite"] and all(
        report[f"{k}_pass"] for k in checks)
    return report


def check_unbiasedness(n_rounds, positions, noise, params, streams,
                       lambdas=None, se_limit=3.0, coordinate_coherent=True):
    """Monte Carlo unbiasedness of the aggregation estimates.

    With fixed roles and inputs, the round estimates should average to the
    link-weighted sums: E[v_hat] = sum_j nu_bar_jr lambda_j and
    E[v_prime_hat] = sum_j nu_bar_jr, where nu_bar_jr is transmit power
    times the mean link gain.  Deviations are reported in units of the
    empirical standard error.
    """
    from .channel import make_topology
    from .otac import run_vector_round

    positions = np.asarray(positions, dtype=float)
    n = positions.shape[0]
    if lambdas is None:
        lambdas = np.linspace(0.05, 0.95, n)[:, None]
    lambdas = np.asarray(lambdas, dtype=float)
    role_tx = np.arange(n) < n // 2   # fixed split keeps expectations fixed
    if not role_tx.any() or role_tx.all():
        raise ValueError("need at least one transmitter and one receiver")
    topology = make_topology(positions, role_tx)
    rx = ~role_tx
    nu_bar = params.peak_power * topology.link_var * topology.active_links()
    exp_vp = nu_bar.sum(axis=0)[rx][:, None]             # (R, 1)
    exp_v = (nu_bar.T @ lambdas)[rx]                     # (R, M)
    sum_v = np.zeros_like(exp_v)
    sum_v2 = np.zeros_like(exp_v)
    sum_vp = np.zeros_like(lambdas[rx])
    sum_vp2 = np.zeros_like(lambdas[rx])
    for _ in range(n_rounds):
        res = run_vector_round(lambdas, topology, noise, params, streams,
                               coordinate_coherent=coordinate_coherent)
        v = res.v_hat[rx]
        vp = res.v_prime_hat[rx]
        sum_v += v
        sum_v2 += v ** 2
        sum_vp += vp
        sum_vp2 += vp ** 2

    def ratios(total, total_sq, expected):
        mean = total / n_rounds
        var = np.maximum(total_sq / n_rounds - mean ** 2, 0.0)
        se = np.sqrt(var / n_rounds)
        dev = np.abs(mean - expected)
        ratio = np.where(se == 0.0, np.where(dev > 0, np.inf, 0.0),
                         dev / np.where(se == 0.0, 1.0, se))
        return float(np.max(ratio)), float(np.max(dev))

    v_ratio, v_dev = ratios(sum_v, sum_v2, exp_v)
    vp_ratio, vp_dev = ratios(sum_vp, sum_vp2, exp_vp)
    report = {
        "rounds": n_rounds,
        "v_se_ratio": v_ratio,
        "v_max_dev": v_dev,
        "v_pass": v_ratio <= se_limit,
        "vp_se_ratio": vp_ratio,
        "vp_max_dev": vp_dev,
        "vp_pass": vp_ratio <= se_limit,
    }
    report["passed"] = report["v_pass"] and report["vp_pass"]
    return report


def format_report(report, title=None):
    """Render a report dict as key: value lines."""
    lines = [] if title is None else [title]
    for key, value in report.items():
        if isinstance(value, float):
            lines.append(f"{key}: {value:.6g}")
        else:
            lines.append(f"{key}: {value}")
    return "\n".join(lines)


def sample_rounds(n_samples, positions, noise, params, streams,
                  lambdas=None, gamma=None, connected=True,
                  coordinate_coherent=True, collect=None):
    """Run repeated aggregation rounds on fixed positions and accumulate.

    Roles are re-flipped per round (all-receive when ``connected`` is
    False, which isolates every agent and makes each sample the identity).
    Returns (stats, gamma).  ``collect`` may be a list to also keep the
    raw samples.
    """
    from .channel import make_topology
    from .otac import gamma_for_topology, run_vector_round

    positions = np.asarray(positions, dtype=float)
    n = positions.shape[0]
    if lambdas is None:
        lambdas = np.linspace(-0.9, 0.9, n)[:, None] * np.ones((1, 1))
    lambdas = np.asarray(lambdas, dtype=float)
    m = lambdas.shape[1]
    stats = ConsensusMatrixStats(n_agents=n, param_dim=m)
    base = make_topology(positions, np.zeros(n, dtype=bool))
    if gamma is None:
        gamma = gamma_for_topology(base, params.peak_power)
    for _ in range(n_samples):
        if connected:
            role_tx = streams["roles"].random(n) < 0.5
        else:
            role_tx = np.zeros(n, dtype=bool)
        topology = make_topology(positions, role_tx)
        result = run_vector_round(lambdas, topology, noise, params, streams,
                                  coordinate_coherent=coordinate_coherent)
        sample = build_matrix_sample(result, lambdas, gamma)
        stats.add(sample)
        if collect is not None:
            collect.append((result, sample))
    return stats, gamma
