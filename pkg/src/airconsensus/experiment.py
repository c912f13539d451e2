"""End-to-end simulation loop, metrics, sweeps, and energy accounting.

One run couples the mobility process, the per-agent local learning step,
one communication scheme, and the mixing step, all behind per-iteration
barriers: every agent's local output exists before any communication, and
all payloads are delivered before any mixing.  Monte Carlo runs use
independent counter-based substreams keyed by run index, so results are
identical no matter how runs are spread over threads.
"""

import concurrent.futures
from dataclasses import dataclass, field, replace

import numpy as np

from . import baselines  # noqa: F401  (registers the communication backends)
from .apsm import (AverageEstimate, NeighborEstimate, OtaEstimate,
                   RoundContext, get_backend)
from .channel import MobilityState, advance_mobility, noise_from_snr
from .core import default_schedules, named_streams
from .kernel_model import (box_operator, features, load_dataset,
                           make_dictionary, project_all, sample_dataset,
                           synthetic_field)
from .otac import ProtocolParams, consensus_update
from .superiorize import SparsityState, default_varsigma, perturbation_z

SCHEMES = ("NOC", "CEN", "DBC", "ANB", "OTA-C", "OTA-CS")
NMSE_FLOOR_DB = -80.0


@dataclass(frozen=True)
class SimConfig:
    """Full description of one simulation (one scheme, many runs)."""

    scheme: str = "OTA-C"
    n_agents: int = 30
    n_kernels: int = 2
    features_per_kernel: int = 10
    widths: tuple = (300.0, 600.0)
    b_symbols: int = 4
    snr_db: float = -20.0
    iterations: int = 5000
    n_runs: int = 10
    master_seed: int = 2024
    schedule_family: str = "snr"
    mu: float = 0.5
    eps_k: float = 0.3
    init: str = "zeros"
    log_stride: int = 50
    grid_n: int = 20
    carrier_hz: float = 3e9
    tx_power_w: float = 1e-3
    ref_distance_m: float = 500.0
    renewal_mean: float = 300.0
    measure_noise_var: float = 0.09
    measure_stride: int = 1
    peak_power: float = 75.0
    field_seed: int = 10
    dataset_seed: int = 11
    dataset_rows: int = 4000
    dataset_path: str = ""
    dict_seed: int = 1
    quant_levels: int = 40
    header_bits: int = 64
    outage_target: float = 0.2
    bandwidth_hz: float = 1e6
    anb_gate: float = 2.0
    anb_power: float = 1.0
    ota_gate: float = 2.0
    gamma_scale: float = 0.6
    gamma_decay: float = 0.0
    gamma_floor: float = 0.0
    ota_coherent: bool = False
    threads: int = 1

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; "
                             f"choose from {SCHEMES}")
        for name in ("n_agents", "n_kernels", "features_per_kernel",
                     "b_symbols", "iterations", "n_runs", "log_stride",
                     "grid_n", "dataset_rows"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.init not in ("zeros", "uniform"):
            raise ValueError("init must be 'zeros' or 'uniform'")

    @property
    def sparse(self):
        return self.scheme == "OTA-CS"

    @property
    def signed_dictionary(self):
        # the sparse variant works with nonnegative weights over a
        # sign-duplicated dictionary; the others use a signed box instead
        return self.sparse

    @property
    def param_dim(self):
        base = self.n_kernels * self.features_per_kernel
        return 2 * base if self.signed_dictionary else base

    @property
    def value_range(self):
        return (0.0, 1.0) if self.sparse else (-1.0, 1.0)

    def comparison_key(self):
        """Fields that must match for cross-scheme comparisons."""
        return (self.n_agents, self.n_kernels, self.features_per_kernel,
                self.b_symbols, self.snr_db, self.iterations, self.n_runs,
                self.master_seed, self.field_seed, self.dataset_seed,
                self.dataset_rows, self.dataset_path)


@dataclass
class MetricLog:
    """Per-logged-iteration metric rows, averaged over Monte Carlo runs."""

    scheme: str
    comparison_key: tuple
    iterations: np.ndarray
    nmse_db: np.ndarray
    residual: np.ndarray
    mean_cost: np.ndarray
    nonzero_frac: np.ndarray
    energy: np.ndarray
    channel_uses: np.ndarray
    bound_checks: int = 0
    mix_fallbacks: int = 0
    runs: list = field(default_factory=list)

    COLUMNS = ("iteration", "nmse_db", "residual", "mean_cost",
               "nonzero_frac", "energy", "channel_uses")

    @property
    def final_nmse(self):
        return float(self.nmse_db[-1])

    @property
    def final_energy(self):
        return float(self.energy[-1])

    def to_csv(self, path):
        arrays = (self.iterations, self.nmse_db, self.residual,
                  self.mean_cost, self.nonzero_frac, self.energy,
                  self.channel_uses)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(self.COLUMNS) + "\n")
            for row in zip(*arrays):
                fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v):
    if float(v) == int(v) and abs(v) < 1e15:
        return str(int(v))
    return f"{float(v):.10g}"


def evaluation_grid(grid_n=20, domain=1000.0):
    """Regular grid_n^3 lattice over the field domain."""
    axis = np.linspace(0.0, domain, grid_n)
    gx, gy, gz = np.meshgrid(axis, axis, axis, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])


def compute_nmse(h_all, dictionary, field_fn, grid_xyz):
    """Variance-normalized mean square prediction error, in dB.

    The error is averaged over agents and grid points and normalized by
    the field variance over the grid; perfect predictions are floored at
    the reporting limit instead of diverging.
    """
    phi = features(dictionary, grid_xyz)
    truth = field_fn(grid_xyz)
    var = float(np.var(truth))
    if var == 0.0:
        raise ValueError("field is constant over the grid")
    preds = np.asarray(h_all, dtype=float) @ phi.T
    mse = float(np.mean((preds - truth[None, :]) ** 2))
    return _to_db(mse / var)


def _to_db(nmse_linear):
    floor = 10.0 ** (NMSE_FLOOR_DB / 10.0)
    return 10.0 * np.log10(max(nmse_linear, floor))


def _prepare_shared(config):
    dictionary = make_dictionary(config.n_kernels, config.features_per_kernel,
                                 config.widths, config.signed_dictionary,
                                 seed=config.dict_seed)
    field_fn = synthetic_field(config.field_seed)
    if config.dataset_path:
        xyz, values = load_dataset(config.dataset_path)
    else:
        xyz, values = sample_dataset(field_fn, config.dataset_rows,
                                     config.dataset_seed)
    grid = evaluation_grid(config.grid_n)
    grid_phi = features(dictionary, grid)
    truth = field_fn(grid)
    params = ProtocolParams(
        b_symbols=config.b_symbols,
        delta_min=config.value_range[0],
        delta_max=config.value_range[1],
        peak_power=config.peak_power,
    )
    return {
        "dictionary": dictionary,
        "dataset": (xyz, values),
        "grid_phi": grid_phi,
        "grid_truth": truth,
        "grid_var": float(np.var(truth)),
        "params": params,
    }


def _make_backend(config, shared):
    if config.scheme in ("OTA-C", "OTA-CS"):
        return get_backend(config.scheme, params=shared["params"],
                           gate_factor=config.ota_gate,
                           gamma_scale=config.gamma_scale,
                           gamma_decay=config.gamma_decay,
                           gamma_floor=config.gamma_floor,
                           coordinate_coherent=config.ota_coherent)
    if config.scheme == "DBC":
        dbc = baselines.DbcConfig(
            quant_levels=config.quant_levels, header_bits=config.header_bits,
            outage_target=config.outage_target,
            ref_distance_m=config.ref_distance_m,
            bandwidth_hz=config.bandwidth_hz)
        # the slot holds as much airtime as one aggregation round would use,
        # and the broadcast runs at the nominal power that defines snr_db
        slot = (config.param_dim + 1) * config.b_symbols
        return get_backend("DBC", config=dbc,
                           snr_mean_linear=10.0 ** (config.snr_db / 10.0),
                           peak_power=1.0, slot_symbols=slot)
    if config.scheme == "ANB":
        anb = baselines.AnbConfig(training_symbols=config.b_symbols,
                                  power_gate_factor=config.anb_gate,
                                  tx_power=config.anb_power)
        return get_backend("ANB", params=shared["params"], config=anb)
    return get_backend(config.scheme)


def apply_payloads(lambdas, payloads, beta):
    """Vectorized mixing of one payload batch; matches per-agent mix_step."""
    out = np.asarray(lambdas, dtype=float).copy()
    ota_idx = [k for k, p in enumerate(payloads) if isinstance(p, OtaEstimate)]
    vec_idx = [k for k, p in enumerate(payloads)
               if isinstance(p, (AverageEstimate, NeighborEstimate))]
    if ota_idx:
        v = np.stack([payloads[k].v_hat for k in ota_idx])
        vp = np.stack([payloads[k].v_prime_hat for k in ota_idx])
        gam = np.array([payloads[k].gamma for k in ota_idx])[:, None]
        out[ota_idx] = consensus_update(out[ota_idx], v, vp, beta, gam)
    if vec_idx:
        vecs = np.stack([payloads[k].vector for k in vec_idx])
        out[vec_idx] = (1.0 - beta) * out[vec_idx] + beta * vecs
    return out


def _single_run(config, run_index, shared):
    streams = named_streams(config.master_seed, run_index)
    n = config.n_agents
    m = config.param_dim
    dictionary = shared["dictionary"]
    params = shared["params"]
    xyz, values = shared["dataset"]
    noise = noise_from_snr(config.snr_db, config.ref_distance_m,
                           config.carrier_hz, config.tx_power_w)
    schedules = default_schedules(config.snr_db, config.schedule_family,
                                  config.mu, sparsity=config.sparse)
    box = box_operator(config.value_range)
    backend = _make_backend(config, shared)
    mobility = MobilityState(
        dataset_xyz=xyz, dataset_val=values, n_agents=n,
        renewal_mean=config.renewal_mean,
        measure_noise_var=config.measure_noise_var,
        measure_stride=config.measure_stride,
        carrier_hz=config.carrier_hz, tx_power_w=config.tx_power_w)

    lo, hi = config.value_range
    if config.init == "uniform":
        h = streams["init"].uniform(lo, hi, (n, m))
    else:
        h = np.zeros((n, m))
    prev_y = np.zeros((n, m))

    grid_phi = shared["grid_phi"]
    truth = shared["grid_truth"]
    grid_var = shared["grid_var"]

    log_iters, log_rows = [], []
    energy_total = 0.0
    uses_total = 0.0
    symbols_total = 0.0
    clamp_total = 0
    fallbacks = 0
    bound_checks = 0
    phis = None

    for i in range(config.iterations):
        topology, renewed = advance_mobility(mobility, i, streams)
        if renewed:
            phis = features(dictionary, mobility.positions)
        meas = mobility.measurements

        # local step: relaxed projection onto the current hyperslab, then
        # optional sparsity perturbation, then the box operator
        proj = project_all(phis, meas, config.eps_k, h)
        y = h + config.mu * (proj - h)
        if config.sparse:
            zeta_i = schedules.zeta(i)
            st = SparsityState(prev_y=prev_y, zeta_i=zeta_i,
                               varsigma_i=default_varsigma(zeta_i))
            z = perturbation_z(y, st)
            bound_checks += 1
            lam = box(y + zeta_i * z)
            # reweight against the weights actually broadcast last round:
            # a zeroed component then keeps its wide threshold and small
            # revivals get zeroed again, so the support stays sparse.
            # Reweighting by the raw pre-threshold vector collapses the
            # threshold after one revival and the support fills back in.
            prev_y = lam
        else:
            lam = box(y)

        beta_i = schedules.beta(i)
        ctx = RoundContext(lambdas=lam, topology=topology, noise=noise,
                           params=params, streams=streams, iteration=i)
        payloads, ledger = backend.communicate(ctx)
        h = apply_payloads(lam, payloads, beta_i)

        energy_total += ledger["energy"]
        uses_total += ledger["channel_uses"]
        symbols_total += ledger["symbols"]
        clamp_total += ledger["clamped"]
        fallbacks += sum(1 for p in payloads if p is None)

        if (i + 1) % config.log_stride == 0 or i == 0 \
                or i == config.iterations - 1:
            preds = h @ grid_phi.T
            mse = float(np.mean((preds - truth[None, :]) ** 2))
            resid = float(np.linalg.norm(h - h.mean(axis=0, keepdims=True)))
            r = np.einsum("nm,nm->n", phis, h) - meas
            nrm = np.sqrt(np.einsum("nm,nm->n", phis, phis))
            dist = np.maximum(np.abs(r) - config.eps_k, 0.0) / np.where(
                nrm > 0, nrm, 1.0)
            log_iters.append(i)
            log_rows.append((
                mse / grid_var,
                resid,
                float(np.mean(dist ** 2)),
                float(np.mean(np.abs(lam) > 0)),
                energy_total,
                uses_total,
            ))

    rows = np.asarray(log_rows)
    return {
        "iterations": np.asarray(log_iters),
        "nmse_lin": rows[:, 0],
        "residual": rows[:, 1],
        "mean_cost": rows[:, 2],
        "nonzero_frac": rows[:, 3],
        "energy": rows[:, 4],
        "channel_uses": rows[:, 5],
        "fallbacks": fallbacks,
        "bound_checks": bound_checks,
        "clamped": clamp_total,
        "symbols": symbols_total,
    }


def run_simulation(config, threads=None, keep_runs=False):
    """Run all Monte Carlo repetitions of one configuration.

    Error curves are averaged in the linear domain before conversion to
    dB.  ``threads`` caps the worker pool (default from the config); the
    result is bitwise independent of the thread count because every run
    draws from its own substreams and reduction happens in run order.
    """
    workers = threads if threads is not None else config.threads
    indices = range(config.n_runs)
    shared = _prepare_shared(config)
    if workers and workers > 1:
        with concurrent.futures.ThreadPoolExecutor(workers) as pool:
            runs = list(pool.map(
                lambda r: _single_run(config, r, shared), indices))
    else:
        runs = [_single_run(config, r, shared) for r in indices]

    nmse_lin = np.mean([r["nmse_lin"] for r in runs], axis=0)
    floor = 10.0 ** (NMSE_FLOOR_DB / 10.0)
    nmse_db = 10.0 * np.log10(np.maximum(nmse_lin, floor))
    log = MetricLog(
        scheme=config.scheme,
        comparison_key=config.comparison_key(),
        iterations=runs[0]["iterations"],
        nmse_db=nmse_db,
        residual=np.mean([r["residual"] for r in runs], axis=0),
        mean_cost=np.mean([r["mean_cost"] for r in runs], axis=0),
        nonzero_frac=np.mean([r["nonzero_frac"] for r in runs], axis=0),
        energy=np.mean([r["energy"] for r in runs], axis=0),
        channel_uses=np.mean([r["channel_uses"] for r in runs], axis=0),
        bound_checks=sum(r["bound_checks"] for r in runs),
        mix_fallbacks=sum(r["fallbacks"] for r in runs),
    )
    if keep_runs:
        log.runs = runs
    return log


def sweep(axis, values, base_config, schemes=None, threads=None):
    """Final-error table over an axis ("snr" or "n_agents") and schemes.

    Every (value, scheme) cell reuses the same master seed, so schemes
    face identical channel and mobility randomness.
    """
    if axis not in ("snr", "n_agents"):
        raise ValueError("axis must be 'snr' or 'n_agents'")
    if len(values) == 0:
        raise ValueError("values must be nonempty")
    schemes = list(schemes) if schemes else [base_config.scheme]
    table = np.empty((len(values), len(schemes)))
    logs = {}
    for a, value in enumerate(values):
        for s, scheme in enumerate(schemes):
            if axis == "snr":
                cfg = replace(base_config, scheme=scheme, snr_db=float(value))
            else:
                cfg = replace(base_config, scheme=scheme, n_agents=int(value))
            log = run_simulation(cfg, threads=threads)
            table[a, s] = log.final_nmse
            logs[(value, scheme)] = log
    return {"axis": axis, "values": list(values), "schemes": schemes,
            "final_nmse": table, "logs": logs}


def sweep_to_csv(result, path):
    label = {"snr": "SNR", "n_agents": "N"}[result["axis"]]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join([label] + result["schemes"]) + "\n")
        for value, row in zip(result["values"], result["final_nmse"]):
            fh.write(",".join([_fmt(value)] + [_fmt(v) for v in row]) + "\n")


def curves_to_csv(logs, path):
    """Combined per-iteration error curves, one column per scheme."""
    schemes = [log.scheme for log in logs]
    iters = logs[0].iterations
    for log in logs:
        if not np.array_equal(log.iterations, iters):
            raise ValueError("logs use different logging strides")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(["Iter"] + schemes) + "\n")
        for k, it in enumerate(iters):
            row = [_fmt(it)] + [_fmt(log.nmse_db[k]) for log in logs]
            fh.write(",".join(row) + "\n")


def energy_report(log_plain, log_sparse):
    """Energy savings of the sparse variant relative to the plain one.

    Both logs must come from matched configurations (same seeds, sizes,
    schedule); returns the savings fraction and the final nonzero-weight
    fraction of the sparse run.
    """
    if log_plain.comparison_key != log_sparse.comparison_key:
        raise ValueError("energy comparison requires matched configurations")
    e_plain = log_plain.final_energy
    e_sparse = log_sparse.final_energy
    if e_plain == 0.0:
        savings = 0.0 if e_sparse == 0.0 else -np.inf
    else:
        savings = 1.0 - e_sparse / e_plain
    return {
        "savings": float(savings),
        "nonzero_frac": float(log_sparse.nonzero_frac[-1]),
        "energy_plain": e_plain,
        "energy_sparse": e_sparse,
    }
