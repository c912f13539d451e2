"""Command line interface: simulation runs, statistical checks, datasets.

Exit codes: 0 on success, 1 when a verification suite fails its checks,
2 on usage or configuration errors.
"""

import argparse
import configparser
import dataclasses
import os
import sys

import numpy as np

from .channel import noise_from_snr
from .consensus_analysis import (check_assumption3, check_definition3,
                                 check_network_props, check_unbiasedness,
                                 format_report, matrix_form_equivalence,
                                 sample_rounds)
from .core import named_streams
from .experiment import (SCHEMES, SimConfig, _fmt, curves_to_csv,
                         run_simulation, sweep, sweep_to_csv)
from .kernel_model import sample_dataset, save_dataset, synthetic_field
from .otac import ProtocolParams, run_vector_round

ALL_SCHEMES = tuple(SCHEMES)

PRESETS = {
    "fig2": {"mode": "curves", "schemes": ALL_SCHEMES, "values": ()},
    "fig3": {"mode": "n_agents", "schemes": ALL_SCHEMES[:5],
             "values": (10.0, 20.0, 30.0, 40.0, 50.0)},
    "fig4": {"mode": "snr", "schemes": ALL_SCHEMES[:5],
             "values": (-40.0, -30.0, -20.0, -10.0, 0.0, 10.0)},
}


@dataclasses.dataclass(frozen=True)
class RunPlan:
    """Fully resolved description of a `run` invocation."""

    mode: str = "curves"            # curves | snr | n_agents
    values: tuple = ()
    schemes: tuple = ("OTA-C",)
    base: SimConfig = SimConfig()

    def __post_init__(self):
        if self.mode not in ("curves", "snr", "n_agents"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode != "curves" and len(self.values) == 0:
            raise ValueError("sweep modes need a nonempty values list")
        if not self.schemes:
            raise ValueError("schemes must be nonempty")
        for s in self.schemes:
            if s not in SCHEMES:
                raise ValueError(f"unknown scheme {s!r}")


def _coerce(text, default):
    if isinstance(default, bool):
        return text.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, tuple):
        return tuple(float(x) for x in text.split(","))
    return text.strip()


def plan_from_sections(run_sec, sim_sec, start=None):
    """Build a RunPlan from [run] and [simulation] key dicts."""
    plan = start if start is not None else RunPlan()
    mode = run_sec.get("mode", plan.mode).strip()
    schemes = plan.schemes
    if "schemes" in run_sec:
        schemes = tuple(s.strip() for s in run_sec["schemes"].split(",")
                        if s.strip())
    values = plan.values
    if "values" in run_sec:
        values = tuple(float(x) for x in run_sec["values"].split(",")
                       if x.strip())
    overrides = {}
    for f in dataclasses.fields(SimConfig):
        if f.name == "scheme" or f.name not in sim_sec:
            continue
        overrides[f.name] = _coerce(sim_sec[f.name],
                                    getattr(plan.base, f.name))
    unknown = set(sim_sec) - {f.name for f in dataclasses.fields(SimConfig)}
    if unknown:
        raise ValueError(f"unknown simulation keys: {sorted(unknown)}")
    base = dataclasses.replace(plan.base, **overrides) if overrides \
        else plan.base
    return RunPlan(mode=mode, values=values, schemes=schemes, base=base)


def parse_config_text(text, start=None):
    parser = configparser.ConfigParser()
    parser.read_string(text)
    run_sec = dict(parser["run"]) if parser.has_section("run") else {}
    sim_sec = dict(parser["simulation"]) \
        if parser.has_section("simulation") else {}
    start = apply_preset(run_sec.pop("preset", None), start)
    return plan_from_sections(run_sec, sim_sec, start)


def apply_preset(name, start=None):
    if name is None:
        return start if start is not None else RunPlan()
    name = name.strip()
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; "
                         f"choose from {sorted(PRESETS)}")
    spec = PRESETS[name]
    base = start.base if start is not None else SimConfig()
    return RunPlan(mode=spec["mode"], values=spec["values"],
                   schemes=spec["schemes"], base=base)


def plan_to_ini(plan):
    """Render the fully resolved plan; parsing it back gives the same plan."""
    lines = ["[run]", f"mode = {plan.mode}",
             "schemes = " + ",".join(plan.schemes)]
    if plan.mode != "curves":
        lines.append("values = " + ",".join(_fmt(v) for v in plan.values))
    lines += ["", "[simulation]"]
    for f in dataclasses.fields(SimConfig):
        if f.name == "scheme":
            continue
        value = getattr(plan.base, f.name)
        if isinstance(value, tuple):
            value = ",".join(_fmt(x) for x in value)
        elif isinstance(value, float):
            value = _fmt(value)
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def resolve_plan(args):
    plan = apply_preset(args.preset)
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            plan = parse_config_text(fh.read(), start=plan)
    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.threads is not None:
        overrides["threads"] = args.threads
    if overrides:
        plan = dataclasses.replace(
            plan, base=dataclasses.replace(plan.base, **overrides))
    return plan


def cmd_run(args):
    try:
        plan = resolve_plan(args)
    except (ValueError, OSError, configparser.Error) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    os.makedirs(args.out, exist_ok=True)
    resolved = plan_to_ini(plan)
    sys.stdout.write(resolved)
    with open(os.path.join(args.out, "config.resolved.ini"), "w",
              encoding="utf-8", newline="\n") as fh:
        fh.write(resolved)

    if plan.mode == "curves":
        logs = []
        for scheme in plan.schemes:
            cfg = dataclasses.replace(plan.base, scheme=scheme)
            log = run_simulation(cfg)
            logs.append(log)
            log.to_csv(os.path.join(args.out, f"curve_{scheme}.csv"))
            print(f"{scheme}: final error {log.final_nmse:.2f} dB, "
                  f"energy {log.final_energy:.6g}")
        curves_to_csv(logs, os.path.join(args.out, "curves.csv"))
    else:
        result = sweep(plan.mode, plan.values, plan.base, plan.schemes,
                       threads=plan.base.threads)
        name = {"snr": "sweep_snr.csv", "n_agents": "sweep_agents.csv"}
        sweep_to_csv(result, os.path.join(args.out, name[plan.mode]))
        for a, value in enumerate(result["values"]):
            row = ", ".join(
                f"{s}={result['final_nmse'][a, k]:.2f}"
                for k, s in enumerate(result["schemes"]))
            print(f"{plan.mode}={_fmt(value)}: {row}")
    print(f"results written to {args.out}")
    return 0


def _verify_fixture(args):
    rng = np.random.default_rng(args.seed)
    positions = rng.uniform(0.0, 1000.0, (args.agents, 3))
    lambdas = np.linspace(-0.9, 0.9, args.agents * args.dim)
    lambdas = lambdas.reshape(args.agents, args.dim)
    params = ProtocolParams(b_symbols=args.b_symbols, delta_min=-1.0,
                            delta_max=1.0)
    noise = noise_from_snr(args.snr_db)
    streams = named_streams(args.seed)
    return positions, lambdas, params, noise, streams


def cmd_verify(args):
    try:
        positions, lambdas, params, noise, streams = _verify_fixture(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    suite = args.suite

    if suite == "lemma1":
        lam = (lambdas + 1.0) / 2.0   # keep inputs inside the value range
        report = check_unbiasedness(args.samples, positions, noise, params,
                                    streams, lambdas=lam)
        print(format_report(report, "estimator unbiasedness"))
        return 0 if report["passed"] else 1

    if suite == "equivalence":
        worst = 0.0
        rng = np.random.default_rng(args.seed + 1)
        from .channel import make_topology
        from .otac import gamma_for_topology
        failures = 0
        for _ in range(args.samples):
            role_tx = streams["roles"].random(args.agents) < 0.5
            topology = make_topology(positions, role_tx)
            gamma = gamma_for_topology(topology, params.peak_power)
            lam = rng.uniform(-0.9, 0.9, lambdas.shape)
            result = run_vector_round(lam, topology, noise, params, streams)
            ok, diff = matrix_form_equivalence(lam, result, beta=0.7,
                                               gamma=gamma)
            worst = max(worst, diff)
            failures += 0 if ok else 1
        print(f"traces: {args.samples}")
        print(f"max_abs_diff: {worst:.3e}")
        print(f"failures: {failures}")
        print(f"passed: {failures == 0}")
        return 0 if failures == 0 else 1

    stats, _ = sample_rounds(args.samples, positions, noise, params, streams,
                             lambdas=lambdas,
                             connected=not args.disconnected)
    if suite == "definition3":
        report = check_definition3(stats)
        network = check_network_props(stats)
        print(format_report(report, "consensus matrix properties"))
        print(format_report(network, "network operator properties"))
        passed = report["passed"] and network["passed"]
        return 0 if passed else 1

    report = check_assumption3(stats)
    print(format_report(report, "noise moment checks"))
    return 0 if report["passed"] else 1


def cmd_gen_dataset(args):
    field = synthetic_field(args.field_seed)
    xyz, values = sample_dataset(field, args.rows, args.seed)
    save_dataset(args.out, xyz, values)
    print(f"wrote {args.rows} rows to {args.out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="airconsensus",
        description="Decentralized learning over simulated fading channels")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run simulations and write CSV files")
    p_run.add_argument("--config", help="INI file with [run]/[simulation]")
    p_run.add_argument("--preset", choices=sorted(PRESETS),
                       help="named experiment recipe (config keys override)")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--seed", type=int, help="override the master seed")
    p_run.add_argument("--threads", type=int, help="worker thread count")
    p_run.set_defaults(func=cmd_run)

    p_ver = sub.add_parser("verify",
                           help="statistical checks of the aggregation round")
    p_ver.add_argument("suite", choices=("definition3", "lemma1",
                                         "assumption3", "equivalence"))
    p_ver.add_argument("--samples", type=int, default=10000,
                       help="Monte Carlo rounds or traces")
    p_ver.add_argument("--agents", type=int, default=5)
    p_ver.add_argument("--dim", type=int, default=2,
                       help="parameter dimension of the fixture")
    p_ver.add_argument("--b-symbols", type=int, default=2)
    p_ver.add_argument("--snr-db", type=float, default=0.0)
    p_ver.add_argument("--seed", type=int, default=2024)
    p_ver.add_argument("--disconnected", action="store_true",
                       help="use the isolated fixture (no links at all)")
    p_ver.set_defaults(func=cmd_verify)

    p_gen = sub.add_parser("gen-dataset",
                           help="sample a synthetic field to CSV")
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--rows", type=int, default=4000)
    p_gen.add_argument("--seed", type=int, default=11,
                       help="sampling seed")
    p_gen.add_argument("--field-seed", type=int, default=10,
                       help="seed of the synthetic field shape")
    p_gen.set_defaults(func=cmd_gen_dataset)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
