# experiments/cli.py
"""
Command-line front end.

    python -m experiments.cli synth    --config config/double_integrator.yaml
    python -m experiments.cli verify   --config ... --cert results/.../certificate.json
    python -m experiments.cli simulate --config ... [--cert ...] [--seed 3] [--horizon 60]
    python -m experiments.cli dpcheck  --config config/scalar_pair.yaml
    python -m experiments.cli example-double-integrator

Exit codes: 0 ok, 2 infeasible or violated check, 3 input error, 4 truncated run.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import List, Optional, Sequence

import numpy as np

from core.dpverify import check_bellman_decrease, check_value_iteration, value_iteration_scalar
from core.errors import ConfigError, DimensionMismatch, GammaTooSmall, GridTooCoarse, InfeasibleAtGamma, MinimaxError
from core.synthesis import Certificate, gamma_bisect, synth_certificate, verify_certificate
from experiments.make_results import plot_gain_bracket, plot_trajectory, run_summary, summary_table
from server.artifact_io import load_certificate, save_certificate, save_grids_csv, save_json, save_trajectory_csv
from server.audit_logger import RunLogger, RunRecord
from server.config_loader import StudyConfig, load_study_config
from simulators.plant_sim import simulate

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_INPUT = 3
EXIT_TRUNCATED = 4

DEFAULT_CONFIG = "config/double_integrator.yaml"
BELLMAN_TOL = 1e-6


def _cert_path(cfg: StudyConfig, args: argparse.Namespace) -> str:
    return args.cert or os.path.join(args.out_dir or cfg.out_dir, "certificate.json")


def _out_dir(cfg: StudyConfig, args: argparse.Namespace) -> str:
    return args.out_dir or cfg.out_dir


def _synthesize(cfg: StudyConfig, bisect: bool = False) -> Certificate:
    if cfg.gamma is not None and not bisect:
        return synth_certificate(cfg.models, cfg.game_spec(), cfg.synthesis)
    if cfg.gamma_range is None:
        raise ConfigError("bisection needs game.gamma_range")
    lo, hi = cfg.gamma_range
    gamma, cert = gamma_bisect(cfg.models, cfg.Q, cfg.R, lo, hi, steps=cfg.bisection_steps, opts=cfg.synthesis)
    print(f"gamma bisection on [{lo:g}, {hi:g}]: smallest feasible gamma {gamma:.6g}")
    return cert


def _certificate_for(cfg: StudyConfig, args: argparse.Namespace) -> Certificate:
    if args.cert:
        return load_certificate(args.cert)
    return _synthesize(cfg)


def _print_report(report) -> None:
    print(f"feasible     : {report.feasible}")
    print(f"margin       : {report.margin:.6e}")
    print(f"worst triple : {report.worst_triple} (slack {report.slacks[report.worst_triple]:.6e})")
    for (i, j), s in sorted(report.cone_slacks.items()):
        print(f"  P_{i}{j} eigenvalue slack : {s:.6e}")


def cmd_synth(cfg: StudyConfig, args: argparse.Namespace, runlog: RunLogger) -> int:
    try:
        cert = _synthesize(cfg, bisect=args.bisect)
    except (InfeasibleAtGamma, GammaTooSmall) as exc:
        print(f"INFEASIBLE: {exc}")
        runlog.log_run(RunRecord("synth", "INFEASIBLE", exc.reason, gamma=cfg.gamma, details=exc.details))
        return EXIT_INFEASIBLE

    report = verify_certificate(cfg.models, cfg.game_spec(cert.gamma), cert, tol=cfg.synthesis.tol)
    path = _cert_path(cfg, args)
    save_certificate(cert, path)
    print(f"gamma        : {cert.gamma:g}")
    _print_report(report)
    print(f"certificate  : {path}")
    runlog.log_run(RunRecord("synth", "OK", "CERTIFIED", gamma=cert.gamma, margin=report.margin, details={"path": path}))
    return EXIT_OK


def cmd_verify(cfg: StudyConfig, args: argparse.Namespace, runlog: RunLogger) -> int:
    if not args.cert:
        raise ConfigError("verify needs --cert")
    cert = load_certificate(args.cert)
    spec = cfg.game_spec(cert.gamma)
    report = verify_certificate(cfg.models, spec, cert, tol=cfg.synthesis.tol, strict=args.strict)
    _print_report(report)

    details = {"worst_triple": list(report.worst_triple), "strict": args.strict}
    if report.feasible:
        bell = check_bellman_decrease(cert, cfg.models, spec, samples=cfg.dpcheck.samples, seed=args.seed or cfg.dpcheck.seed,
                                      x_radius=cfg.dpcheck.x_radius)
        print(f"bellman check: max violation {bell.max_violation:.3e} over {bell.samples} samples")
        details["bellman_max_violation"] = bell.max_violation
    verdict = "OK" if report.feasible else "INFEASIBLE"
    runlog.log_run(RunRecord("verify", verdict, "VERIFIED" if report.feasible else "TRIPLE_VIOLATED",
                             gamma=cert.gamma, margin=report.margin, details=details))
    return EXIT_OK if report.feasible else EXIT_INFEASIBLE


def cmd_simulate(cfg: StudyConfig, args: argparse.Namespace, runlog: RunLogger) -> int:
    cert = _certificate_for(cfg, args)
    spec = cfg.game_spec(cert.gamma)
    out_dir = _out_dir(cfg, args)
    horizon = args.horizon or cfg.simulation.horizon
    x0 = cfg.default_x0()

    names, trajs = [], []
    any_truncated = False
    for run in cfg.simulation.runs:
        true_index = run.true_index if run.true_index is not None else cfg.simulation.true_index
        for s in range(run.seeds):
            dist = run.disturbance
            if args.seed is not None:
                dist = dist.with_seed(args.seed + s)
            elif run.seeds > 1:
                dist = dist.with_seed(dist.seed + s)
            name = run.name if run.seeds == 1 else f"{run.name}_{s}"
            traj = simulate(cfg.models, true_index, cert, spec, x0, horizon, dist, run.events,
                            policy=run.policy, overflow_limit=cfg.simulation.overflow_limit)
            baseline = simulate(cfg.models, true_index, cert, spec, x0, horizon, dist, run.events,
                                policy="oracle", overflow_limit=cfg.simulation.overflow_limit)
            save_trajectory_csv(traj, os.path.join(out_dir, f"{name}.csv"))
            plot_trajectory(traj, os.path.join(out_dir, f"{name}.svg"), baseline=baseline, title=name)
            any_truncated |= traj.truncated
            names.append(name)
            trajs.append(traj)
            print(f"{name:<28} steps={traj.steps:<4} payoff={traj.cum_payoff:.6g} truncated={traj.truncated}")

    summary = {
        "gamma": cert.gamma,
        "value_bound": float(np.max(np.einsum("a,ijab,b->ij", x0, cert.P, x0))),
        "runs": [run_summary(n, t) for n, t in zip(names, trajs)],
        "truncated": any_truncated,
    }
    save_json(summary, os.path.join(out_dir, "summary.json"))
    if trajs:
        summary_table(names, trajs).to_csv(os.path.join(out_dir, "summary.csv"), index=False, float_format="%.17g")
    verdict = "TRUNCATED" if any_truncated else "OK"
    runlog.log_run(RunRecord("simulate", verdict, "OVERFLOW" if any_truncated else "COMPLETED", gamma=cert.gamma,
                             details={"runs": names, "out_dir": out_dir}))
    return EXIT_TRUNCATED if any_truncated else EXIT_OK


def cmd_dpcheck(cfg: StudyConfig, args: argparse.Namespace, runlog: RunLogger) -> int:
    dp = cfg.dpcheck
    out_dir = _out_dir(cfg, args)
    try:
        cert: Optional[Certificate] = _certificate_for(cfg, args)
    except (InfeasibleAtGamma, GammaTooSmall) as exc:
        print(f"no certificate: {exc}")
        cert = None

    ok = True
    details = {}
    if cert is not None:
        spec = cfg.game_spec(cert.gamma)
        bell = check_bellman_decrease(cert, cfg.models, spec, samples=dp.samples,
                                      seed=args.seed if args.seed is not None else dp.seed, x_radius=dp.x_radius)
        print(f"bellman check: max violation {bell.max_violation:.3e} over {bell.samples} samples")
        details["bellman_max_violation"] = bell.max_violation
        ok &= bell.max_violation <= BELLMAN_TOL
    else:
        spec = cfg.game_spec()

    models = cfg.models
    if models.n == 1 and models.m == 1 and models.N <= 2:
        try:
            grids = value_iteration_scalar(models, spec, dp.grid, k_max=dp.k_max, cert=cert)
        except GridTooCoarse as exc:
            print(f"GRID TOO COARSE: {exc}")
            runlog.log_run(RunRecord("dpcheck", "VIOLATION", exc.reason, gamma=spec.gamma, details=exc.details))
            return EXIT_INFEASIBLE
        save_grids_csv(grids, os.path.join(out_dir, "value_grids.csv"))
        vi = check_value_iteration(grids, cert)
        print(f"value iteration: k_max={dp.k_max} monotone={vi.monotone} (worst gap {vi.worst_monotone_gap:.3e})")
        if vi.upper_ok is not None:
            print(f"upper bound    : {vi.upper_ok} (worst gap {vi.worst_upper_gap:.3e})")
        print(f"slope at x_max : {vi.slope:.6g}; grid_tol {vi.tolerances[-1]:.3e}")
        details.update({"monotone": vi.monotone, "upper_ok": vi.upper_ok, "slope": vi.slope})
        ok &= vi.monotone and vi.upper_ok is not False
    else:
        print("value iteration skipped: grids are built for one or two scalar models")

    runlog.log_run(RunRecord("dpcheck", "OK" if ok else "VIOLATION", "DP_CHECKED" if ok else "DP_VIOLATED",
                             gamma=spec.gamma, details=details))
    return EXIT_OK if ok else EXIT_INFEASIBLE


def cmd_example(cfg: Optional[StudyConfig], args: argparse.Namespace, runlog: RunLogger) -> int:
    from experiments.run_experiments import example_report

    out_dir = args.out_dir or (cfg.out_dir if cfg is not None else "results/double_integrator")
    report = example_report(seeds=args.seeds, horizon=args.horizon or 200, seed0=args.seed or 0)
    for line in report.lines():
        print(line)
    save_json(report.as_dict(), os.path.join(out_dir, "example_report.json"))
    plot_gain_bracket(report.white_gains + report.adversarial_gains, 16.8, 19.0, os.path.join(out_dir, "gain_bracket.svg"))
    runlog.log_run(RunRecord("example-double-integrator", "OK", "REPORTED", gamma=19.0, margin=report.margin,
                             details={"max_gain": report.max_gain}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="minimax-adapt", description="Minimax adaptive control studies")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", default=DEFAULT_CONFIG, help="YAML (or JSON) study config")
        p.add_argument("--cert", default=None, help="certificate JSON")
        p.add_argument("--out-dir", default=None, help="override output.out_dir")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--horizon", type=int, default=None)
        p.add_argument("--verbose", "-v", action="store_true")

    p = sub.add_parser("synth", help="synthesize and save a certificate")
    common(p)
    p.add_argument("--bisect", action="store_true", help="bisect over game.gamma_range even if gamma is set")

    p = sub.add_parser("verify", help="check a certificate's matrix inequalities")
    common(p)
    p.add_argument("--strict", action="store_true", help="dominate each triple by P_ik only")

    common(sub.add_parser("simulate", help="closed-loop runs, CSV/SVG/summary output"))
    common(sub.add_parser("dpcheck", help="Bellman sample check and scalar value iteration"))

    p = sub.add_parser("example-double-integrator", help="double integrator with unknown input sign")
    common(p)
    p.add_argument("--seeds", type=int, default=50)
    return parser


COMMANDS = {
    "synth": cmd_synth,
    "verify": cmd_verify,
    "simulate": cmd_simulate,
    "dpcheck": cmd_dpcheck,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    try:
        if args.horizon is not None and args.horizon < 1:
            raise ConfigError("--horizon must be >= 1")
        if args.command == "example-double-integrator":
            cfg = load_study_config(args.config) if os.path.exists(args.config) else None
            runlog = RunLogger(cfg.db_path if cfg else "logs/runs.sqlite", cfg.event_log_path if cfg else "logs/runs.jsonl")
            return cmd_example(cfg, args, runlog)
        cfg = load_study_config(args.config)
        runlog = RunLogger(cfg.db_path, cfg.event_log_path)
        return COMMANDS[args.command](cfg, args, runlog)
    except (ConfigError, DimensionMismatch) as exc:
        print(f"INPUT ERROR [{exc.reason}]: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except MinimaxError as exc:
        print(f"FAILED [{exc.reason}]: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


def run(argv: Optional[List[str]] = None) -> None:
    sys.exit(main(argv))


if __name__ == "__main__":
    run()
