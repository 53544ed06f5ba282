"""Command-line front end: ``rowfinite generate | simulate | linear-solve | verify | study``.

Exit codes: 0 ok, 2 usage or configuration error, 3 resource guard,
4 solver abort, 5 a check failed.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import geometry, harness, integrator, linop
from .errors import ConfigError, ResourceLimitError, RowFiniteError, SolverError

EXIT_OK, EXIT_USAGE, EXIT_RESOURCE, EXIT_SOLVER, EXIT_CHECK = 0, 2, 3, 4, 5


def _load_plan(args) -> tuple[harness.ExperimentPlan, str]:
    if getattr(args, "scenario", None):
        if args.config:
            raise ConfigError("give either a config file or --scenario, not both")
        data = harness.scenario_config(args.scenario, args.seed if args.seed is not None else 0)
        return harness.ExperimentPlan.from_dict(data), args.scenario
    if not args.config:
        raise ConfigError("a config file is required")
    path = Path(args.config)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    if getattr(args, "seed", None) is not None:
        data.setdefault("integration", {})["seeds"] = [args.seed]
    plan = harness.ExperimentPlan.from_dict(data, base_dir=path.parent)
    return plan, plan.output.get("prefix", path.stem)


def _out_dir(args, plan) -> Path:
    out = Path(args.out_dir or plan.output.get("dir", "rowfinite_out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, obj) -> None:
    path.write_text(integrator.dumps(obj) + "\n")


def cmd_generate(args) -> int:
    if args.lattice:
        if args.extent is None:
            raise ConfigError("--extent is required with --lattice")
        config = geometry.gen_lattice(args.dim, args.extent, args.spacing, args.radius, max_points=args.max_points)
    else:
        if args.intensity is None or args.box is None:
            raise ConfigError("--intensity and --box are required with --poisson")
        config = geometry.gen_poisson(args.dim, args.intensity, args.box, args.radius,
                                      seed=args.seed, max_points=args.max_points)
    text = json.dumps(config.to_dict(), sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_simulate(args) -> int:
    plan, prefix = _load_plan(args)
    out = _out_dir(args, plan)
    for seed in sorted(set(plan.seeds)):
        traj = harness.simulate(plan, seed)
        traj.write_csv(out / f"{prefix}_seed{seed}.csv")
        summary = traj.summary()
        summary.update(seed=seed, final_state=traj.final, final_lyapunov=traj.lyapunov_trace[-1])
        _write(out / f"{prefix}_seed{seed}_summary.json", summary)
    print(out)
    return EXIT_OK


def cmd_linear_solve(args) -> int:
    plan, prefix = _load_plan(args)
    out = _out_dir(args, plan)
    for seed in sorted(set(plan.seeds)):
        q0 = plan.q0(seed)
        traj = harness.simulate(plan, seed) if plan.C == "calibrated" else None
        C, m, info = harness.resolve_C(plan, traj, seed)
        A = linop.cutoff(linop.build_A(plan.config, C, m), plan.volume)
        L0 = plan.model.lyapunov(plan.config, q0)
        psi = integrator.comparison_trajectory(A, L0, plan.times, tol=args.tol)
        psi.write_csv(out / f"{prefix}_seed{seed}_psi.csv")
        _write(out / f"{prefix}_seed{seed}_psi.json", {"operator": info, **psi.summary()})
        if args.matrix:
            Path(args.matrix).write_text(A.to_coo_text())
    print(out)
    return EXIT_OK


def cmd_verify(args) -> int:
    plan, prefix = _load_plan(args)
    report = harness.run_checks(plan)
    out = _out_dir(args, plan)
    _write(out / f"{prefix}_report.json", report)
    for name, check in sorted(report["checks"].items()):
        print(f"{name}: {'pass' if check['passes'] else 'FAIL'}")
    return EXIT_OK if report["passes"] else EXIT_CHECK


def cmd_study(args) -> int:
    plan, prefix = _load_plan(args)
    report = harness.study(plan)
    out = _out_dir(args, plan)
    _write(out / f"{prefix}_study.json", report)
    conv = report["convergence"]
    print(f"convergence: {'pass' if conv['passes'] else 'FAIL'} (cauchy {conv['cauchy']:.3g})")
    uniq = report["uniqueness"]
    print(f"uniqueness: {'pass' if uniq['passes'] else 'FAIL'} (budget {uniq['budget']:.3g})")
    return EXIT_OK if report["passes"] else EXIT_CHECK


def _positive_float(text):
    val = float(text)
    if not val > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
    return val


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rowfinite", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a lattice or Poisson configuration as JSON")
    kind = gen.add_mutually_exclusive_group(required=True)
    kind.add_argument("--lattice", action="store_true", help="integer lattice {-extent..extent}^dim")
    kind.add_argument("--poisson", action="store_true", help="Poisson sample in a centred box")
    gen.add_argument("--dim", type=int, required=True)
    gen.add_argument("--radius", type=_positive_float, required=True, help="interaction radius r")
    gen.add_argument("--extent", type=int, help="lattice half-extent in sites")
    gen.add_argument("--spacing", type=_positive_float, default=1.0, help="lattice spacing")
    gen.add_argument("--intensity", type=_positive_float, help="Poisson intensity")
    gen.add_argument("--box", type=_positive_float, help="half-width of the Poisson box")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--max-points", type=int, default=geometry.DEFAULT_MAX_POINTS)
    gen.add_argument("--out", help="output path (stdout when omitted)")
    gen.set_defaults(func=cmd_generate)

    def run_parser(name, func, help_text, scenario=False):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", nargs="?", help="run configuration (JSON)")
        if scenario:
            p.add_argument("--scenario", choices=harness.SCENARIOS, help="use a built-in scenario")
        p.add_argument("--seed", type=int, help="override the initial-data seeds with one seed")
        p.add_argument("--out-dir", help="directory for reports (default: output.dir)")
        p.set_defaults(func=func)
        return p

    run_parser("simulate", cmd_simulate, "integrate the cutoff system; write CSV and summary JSON")
    lin = run_parser("linear-solve", cmd_linear_solve, "sum the comparison series at the recording times")
    lin.add_argument("--tol", type=_positive_float, default=1e-10, help="series truncation tolerance")
    lin.add_argument("--matrix", help="also write the operator as 'i j value' lines")
    run_parser("verify", cmd_verify, "run the enabled checks; exit 5 if any fails", scenario=True)
    run_parser("study", cmd_study, "finite-volume convergence ladder and uniqueness probe", scenario=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            return args.func(args)
    except ResourceLimitError as exc:
        print(f"rowfinite: resource limit: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except SolverError as exc:
        print(f"rowfinite: solver aborted: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ConfigError, RowFiniteError, OSError, KeyError, TypeError, ValueError) as exc:
        print(f"rowfinite: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
