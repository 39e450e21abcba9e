"""Command-line entry point: ``dragobs <verb> ...``.

Exit codes: 0 success, 1 a check failed (theory check, Monte-Carlo
convergence, gain validation), 2 bad input or an aborted simulation.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from dragobs import runner
from dragobs.runner import InitSampler, SimulationAborted
from dragobs.scenario import BUILTINS, ESTIMATORS, ScenarioError, dump_scenario, load_scenario
from dragobs.types import Gains, validate_gains

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _scenario(args):
    scn = load_scenario(args.scenario)
    changes = {}
    if getattr(args, "dt", None) is not None:
        changes["dt"] = args.dt
    if getattr(args, "c_mode", None) is not None:
        changes["c_mode"] = args.c_mode
    if getattr(args, "estimators", None):
        est = tuple(e.strip() for e in args.estimators.split(",") if e.strip())
        unknown = set(est) - set(ESTIMATORS)
        if unknown:
            raise ScenarioError(f"unknown estimators {sorted(unknown)}; choose from {list(ESTIMATORS)}")
        changes["estimators"] = est
    return scn.with_(**changes) if changes else scn


def _write_json(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(runner._jsonable(data), indent=2, sort_keys=True) + "\n")


def cmd_run(args) -> int:
    scn = _scenario(args)
    out = Path(args.out or f"runs/{scn.name}")
    rec = runner.run_scenario(scn)
    extra = {"scenario_definition": scn.to_json()}
    if scn.compare_c_modes:
        extra["c_mode_comparison"] = runner.compare_c_modes(scn)
    if args.ablation:
        extra["robustness_ablation"] = runner.robustness_ablation(scn)
    paths = rec.write(out, extra_summary=extra)
    if not args.no_plots:
        from dragobs.plotting import save_figures

        paths += save_figures(rec, out / "figures")
    print(f"{scn.name}: {scn.duration:g} s simulated in {rec.wall_time:.2f} s, {len(paths)} files in {out}")
    for name, m in rec.metrics["estimators"].items():
        print(
            f"  {name:8s} rmse u={m['rmse_u']:.4f} v={m['rmse_v']:.4f} m/s, "
            f"phi={m['rmse_phi_deg']:.3f} theta={m['rmse_theta_deg']:.3f} deg, "
            f"max ||eta_hat|-1|={m['max_norm_dev']:.3g}"
        )
    if "robustness_ablation" in extra:
        for variant, d in extra["robustness_ablation"]["deltas"].items():
            print(f"  ablation {variant:9s} delta velocity={d['velocity_rmse']:.4g} m/s angle={d['angle_rmse_deg']:.4g} deg")
    return EXIT_OK


def cmd_montecarlo(args) -> int:
    scn = _scenario(args)
    sampler = InitSampler(eta_radius=args.eta_radius, velocity_error=args.velocity_error)
    summary = runner.monte_carlo(scn, args.n, sampler, seed=args.seed, force=args.force)
    if summary.refused:
        print(f"montecarlo {scn.name}: REFUSED ({summary.refused})")
        return EXIT_FAIL
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "montecarlo.csv").write_text("\n".join(summary.rows()) + "\n")
        _write_json(out / "summary.json", summary.to_json())
    print(
        f"montecarlo {scn.name}: {summary.converged}/{summary.n} converged to V < {summary.threshold:g}, "
        f"worst settling time {summary.worst_settling_time:.3f} s"
    )
    return EXIT_OK if summary.converged == summary.n else EXIT_FAIL


def cmd_theory_check(args) -> int:
    scn = _scenario(args)
    report = runner.theory_check(scn)
    print("\n".join(report.lines()))
    if args.out:
        _write_json(Path(args.out) / "theory_check.json", report.to_json())
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_list(args) -> int:
    for name, make in BUILTINS.items():
        scn = make()
        print(f"{name:14s} {scn.duration:5g} s  {scn.description}")
    return EXIT_OK


def cmd_dump(args) -> int:
    scn = load_scenario(args.scenario)
    path = dump_scenario(scn, args.path)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_validate_gains(args) -> int:
    data = json.loads(Path(args.gains).read_text())
    data = data.get("gains", data)
    try:
        gains = Gains(**data)
    except TypeError as exc:
        raise ScenarioError(f"bad gains file: {exc}") from exc
    if args.epsilon is not None:
        gains = replace(gains, epsilon=args.epsilon)
    report = validate_gains(gains)
    print(f"gains {gains.k1:g}, {gains.k2:g}, {gains.k3:g}, {gains.ku:g}, {gains.kv:g} (epsilon={gains.epsilon:g})")
    for key, value in report.thresholds.items():
        print(f"  {key:8s} > {value:.12g}")
    for v in report.violations:
        print(f"  VIOLATED {v}")
    print("valid" if report.ok else "invalid")
    return EXIT_OK if report.ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dragobs", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)

    def scenario_cmd(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("scenario", help="built-in name or scenario JSON file")
        p.add_argument("--dt", type=float)
        p.add_argument("--c-mode", choices=("true", "nominal"))
        p.add_argument("--out", help="output directory")
        p.set_defaults(func=func)
        return p

    p = scenario_cmd("run", cmd_run, "simulate a scenario and write CSV, summary.json and figures")
    p.add_argument("--estimators", help="comma-separated subset of observer,ekf")
    p.add_argument("--ablation", action="store_true", help="also run the Coriolis / nominal-c ablation")
    p.add_argument("--no-plots", action="store_true")

    p = scenario_cmd("montecarlo", cmd_montecarlo, "random observer starts against one truth trajectory")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eta-radius", type=float, default=InitSampler.eta_radius)
    p.add_argument("--velocity-error", type=float, default=InitSampler.velocity_error)
    p.add_argument("--force", action="store_true", help="run even with invalid gains")

    scenario_cmd("theory-check", cmd_theory_check, "check the Lyapunov decay bound at every step")

    p = sub.add_parser("list-scenarios", help="list built-in scenarios")
    p.set_defaults(func=cmd_list)

    p = sub.add_parser("dump-scenario", help="write a scenario as editable JSON")
    p.add_argument("scenario")
    p.add_argument("path")
    p.set_defaults(func=cmd_dump)

    p = sub.add_parser("validate-gains", help="check gain conditions from a JSON file")
    p.add_argument("gains")
    p.add_argument("--epsilon", type=float)
    p.set_defaults(func=cmd_validate_gains)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SimulationAborted as exc:
        print(f"simulation aborted at step {exc.step}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ScenarioError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
