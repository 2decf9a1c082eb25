"""Command-line entry point: ``apfplatoon run|certify|sweep``.

Exit codes: 0 ok, 2 configuration error (including the beta > alpha gate),
3 collision, 4 divergence or unresolved stiffness, 5 certification failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path


from .analysis import certify, scalability_study
from .controller import Variant
from .errors import ConfigError
from .scenario import Scenario, dump_scenario, load_scenario
from .simulator import COLLISION, COMPLETED, DIVERGED, STIFF, run, summary, write_summary, write_trajectory_csv

EXIT_OK, EXIT_CONFIG, EXIT_COLLISION, EXIT_DIVERGED, EXIT_CERT = 0, 2, 3, 4, 5
OUT_ENV = "APFPLATOON_OUT"
_STATUS_EXIT = {COMPLETED: EXIT_OK, COLLISION: EXIT_COLLISION, DIVERGED: EXIT_DIVERGED, STIFF: EXIT_DIVERGED}


def _err(msg):
    print(f"apfplatoon: {msg}", file=sys.stderr)


def _out_dir(args, scenario_path) -> Path:
    if args.out:
        return Path(args.out)
    root = Path(os.environ.get(OUT_ENV, "runs"))
    return root / Path(scenario_path).stem


def _prepare(args, *, certify_on=None) -> Scenario:
    s = load_scenario(args.scenario)
    if getattr(args, "variant", None):
        s = s.replace(controller=dataclasses.replace(s.controller, variant=Variant(args.variant)))
    if getattr(args, "stride", None):
        s = s.replace(stride=args.stride)
    if certify_on is not None:
        s = s.replace(certify=dataclasses.replace(s.certify, enabled=certify_on))
    s.validate()
    return s


def _write_run(out: Path, scenario: Scenario, log, trajectories=True):
    out.mkdir(parents=True, exist_ok=True)
    dump_scenario(scenario, out / "scenario.toml")
    if trajectories:
        write_trajectory_csv(log, out / "trajectory.csv")
    write_summary(log, scenario, out / "summary.json")


def cmd_run(args) -> int:
    try:
        s = _prepare(args)
    except ConfigError as exc:
        _err(f"config error: {exc}")
        return EXIT_CONFIG
    log = run(s)
    _write_run(_out_dir(args, args.scenario), s, log)
    if log.status != COMPLETED:
        _err(f"run ended early ({log.status}): {log.message}")
    print(json.dumps({k: v for k, v in summary(log, s).items() if k in ("status", "min_gap", "wall_time")}))
    return _STATUS_EXIT[log.status]


def _report_exit(log, report) -> int:
    if log.status != COMPLETED:
        return _STATUS_EXIT[log.status]
    return EXIT_OK if report.passed else EXIT_CERT


def cmd_certify(args) -> int:
    try:
        s = _prepare(args, certify_on=True)
    except ConfigError as exc:
        _err(f"refusing to run: {exc}")
        return EXIT_CONFIG
    log = run(s)
    out = _out_dir(args, args.scenario)
    _write_run(out, s, log)
    report = certify(log, s)
    (out / "certification.json").write_text(report.to_json())
    for c in report.checks:
        print(f"{c.name:26s} {c.verdict:15s} {'' if c.worst_residual is None else f'{c.worst_residual:.3e}'}")
    return _report_exit(log, report)


def _parse_n_list(text):
    try:
        ns = [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad --n-list {text!r}") from exc
    if not ns or min(ns) < 1:
        raise argparse.ArgumentTypeError("--n-list needs positive integers")
    return ns


def cmd_sweep(args) -> int:
    try:
        s = _prepare(args, certify_on=True)
    except ConfigError as exc:
        _err(f"config error: {exc}")
        return EXIT_CONFIG
    variants = [Variant.FEEDFORWARD, Variant.LOCAL_ONLY] if args.paired else [s.controller.variant]
    result = scalability_study(s, args.n_list, variants=variants, workers=args.workers)
    out = _out_dir(args, args.scenario)
    out.mkdir(parents=True, exist_ok=True)
    dump_scenario(s, out / "scenario.toml")
    result.write_csv(out / "comparison.csv")

    code = EXIT_OK
    reports = {}
    for (variant, n), log in sorted(result.logs.items()):
        sn = s.replace(n=n, controller=dataclasses.replace(s.controller, variant=Variant(variant)))
        run_dir = out / f"{variant}_n{n}"
        _write_run(run_dir, sn, log, trajectories=not args.no_trajectories)
        report = certify(log, sn)
        (run_dir / "certification.json").write_text(report.to_json())
        reports[f"{variant}:n={n}"] = report.passed
        if log.status != COMPLETED:
            _err(f"{variant} n={n}: {log.status}: {log.message}")
            code = max(code, _STATUS_EXIT[log.status])
        elif not report.passed:
            code = max(code, EXIT_CERT)
    if code == EXIT_OK and not result.passed:
        code = EXIT_CERT
    verdict = {
        "passed": code == EXIT_OK,
        "statuses": result.statuses,
        "invariance": {str(k): v for k, v in result.invariance.items()},
        "prefix_equivalence": {"max_abs_diff": result.prefix_max_diff, "ok": result.prefix_ok},
        "certification": reports,
    }
    (out / "sweep.json").write_text(json.dumps(verdict, indent=2) + "\n")
    print(json.dumps(verdict))
    return code


def build_parser():
    p = argparse.ArgumentParser(prog="apfplatoon", description="Distributed APF platoon simulator and certifier")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--scenario", required=True, help="scenario TOML file")
        sp.add_argument("--out", help=f"output directory (default: ${OUT_ENV}/<scenario stem> or runs/<stem>)")
        sp.add_argument("--variant", choices=[v.value for v in Variant])
        sp.add_argument("--stride", type=int, help="record every k-th step")

    sp = sub.add_parser("run", help="simulate one scenario")
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("certify", help="simulate and run every check")
    common(sp)
    sp.set_defaults(func=cmd_certify)

    sp = sub.add_parser("sweep", help="scalability study over several string lengths")
    common(sp)
    sp.add_argument("--n-list", type=_parse_n_list, required=True, help="comma-separated agent counts, e.g. 5,25,100")
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--paired", action="store_true", help="also run the local-only baseline")
    sp.add_argument("--no-trajectories", action="store_true", help="skip per-run trajectory CSVs")
    sp.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
