"""Simulate and certify the flagship platoon, writing outputs under --out."""
import argparse
from pathlib import Path

from apfplatoon.analysis import certify
from apfplatoon.scenario import dump_scenario, flagship
from apfplatoon.simulator import run, write_summary, write_trajectory_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=10)
    ap.add_argument("--dt", type=float, default=0.01)
    ap.add_argument("--out", default="runs/flagship_script")
    args = ap.parse_args()

    s = flagship(n=args.n, dt=args.dt)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    log = run(s)
    dump_scenario(s, out / "scenario.toml")
    write_trajectory_csv(log, out / "trajectory.csv")
    write_summary(log, s, out / "summary.json")
    report = certify(log, s)
    (out / "certification.json").write_text(report.to_json())

    print(f"status {log.status}, {log.t.size} records, {log.wall_time:.2f} s")
    for c in report.checks:
        res = "" if c.worst_residual is None else f"{c.worst_residual:.3e}"
        print(f"  {c.name:26s} {c.verdict:15s} {res}")
    print("certified" if report.passed else "NOT certified")


if __name__ == "__main__":
    main()
