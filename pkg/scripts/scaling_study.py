"""Feedforward vs local-only scaling study on the flagship platoon.

Writes the per-position comparison table and, when matplotlib is installed,
a plot of the peak relative speed against position in the string.
"""
import argparse
import json
import os
from pathlib import Path

from apfplatoon.analysis import scalability_study
from apfplatoon.scenario import flagship


def plot(result, n_list, path):
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib not installed; skipping plot")
        return
    fig, ax = plt.subplots(figsize=(7, 4))
    for variant, style in (("feedforward", "-"), ("local-only", "--")):
        for n in n_list:
            peaks = result.peak_profile(variant, n)
            ax.plot(range(1, n + 1), peaks, style, label=f"{variant}, n={n}")
    ax.set_xlabel("position k")
    ax.set_ylabel("peak |z_k^v| [m/s]")
    ax.set_yscale("log")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    print(f"wrote {path}")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-list", default="5,25,100")
    ap.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    ap.add_argument("--out", default="runs/scaling")
    args = ap.parse_args()

    n_list = [int(x) for x in args.n_list.split(",")]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    res = scalability_study(flagship(), n_list, variants=("feedforward", "local-only"), workers=args.workers)
    res.write_csv(out / "comparison.csv")
    verdict = {
        "statuses": res.statuses,
        "invariance": {str(k): v for k, v in res.invariance.items()},
        "prefix_max_diff": res.prefix_max_diff,
        "prefix_ok": res.prefix_ok,
    }
    (out / "verdict.json").write_text(json.dumps(verdict, indent=2) + "\n")
    print(json.dumps(verdict, indent=2))
    for n in n_list:
        ff = res.peak_profile("feedforward", n)
        lo = res.peak_profile("local-only", n)
        print(f"n={n:4d}  peak |z_v|: feedforward {ff.max():.4f} (last {ff[-1]:.4f}), "
              f"local-only {lo.max():.4f} (last {lo[-1]:.4f})")
    plot(res, n_list, out / "peak_profile.png")


if __name__ == "__main__":
    main()
