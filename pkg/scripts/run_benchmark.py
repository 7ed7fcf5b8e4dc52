#!/usr/bin/env python3
"""Run the simulation benchmark and print per-method medians.

Defaults reproduce the reduced-scale protocol (p=30, N=300, 9 fit times,
10 seeds, three methods). Pass --full for the large configuration; that
one is intended for a many-core machine and takes hours.
"""

import argparse
import sys
import time

import numpy as np

from tvggm.cli import run_bench


def summarize(rows, label):
    print(f"== {label} ==")
    for method in ("loggle", "kernel", "invar"):
        sub = [r for r in rows if r["method"] == method]
        if not sub:
            continue
        med = {k: float(np.median([r[k] for r in sub]))
               for k in ("fdr", "power", "f1", "kl")}
        secs = sum(r["runtime_ms"] for r in sub) / 1000.0
        print(f"{method:7s} F1={med['f1']:.3f} FDR={med['fdr']:.3f} "
              f"power={med['power']:.3f} KL={med['kl']:.3f} "
              f"({secs:.0f}s total)")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--p", type=int, default=30)
    ap.add_argument("--N", type=int, default=300)
    ap.add_argument("--seeds", type=int, nargs="+",
                    default=list(range(1, 11)))
    ap.add_argument("--threads", type=int, default=4)
    ap.add_argument("--kind", default=None,
                    choices=["time_varying", "time_invariant"])
    ap.add_argument("--full", action="store_true",
                    help="p=100, N=1000, 49 fit times (very slow)")
    args = ap.parse_args()

    kinds = [args.kind] if args.kind else ["time_varying", "time_invariant"]
    p, N, fit_times = args.p, args.N, None
    if args.full:
        p, N = 100, 1000
        fit_times = tuple(np.round(np.linspace(0.02, 0.98, 49), 10))

    for kind in kinds:
        t0 = time.time()
        rows = run_bench(kind, p, N, args.seeds,
                         ["loggle", "kernel", "invar"],
                         fit_times=fit_times, threads=args.threads)
        summarize(rows, f"{kind} p={p} N={N} ({time.time() - t0:.0f}s)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
