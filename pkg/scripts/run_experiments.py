"""Run experiment kinds at their default (full) sizes and write reports.

    python3 scripts/run_experiments.py                     # every kind
    python3 scripts/run_experiments.py overshoot fg_convergence --workers 4 --out results
"""
import argparse
import sys
import time

from coalweb.experiments import KINDS, ExperimentConfig, run, write_report

# density at the size of the asymptotic check; other kinds use their defaults
OVERRIDES = {"density_scan": dict(ts=(2500.0,))}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("kinds", nargs="*", metavar="KIND", help="any of: " + ", ".join(KINDS))
    ap.add_argument("--seed", type=int, default=20240611)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="results")
    ns = ap.parse_args(argv)
    unknown = [k for k in ns.kinds if k not in KINDS]
    if unknown:
        ap.error(f"unknown kind(s): {', '.join(unknown)}")
    failed = 0
    for kind in ns.kinds or KINDS:
        t0 = time.perf_counter()
        rep = run(ExperimentConfig(kind, seed=ns.seed, **OVERRIDES.get(kind, {})), ns.workers)
        write_report(rep, ns.out)
        print(f"== {kind} ({time.perf_counter() - t0:.1f}s)")
        for line in rep.summary_lines():
            print(line)
        failed += not rep.passed
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
