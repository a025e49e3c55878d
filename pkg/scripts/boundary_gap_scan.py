"""Median rescaled boundary gap sup|l - r| (delta / sigma) as delta shrinks.

Prints one line per delta: median gap, median maximal width in lattice sites.
"""
import argparse

import numpy as np

from coalweb.increments import UNIFORM_2, parse_law
from coalweb.voter import boundary_paths, interface_trace


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--deltas", type=float, nargs="+", default=[0.2, 0.1, 0.05, 0.02])
    ap.add_argument("--trials", type=int, default=200)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--time-kind", default="continuous", choices=["discrete", "continuous"])
    ns = ap.parse_args(argv)
    law = parse_law(UNIFORM_2)
    print("delta,steps,median_gap,median_max_width_sites")
    for d in ns.deltas:
        n = int(round(1 / (d * d)))
        ts = np.arange(n + 1, dtype=float)
        gaps, widths = [], []
        for k in range(ns.trials):
            tr = interface_trace(law, float(n), ts, ns.seed, ns.time_kind, key=(1, k))
            gaps.append(boundary_paths(tr, d)[2])
            widths.append(int(np.max(np.abs(tr.l - tr.r))))
        print(f"{d:g},{n},{np.median(gaps):.4f},{np.median(widths):g}")


if __name__ == "__main__":
    main()
