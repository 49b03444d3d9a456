"""Scaling-collapse score of the quantum DSG walk for a range of trial d_w."""
import argparse
import math

import numpy as np

from qwrg import analysis as an
from qwrg import networks as nw
from qwrg import walk as wk


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--gen", type=int, default=7)
    ap.add_argument("--times", type=int, nargs="+", default=[125, 250, 500, 1000, 2000])
    ap.add_argument("--csv", help="write rescaled curves at the quantum exponent to this CSV")
    args = ap.parse_args()
    net = nw.build_dsg(args.gen)
    times = sorted(set(args.times) | {t + 1 for t in args.times})
    s = wk.msd_series(wk.build_propagator(net), wk.initial_state(net), max(times), times)
    snaps = an.parity_average(s.snapshots)
    dist = net.distances_from(net.origin)
    df = math.log2(3)
    for dw in (1.0, math.log2(math.sqrt(5)), 1.4, 1.8, math.log2(5)):
        print(f"d_w = {dw:.4f}: score {an.scaling_collapse(snaps, dist, dw, df):.4f}")
    if args.csv:
        dw = math.log2(math.sqrt(5))
        with open(args.csv, "w") as fh:
            fh.write("t,scaled_x,scaled_rho\n")
            for t, rho in sorted(snaps.items()):
                m = dist > 0
                for x, r in zip(dist[m] / t ** (1 / dw), np.asarray(rho)[m] * t ** (df / dw)):
                    fh.write(f"{t},{x!r},{r!r}\n")


if __name__ == "__main__":
    main()
