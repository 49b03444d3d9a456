"""Fixed points and Jacobian spectra of the RG maps for every network."""
import argparse
import math

import numpy as np

from qwrg import laplace_rg as rg

KINDS = ("ring", "dsg", "mk3", "mk4", "hn3")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--kinds", nargs="+", default=KINDS, choices=KINDS)
    args = ap.parse_args()
    print(f"{'kind':5} {'mode':10} {'|lambda_1..3|':40} {'d_w':>8} {'residual':>9}")
    for kind in args.kinds:
        for mode in ("unitary", "stochastic"):
            r = rg.fixed_point_report(kind, mode)
            lam = " ".join(f"{x:.10f}" for x in np.abs(r.eigenvalues[:3]))
            dw = r.dw_qw if mode == "unitary" else r.dw_rw
            print(f"{kind:5} {mode:10} {lam:40} {dw:8.5f} {r.residuals['fixed_point']:9.1e}")
        q = rg.fixed_point_report(kind, "unitary")
        c = rg.fixed_point_report(kind, "stochastic")
        l1, l2 = np.abs(q.eigenvalues[:2])
        print(f"      lambda1*lambda2 = {l1 * l2:.10f}, classical lambda1 = {abs(c.eigenvalues[0]):.10f}, "
              f"ratio d_w^QW/d_w^RW = {math.log2(math.sqrt(l1 * l2)) / c.dw_rw:.10f}")


if __name__ == "__main__":
    main()
