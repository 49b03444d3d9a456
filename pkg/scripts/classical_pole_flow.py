"""Real-pole flow z_k = 1 + eps_k of the classical couplings and the implied lambda_1."""
import argparse

from qwrg import laplace_rg as rg


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--kinds", nargs="+", default=["ring", "dsg", "mk3", "hn3"])
    ap.add_argument("--kmin", type=int, default=4)
    ap.add_argument("--kmax", type=int, default=10)
    args = ap.parse_args()
    for kind in args.kinds:
        ps = rg.classical_pole_scaling(kind, range(args.kmin, args.kmax + 1))
        slope, se = rg.moment_scaling(ps, 1)
        print(f"{kind}: eps_k = " + " ".join(f"{e:.3e}" for e in ps.eps))
        print(f"  1/ratios = " + " ".join(f"{1 / r:.4f}" for r in ps.ratios))
        print(f"  lambda1 (Aitken) = {ps.lambda1:.5f}, log-fit = {ps.lambda1_fit:.5f} +- {ps.lambda1_stderr:.5f}, "
              f"moment slope d_w = {slope:.4f} +- {se:.4f}")


if __name__ == "__main__":
    main()
