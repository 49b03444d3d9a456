"""Pole map of the quantum line: hopping and amplitude poles per level, and the
radial (eps_k) and tangential (theta_k) flow of the pole nearest z = 1."""
import argparse
import csv
import sys

from qwrg import rational_poles as rp


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--kmin", type=int, default=2)
    ap.add_argument("--kmax", type=int, default=10)
    ap.add_argument("--csv", help="write every pole to this CSV file")
    args = ap.parse_args()
    hop, rows = [], []
    print(f"{'k':>2} {'#hop':>5} {'min|z|-1':>10} {'eps_k':>10} {'theta_k':>10} {'#amp':>5} {'max||z|-1|':>10} method")
    for k in range(args.kmin, args.kmax + 1):
        h, a = rp.hopping_poles(k), rp.amplitude_poles(k)
        hop.append(h)
        rows += h.rows() + a.rows()
        print(f"{k:2d} {h.poles.size:5d} {h.radial.min():10.3e} {h.eps:10.3e} {h.theta:10.3e} "
              f"{a.poles.size:5d} {abs(a.radial).max():10.1e} {h.meta['method']}")
    if len(hop) >= 4:
        ff = rp.flow_fit(hop)
        print("theta ratios:", " ".join(f"{x:.4f}" for x in ff.theta_ratio))
        print("eps ratios:  ", " ".join(f"{x:.4f}" for x in ff.eps_ratio))
        print(f"sqrt(l1 l2) from theta flow: {ff.sqrt_l1l2}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "re", "im", "modulus", "arg", "kind"])
            w.writerows(rows)
        print(f"wrote {len(rows)} poles to {args.csv}", file=sys.stderr)


if __name__ == "__main__":
    main()
