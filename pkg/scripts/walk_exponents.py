"""Walk dimensions from direct simulation: msd slope and tail-front slope."""
import argparse
import math

from qwrg import networks as nw
from qwrg import walk as wk


def run(net, mode, T, window, p=1e-4):
    U = wk.build_propagator(net, "grover", mode)
    s = wk.msd_series(U, wk.initial_state(net, mode), T, tail_probs=(p,))
    msd = wk.estimate_dw(s.t, s.msd, window)
    front = wk.estimate_dw_front(s, p, window)
    return msd, front


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dsg-gen", type=int, nargs="+", default=[7, 8])
    ap.add_argument("--ring-k", type=int, default=12)
    args = ap.parse_args()
    cases = [
        ("ring quantum", nw.build_ring(args.ring_k), "unitary", 2000, (200, 2000), 1.0),
        ("ring classical", nw.build_ring(args.ring_k), "stochastic", 20000, (2000, 20000), 2.0),
    ]
    for g in args.dsg_gen:
        net = nw.build_dsg(g)
        cases.append((f"DSG g={g} quantum", net, "unitary", 2000, wk.front_window(net), math.log2(math.sqrt(5))))
    cases.append(("DSG g=7 classical", nw.build_dsg(7), "stochastic", 20000, (2000, 20000), math.log2(5)))
    print(f"{'case':20} {'window':>16} {'msd d_w':>14} {'front d_w':>14} {'expected':>8}")
    for name, net, mode, T, win, want in cases:
        (m, ms), (f, fs) = run(net, mode, T, win)
        print(f"{name:20} {f'{win[0]:.0f}-{win[1]:.0f}':>16} {m:8.3f}+-{ms:.3f} {f:8.3f}+-{fs:.3f} {want:8.4f}")


if __name__ == "__main__":
    main()
