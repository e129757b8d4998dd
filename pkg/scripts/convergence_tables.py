"""Spatial and temporal convergence tables for the 2D manufactured cases."""

import argparse
import math

from mhdfem.cases import case_temporal2d, convergence
from mhdfem.config import default_config


def spatial(Ms, k_hat):
    rows = convergence(default_config("mms2d", k_hat=k_hat), Ms, "h2")
    print(f"mms2d k_hat={k_hat}, tau = 1/M^2")
    print(f"{'M':>3} {'u_l2':>10} {'ord':>5} {'p_l2':>10} {'ord':>5} {'B_l2':>10} {'ord':>5}")
    for r in rows:
        o = [f"{x:5.2f}" if x is not None else "    -" for x in (r.order_u, r.order_p, r.order_B)]
        print(f"{r.M:>3} {r.err_u_l2:10.3e} {o[0]} {r.err_p_l2:10.3e} {o[1]} {r.err_B_l2:10.3e} {o[2]}")


def temporal(taus, M):
    print(f"temporal2d BDF2, M={M}")
    prev = None
    for tau in taus:
        e = case_temporal2d(default_config("temporal2d", M=M, tau=tau)).rows[0].err_u_l2
        order = "" if prev is None else f"{math.log(prev / e, 2):5.2f}"
        print(f"tau={tau:<8.5f} u_l2={e:10.3e} {order}")
        prev = e


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--ms", type=int, nargs="+", default=[8, 16, 32])
    ap.add_argument("--k-hat", type=int, default=2, choices=(1, 2))
    ap.add_argument("--temporal", action="store_true", help="also run the BDF2 time-step study")
    args = ap.parse_args()
    spatial(args.ms, args.k_hat)
    if args.temporal:
        temporal([0.1, 0.05, 0.025], 32)


if __name__ == "__main__":
    main()
