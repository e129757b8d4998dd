"""3D lid-driven cavity with an applied field; prints the energy and steady indicator history."""

import argparse

from mhdfem.cases import case_cavity3d
from mhdfem.config import default_config


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--m", type=int, default=8)
    ap.add_argument("--tau", type=float, default=0.01)
    ap.add_argument("--t-final", type=float, default=4.0)
    ap.add_argument("--every", type=int, default=10, help="print every n-th step")
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    res = case_cavity3d(default_config("cavity3d", M=args.m, tau=args.tau, T=args.t_final, out_dir=args.out))
    for i, rec in enumerate(res.run.ledger):
        if i % args.every == 0 or i == len(res.run.ledger) - 1:
            print(f"t={rec.t:6.3f} energy={rec.total:.6e} steady_rel={rec.steady_rel:.3e}")
    print(f"wall-clock {res.seconds:.1f} s")


if __name__ == "__main__":
    main()
