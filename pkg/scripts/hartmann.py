"""Run the Hartmann channel to its steady state and compare with the closed-form profile."""

import argparse

from mhdfem.cases import case_hartmann
from mhdfem.config import default_config


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--m", type=int, default=32)
    ap.add_argument("--tau", type=float, default=0.005)
    ap.add_argument("--t-final", type=float, default=10.0)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    res = case_hartmann(default_config("hartmann", M=args.m, tau=args.tau, T=args.t_final, out_dir=args.out))
    for k, v in res.errors.items():
        print(f"{k:>16} {v:.4e}")
    print(f"wall-clock {res.seconds:.1f} s")


if __name__ == "__main__":
    main()
