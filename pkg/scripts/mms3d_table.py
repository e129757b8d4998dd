"""Print the 3D first-order error table (tau = 1/(2M), T = 1) next to reference values."""

import argparse

from mhdfem.cases import convergence
from mhdfem.config import default_config

REFERENCE = {
    4: (6.4876e-03, 4.4078e-01, 2.6777e-01),
    8: (3.3178e-03, 2.2073e-01, 1.3366e-01),
    16: (1.6613e-03, 1.1004e-01, 6.6819e-02),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--ms", type=int, nargs="+", default=[4, 8])
    args = ap.parse_args()
    rows = convergence(default_config("mms3d", T=1.0), args.ms, "half-h")
    print(f"{'M':>3} {'u_l2':>11} {'pub':>11} {'p_l2':>11} {'pub':>11} {'B_l2':>11} {'pub':>11}")
    for r in rows:
        pub = REFERENCE.get(r.M, (float("nan"),) * 3)
        print(f"{r.M:>3} {r.err_u_l2:11.4e} {pub[0]:11.4e} {r.err_p_l2:11.4e} {pub[1]:11.4e} "
              f"{r.err_B_l2:11.4e} {pub[2]:11.4e}")


if __name__ == "__main__":
    main()
