"""Command-line entry point: ``mhdfem <case> [options]``."""

from __future__ import annotations

import argparse
import logging
import sys

from .cases import TAU_RULES, convergence, convergence_configs, run_case
from .config import ProblemConfig, default_config
from .diagnostics import ERRORS_HEADER
from .linsolve import METHODS

BENCHMARKS = ("hartmann", "mms2d", "mms3d", "cavity3d", "decay", "temporal2d")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--m", type=int, help="cells per unit length")
    p.add_argument("--tau", type=float, help="time step")
    p.add_argument("--t-final", type=float, help="final time")
    p.add_argument("--order-b", type=int, choices=(1, 2), help="Nedelec order of the magnetic space")
    p.add_argument("--bc-b", choices=("natural", "tangential", "mixed"), help="boundary mode for B")
    p.add_argument("--solver", choices=METHODS, help="linear solver")
    p.add_argument("--bdf2", action="store_true", help="use the three-level second-order scheme")
    p.add_argument("--out", help="output directory")
    p.add_argument("--steady-tol", type=float, help="stop once the steady-state indicator drops below this")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mhdfem", description="Energy-preserving mixed FEM for incompressible MHD")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in BENCHMARKS:
        _common(sub.add_parser(name, help=f"run the {name} case"))
    run = sub.add_parser("run", help="run a case described by a config file")
    run.add_argument("config", help="path to an INI config file")
    _common(run)
    conv = sub.add_parser("convergence", help="mesh refinement study of a manufactured case")
    conv.add_argument("case", choices=("mms2d", "mms3d", "temporal2d"))
    conv.add_argument("--ms", type=int, nargs="+", default=[4, 8], help="list of M values")
    conv.add_argument("--tau-rule", choices=sorted(TAU_RULES), default="h2")
    _common(conv)
    return parser


def _overrides(args) -> dict:
    kw = {}
    for attr, key in (("m", "M"), ("tau", "tau"), ("t_final", "T"), ("order_b", "k_hat"), ("bc_b", "b_mode"),
                      ("solver", "solver"), ("out", "out_dir"), ("steady_tol", "steady_tol")):
        v = getattr(args, attr, None)
        if v is not None:
            kw[key] = v
    if args.bdf2:
        kw["bdf2"] = True
    return kw


def _print_rows(rows) -> None:
    print(",".join(ERRORS_HEADER))
    for r in rows:
        vals = [r.M] + [getattr(r, k) for k in ERRORS_HEADER[1:]]
        print(",".join("" if v is None else (str(v) if isinstance(v, int) else f"{v:.6g}") for v in vals))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with status 2 on usage errors
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "run":
            cfg = ProblemConfig.load(args.config).replace(**_overrides(args))
        elif args.command == "convergence":
            cfg = default_config(args.case, **_overrides(args))
            convergence_configs(cfg, args.ms, args.tau_rule)
        else:
            cfg = default_config(args.command, **_overrides(args))
    except (ValueError, OSError) as exc:
        parser.print_usage(sys.stderr)
        print(f"mhdfem: error: {exc}", file=sys.stderr)
        return 2
    try:
        if args.command == "convergence":
            _print_rows(convergence(cfg, args.ms, args.tau_rule))
            return 0
        res = run_case(cfg)
    except Exception as exc:  # report and fail without a traceback
        print(f"mhdfem: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    if res.rows:
        _print_rows(res.rows)
    for k, v in res.errors.items():
        print(f"{k} = {v:.6g}" if isinstance(v, float) else f"{k} = {v}")
    print(f"elapsed = {res.seconds:.1f}s")
    for f in res.files:
        print(f"wrote {f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
