"""Benchmark and manufactured-solution runs driven by a :class:`ProblemConfig`."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .assembly import B_TANGENTIAL, MHDProblem, MHDSpaces
from .config import ProblemConfig
from .fespace import FieldCoefficients
from .diagnostics import (ConvergenceRow, convergence_study, error_norms, export_vtu, l2_norm, snapshot_name,
                          write_errors_csv)
from .manufactured import (ManufacturedSolution, hartmann_profiles, mms2d_solution, mms3d_solution,
                           polynomial2d_solution)
from .mesh import build_unit_cube_mesh, build_unit_square_mesh
from .timeloop import RunResult, Stepper

log = logging.getLogger(__name__)


@dataclass
class CaseResult:
    config: ProblemConfig
    run: RunResult | None = None
    rows: list = field(default_factory=list)
    errors: dict = field(default_factory=dict)
    files: list = field(default_factory=list)
    seconds: float = 0.0


def build_spaces(cfg: ProblemConfig) -> MHDSpaces:
    mesh = build_unit_square_mesh(cfg.M) if cfg.dimension == 2 else build_unit_cube_mesh(cfg.M)
    return MHDSpaces(mesh, cfg.k, cfg.k_hat)


def make_problem(cfg: ProblemConfig, f=None, g=None, u_bc=None, B_bc=None, pin_value=None) -> MHDProblem:
    pv = pin_value if pin_value is not None else (cfg.pin_value or 0.0)
    return MHDProblem(cfg.coeffs, cfg.tau, f=f, g=g, u_bc=u_bc, B_bc=B_bc, b_mode=cfg.b_mode,
                      b_markers=tuple(cfg.b_markers), pressure_mode=cfg.pressure_mode,
                      pin_point=cfg.pin_point, pin_value=pv)


def _out(cfg: ProblemConfig) -> Path | None:
    if cfg.out_dir is None:
        return None
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _finish(res: CaseResult, out: Path | None, case: str) -> CaseResult:
    if out is None:
        return res
    cfg = res.config
    cfg.save(out / "config.ini")
    res.files.append(out / "config.ini")
    if res.run is not None:
        res.run.write_ledger(out / "energy.csv")
        res.files.append(out / "energy.csv")
        st = res.run.state
        path = out / snapshot_name(case, st.t)
        if path not in res.files:
            export_vtu(st.u.space.mesh, dict(u=st.u, p=st.p, B=st.B), path)
            res.files.append(path)
    if res.rows:
        write_errors_csv(res.rows, out / "errors.csv")
        res.files.append(out / "errors.csv")
    return res


# ----------------------------------------------------------------------
# manufactured solutions


def run_manufactured(cfg: ProblemConfig, sol: ManufacturedSolution) -> CaseResult:
    """March the manufactured problem to ``T`` and measure final-time errors."""
    t0 = time.perf_counter()
    spaces = build_spaces(cfg)
    problem = make_problem(cfg, f=sol.f, g=sol.g, u_bc=sol.u,
                           B_bc=sol.B if cfg.b_mode != "natural" else None)
    stepper = Stepper(problem, spaces, cfg.solver_config)
    state0 = stepper.initialize(lambda x: sol.u(x, 0.0), lambda x: sol.B(x, 0.0))
    result = stepper.run(state0, cfg.n_steps, bdf2=cfg.bdf2)
    st = result.state
    T = st.t
    eu, eu1 = error_norms(st.u, sol.u, T, sol.grad_u)
    ep, _ = error_norms(st.p, sol.p, T, sol.grad_p)
    eB, eBc = error_norms(st.B, sol.B, T, sol.curl_B)
    row = ConvergenceRow(cfg.M, spaces.mesh.h, cfg.tau, eu, ep, eB, eu1, eBc)
    res = CaseResult(cfg, result, [row], dict(u_l2=eu, p_l2=ep, B_l2=eB, u_h1=eu1, B_curl=eBc),
                     seconds=time.perf_counter() - t0)
    log.info("%s M=%d tau=%g: |u|=%.4e |p|=%.4e |B|=%.4e (%.1fs)", cfg.case, cfg.M, cfg.tau, eu, ep, eB, res.seconds)
    return res


def case_mms2d(cfg: ProblemConfig) -> CaseResult:
    if cfg.dimension != 2:
        raise ValueError("mms2d is a two-dimensional case")
    return _finish(run_manufactured(cfg, mms2d_solution(cfg.coeffs)), _out(cfg), "mms2d")


def case_mms3d(cfg: ProblemConfig) -> CaseResult:
    if cfg.dimension != 3:
        raise ValueError("mms3d is a three-dimensional case")
    return _finish(run_manufactured(cfg, mms3d_solution(cfg.coeffs)), _out(cfg), "mms3d")


def case_temporal2d(cfg: ProblemConfig) -> CaseResult:
    """Solution inside the order-2 spaces, so the measured error is purely temporal."""
    if cfg.dimension != 2 or cfg.k_hat != 2:
        raise ValueError("temporal2d needs the 2D order-2 spaces")
    return _finish(run_manufactured(cfg, polynomial2d_solution(cfg.coeffs)), _out(cfg), "temporal2d")


TAU_RULES = {
    "half-h": lambda M: 1.0 / (2 * M),
    "h2": lambda M: 1.0 / M**2,
}

MANUFACTURED = {"mms2d": case_mms2d, "mms3d": case_mms3d, "temporal2d": case_temporal2d}


def convergence_configs(cfg: ProblemConfig, Ms, tau_rule="h2") -> list[ProblemConfig]:
    """One validated config per ``M``; ``tau_rule`` is a name in ``TAU_RULES`` or a callable."""
    if cfg.case not in MANUFACTURED:
        raise ValueError(f"convergence needs a manufactured case, got {cfg.case!r}")
    rule = TAU_RULES[tau_rule] if isinstance(tau_rule, str) else tau_rule
    return [cfg.replace(M=M, tau=rule(M), out_dir=None) for M in Ms]


def convergence(cfg: ProblemConfig, Ms, tau_rule="h2") -> list[ConvergenceRow]:
    """Run a manufactured case at each ``M`` and tabulate errors and observed orders."""
    runner = MANUFACTURED[cfg.case]
    configs = {c.M: c for c in convergence_configs(cfg, Ms, tau_rule)}
    rows = convergence_study(lambda M, tau: runner(configs[M]).rows[0], Ms, lambda M: configs[M].tau)
    out = _out(cfg)
    if out is not None:
        write_errors_csv(rows, out / "errors.csv")
    return rows


# ----------------------------------------------------------------------
# benchmarks


def case_hartmann(cfg: ProblemConfig) -> CaseResult:
    if cfg.dimension != 2:
        raise ValueError("the Hartmann case is two-dimensional")
    t0 = time.perf_counter()
    u1, B1, p_ex = hartmann_profiles()

    def u_exact(x, t=0.0):
        return np.stack([u1(x[:, 1]), np.zeros(len(x))], axis=-1)

    def B_exact(x, t=0.0):
        return np.stack([B1(x[:, 1]), np.ones(len(x))], axis=-1)

    def p_exact(x, t=0.0):
        return p_ex(x[:, 0], x[:, 1])

    spaces = build_spaces(cfg)
    pin = cfg.pin_point or (0.0, 0.0)
    pin_value = cfg.pin_value if cfg.pin_value is not None else float(p_ex(pin[0], pin[1]))
    problem = make_problem(cfg.replace(pin_point=tuple(pin)), u_bc=u_exact,
                           B_bc=B_exact if cfg.b_mode == B_TANGENTIAL else None, pin_value=pin_value)
    stepper = Stepper(problem, spaces, cfg.solver_config)
    state0 = stepper.initialize(lambda x: np.tile([1.0, 0.0], (len(x), 1)), lambda x: np.tile([0.0, 1.0], (len(x), 1)))
    result = stepper.run(state0, cfg.n_steps, bdf2=cfg.bdf2, steady_tol=cfg.steady_tol)
    st = result.state
    eu, _ = error_norms(st.u, u_exact)
    ep, _ = error_norms(st.p, p_exact)
    eB, _ = error_norms(st.B, B_exact)
    zero = FieldCoefficients(st.u.space, np.zeros(st.u.space.dof_count))
    unorm, _ = error_norms(zero, u_exact)
    ys = np.linspace(0.0, 1.0, 101)
    prof = np.column_stack([np.full_like(ys, 0.5), ys])
    uh = st.u.evaluate(prof)[:, 0]
    Bh = st.B.evaluate(prof)[:, 0]
    errors = dict(u_rel_l2=eu / unorm, u_l2=eu, p_l2=ep, B_l2=eB,
                  u1_at_center_bottom=float(st.u.evaluate(np.array([[0.5, 0.0]]))[0, 0]),
                  profile_max_err=float(np.abs(uh - u1(ys)).max()),
                  steps=len(result.ledger))
    res = CaseResult(cfg, result, errors=errors, seconds=time.perf_counter() - t0)
    out = _out(cfg)
    if out is not None:
        with open(out / "profile.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["y", "u1_h", "u1_exact", "B1_h", "B1_exact"])
            for row in zip(ys, uh, u1(ys), Bh, B1(ys)):
                w.writerow([f"{v:.17g}" for v in row])
        res.files.append(out / "profile.csv")
        _write_error_table(errors, out / "hartmann_errors.csv")
        res.files.append(out / "hartmann_errors.csv")
    return _finish(res, out, "hartmann")


def _write_error_table(errors: dict, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["quantity", "value"])
        for k, v in errors.items():
            w.writerow([k, f"{v:.17g}"])


def lid_profile(z, alpha: float = 0.001):
    """Regularized lid speed ``(1 + (z - 1)/alpha)^2`` for ``z >= 1 - alpha``, else 0."""
    z = np.asarray(z, dtype=float)
    return np.where(z >= 1.0 - alpha, (1.0 + (z - 1.0) / alpha) ** 2, 0.0)


def case_cavity3d(cfg: ProblemConfig) -> CaseResult:
    if cfg.dimension != 3:
        raise ValueError("the cavity case is three-dimensional")
    t0 = time.perf_counter()
    alpha = cfg.alpha

    def u_lid(x, t=0.0):
        out = np.zeros((len(x), 3))
        out[:, 0] = lid_profile(x[:, 2], alpha)
        return out

    def B_init(x):
        return np.tile([1.0, 0.0, 0.0], (len(x), 1))

    spaces = build_spaces(cfg)
    problem = make_problem(cfg, u_bc=u_lid)
    stepper = Stepper(problem, spaces, cfg.solver_config)
    state0 = stepper.initialize(lambda x: u_lid(x), B_init, clean_divergence=cfg.clean_divergence)
    out = _out(cfg)
    files = []

    def snapshot(state):
        if out is None:
            return
        for t_snap in (4.0, 10.0):
            if abs(state.t - t_snap) < 1e-9 * max(1.0, t_snap):
                path = out / snapshot_name("cavity3d", t_snap)
                export_vtu(spaces.mesh, dict(u=state.u, p=state.p, B=state.B), path)
                files.append(path)

    result = stepper.run(state0, cfg.n_steps, bdf2=cfg.bdf2, steady_tol=cfg.steady_tol, callback=snapshot)
    energies = np.array([r.total for r in result.ledger])
    rel = np.array([r.steady_rel for r in result.ledger])
    errors = dict(max_energy=float(energies.max()), final_energy=float(energies[-1]),
                  initial_energy=float(result.ledger[0].kinetic + result.ledger[0].magnetic),
                  final_steady_rel=float(rel[-1]), steps=len(result.ledger),
                  final_speed_l2=l2_norm(result.state.u))
    res = CaseResult(cfg, result, errors=errors, files=files, seconds=time.perf_counter() - t0)
    return _finish(res, out, "cavity3d")


def decay_fields():
    """Smooth divergence-free data vanishing (u) or tangent (B) on the unit square boundary."""
    pi = np.pi

    def u0(x):
        X, Y = x[:, 0], x[:, 1]
        return np.stack([pi * np.sin(pi * X) ** 2 * np.sin(2 * pi * Y), -pi * np.sin(2 * pi * X) * np.sin(pi * Y) ** 2], -1)

    def B0(x):
        X, Y = x[:, 0], x[:, 1]
        return np.stack([np.sin(pi * X) * np.cos(pi * Y), -np.cos(pi * X) * np.sin(pi * Y)], -1)

    return u0, B0


def case_decay(cfg: ProblemConfig) -> CaseResult:
    """Free decay with homogeneous data: the energy ledger must balance exactly."""
    if cfg.dimension != 2:
        raise ValueError("the decay case is two-dimensional")
    t0 = time.perf_counter()
    u0, B0 = decay_fields()
    spaces = build_spaces(cfg)
    stepper = Stepper(make_problem(cfg), spaces, cfg.solver_config)
    state0 = stepper.initialize(u0, B0, clean_divergence=cfg.clean_divergence)
    result = stepper.run(state0, cfg.n_steps, bdf2=cfg.bdf2)
    rec = result.ledger
    errors = dict(max_rel_identity=max(r.identity_residual / (r.kinetic + r.magnetic) for r in rec),
                  max_weak_div=max(r.weak_div for r in rec), initial_weak_div=stepper.weak_divergence(state0.B),
                  steps=len(rec))
    res = CaseResult(cfg, result, errors=errors, seconds=time.perf_counter() - t0)
    return _finish(res, _out(cfg), "decay")


CASE_RUNNERS = {
    "hartmann": case_hartmann,
    "mms2d": case_mms2d,
    "mms3d": case_mms3d,
    "cavity3d": case_cavity3d,
    "decay": case_decay,
    "temporal2d": case_temporal2d,
}


def run_case(cfg: ProblemConfig) -> CaseResult:
    return CASE_RUNNERS[cfg.case](cfg)
