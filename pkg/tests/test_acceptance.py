"""End-to-end acceptance checks; each test reports one PASS/FAIL line."""

import time

import numpy as np
import pytest
from dense_oracle import DenseOracle

from mhdfem.assembly import (Coefficients, MHDProblem, MHDSpaces, StepAssembler, assemble_convection)
from mhdfem.cases import case_cavity3d, case_decay, case_hartmann, convergence
from mhdfem.config import default_config
from mhdfem.manufactured import hartmann_profiles
from mhdfem.mesh import build_unit_cube_mesh, build_unit_square_mesh

TABLE1_U = {4: 6.4876e-3, 8: 3.3178e-3}
HARTMANN_U1 = 0.122459


@pytest.fixture(scope="module")
def decay_run():
    t0 = time.perf_counter()
    res = case_decay(default_config("decay", M=16, tau=0.01, T=2.0))
    return res, time.perf_counter() - t0


def test_criterion_01_energy_identity(decay_run, record):
    res, seconds = decay_run
    rel = max(r.identity_residual / r.total for r in res.run.ledger)
    ok = len(res.run.ledger) == 200 and rel <= 1e-9 and seconds < 60
    record(1, ok, f"decay M=16 tau=0.01 200 steps: max relative identity residual {rel:.2e}, {seconds:.1f}s")
    assert ok


def _nonincreasing(ledger, initial):
    totals = [initial] + [r.total for r in ledger]
    return all(b <= a for a, b in zip(totals, totals[1:])), totals


def test_criterion_02_unconditional_stability(decay_run, record):
    details, ok = [], True
    for tau in (1.0, 0.1, 0.01):
        if tau == 0.01:
            res = decay_run[0]
        else:
            res = case_decay(default_config("decay", M=16, tau=tau, T=200 * tau))
        init = res.run.initial
        S = res.run.state
        e0 = float(init.u.values @ (_mass(init.u) @ init.u.values) + init.B.values @ (_mass(init.B) @ init.B.values))
        mono, totals = _nonincreasing(res.run.ledger, e0)
        ok &= mono
        details.append(f"tau={tau:g}: {'monotone' if mono else 'INCREASE'} ({totals[0]:.3e} -> {totals[-1]:.3e})")
    record(2, ok, "; ".join(details))
    assert ok


def _mass(field):
    from mhdfem.assembly import assemble_mass

    return assemble_mass(field.space)


def test_criterion_03_weak_divergence(decay_run, record):
    res, _ = decay_run
    worst = max(max(r.weak_div for r in res.run.ledger), res.errors["initial_weak_div"])
    ok = worst <= 1e-10
    record(3, ok, f"max weak divergence along the decay trajectory {worst:.2e}")
    assert ok


def _quadratic_form_check(mesh, k_hat, n_vectors, rng):
    S = MHDSpaces(mesh, 1, k_hat)
    nu, npr, nb = S.sizes
    worst_skew, worst_form = 0.0, 0.0
    for _ in range(n_vectors):
        Re, Rm, Sc = rng.uniform(0.1, 10, 3)
        c = Coefficients.from_numbers(Re, Rm, Sc)
        tau = rng.uniform(1e-3, 1)
        P = MHDProblem(c, tau, b_mode="natural", pressure_mode="pin-node")
        w, Bold = rng.standard_normal(nu), rng.standard_normal(nb)
        x = rng.standard_normal(nu + npr + nb)
        u, B = x[:nu], x[nu + npr:]
        N1 = assemble_convection(S.velocity, w)
        worst_skew = max(worst_skew, abs(u @ (N1 @ u)) / (u @ u))
        A = StepAssembler(P, S).backward_euler(w, Bold, 0.0).A_free
        form = ((u @ (S.M1 @ u)) / tau + 0.5 * c.viscous * (u @ (S.K1 @ u))
                + (B @ (S.M2 @ B)) / tau + 0.5 * c.diffusion * (B @ (S.K2 @ B)))
        worst_form = max(worst_form, abs(x @ (A @ x) - form) / form)
    return worst_skew, worst_form


def test_criterion_04_skew_symmetry_and_cancellation(record):
    rng = np.random.default_rng(2024)
    s2, f2 = _quadratic_form_check(build_unit_square_mesh(4), 2, 100, rng)
    s3, f3 = _quadratic_form_check(build_unit_cube_mesh(4), 1, 100, rng)
    ok = max(s2, s3) <= 1e-13 and max(f2, f3) <= 1e-12
    record(4, ok, f"|x'N1x|/|x|^2 max {max(s2, s3):.1e}; quadratic form rel. dev. 2D {f2:.1e}, 3D {f3:.1e}")
    assert ok


def _hartmann_data():
    u1, B1, _ = hartmann_profiles()
    ubc = lambda x, t=0.0: np.stack([u1(x[:, 1]), 0 * x[:, 0]], -1)
    Bbc = lambda x, t=0.0: np.stack([B1(x[:, 1]), np.ones(len(x))], -1)
    return ubc, Bbc


def _oracle_compare(k_hat, coeffs, tau, states, f=None, g=None, t=0.0, pin_value=0.0):
    mesh = build_unit_square_mesh(2)
    S = MHDSpaces(mesh, 1, k_hat)
    ubc, Bbc = _hartmann_data()
    P = MHDProblem(coeffs, tau, f=f, g=g, u_bc=ubc, B_bc=Bbc, b_mode="tangential", pressure_mode="pin-node",
                   pin_point=(0.0, 0.0), pin_value=pin_value)
    A = StepAssembler(P, S)
    O = DenseOracle(mesh, k_hat, coeffs.viscous, coeffs.lorentz, coeffs.diffusion, coeffs.induction, tau)
    uids, bids = O.boundary_ids()
    uv, bv = O.interpolate_u(lambda x: ubc(x, t)), O.interpolate_B(lambda x: Bbc(x, t))
    fixed = {i: uv[i] for i in uids}
    off = 2 * O.ns + O.nv
    fixed.update({i: bv[i - off] for i in bids})
    fixed[2 * O.ns + A.pin_index] = pin_value
    from mhdfem.linsolve import SolverConfig, solve

    out = {}
    if len(states) == 1:
        u0, B0 = states[0]
        s = A.backward_euler(u0, B0, t)
        Ao, bo = O.backward_euler(u0, B0, t, f, g)
        out["be"] = (solve(s.A, s.b, SolverConfig(method="direct-LU")), O.solve(Ao, bo, fixed))
    else:
        (u1, B1), (u2, B2) = states
        s = A.bdf2(u1, B1, u2, B2, t)
        Ao, bo = O.bdf2(u1, B1, u2, B2, t, f, g)
        out["bdf2"] = (solve(s.A, s.b, SolverConfig(method="direct-LU")), O.solve(Ao, bo, fixed))
    return {k: float(np.abs(x[: len(xo)] - xo).max()) for k, (x, xo) in out.items()}


def test_criterion_05_dense_oracle(record):
    one = Coefficients(1.0, 1.0, 1.0, 1.0)
    mesh = build_unit_square_mesh(2)
    S = MHDSpaces(mesh, 1, 2)
    u0 = S.velocity.interpolate(lambda x: np.tile([1.0, 0.0], (len(x), 1))).values
    B0 = S.magnetic.interpolate(lambda x: np.tile([0.0, 1.0], (len(x), 1))).values
    diffs = {}
    # Hartmann setup: first backward Euler step from the benchmark initial data, then one BDF2 step
    d = _oracle_compare(2, one, 0.005, [(u0, B0)], t=0.005)
    diffs["hartmann BE"] = d["be"]
    from mhdfem.linsolve import solve

    P = MHDProblem(one, 0.005, u_bc=_hartmann_data()[0], B_bc=_hartmann_data()[1], b_mode="tangential",
                   pressure_mode="pin-node", pin_point=(0.0, 0.0))
    s = StepAssembler(P, S).backward_euler(u0, B0, 0.005)
    u1, _, B1 = s.split(solve(s.A, s.b))
    diffs["hartmann BDF2"] = _oracle_compare(2, one, 0.005, [(u1, B1), (u0, B0)], t=0.01)["bdf2"]
    # random states, general coefficients, polynomial sources, both Nedelec orders
    rng = np.random.default_rng(11)
    c = Coefficients(0.7, 1.3, 0.4, 0.9)
    f = lambda x, t: np.stack([x[:, 0] * x[:, 1] + t, x[:, 1] ** 2 - 1], -1)
    g = lambda x, t: np.stack([x[:, 1] + 0.5, x[:, 0] * x[:, 1]], -1)
    for k_hat in (1, 2):
        Sk = MHDSpaces(mesh, 1, k_hat)
        nu, _, nb = Sk.sizes
        st = [(rng.standard_normal(nu), rng.standard_normal(nb)) for _ in range(2)]
        diffs[f"random BE k={k_hat}"] = _oracle_compare(k_hat, c, 0.1, st[:1], f, g, 0.3, 0.25)["be"]
        diffs[f"random BDF2 k={k_hat}"] = _oracle_compare(k_hat, c, 0.1, st, f, g, 0.3, 0.25)["bdf2"]
    worst = max(diffs.values())
    ok = worst <= 1e-10
    record(5, ok, "max coefficient difference " + ", ".join(f"{k} {v:.1e}" for k, v in diffs.items()))
    assert ok


def test_criterion_06_table1_lowest_order(record):
    rows = convergence(default_config("mms3d", T=1.0), [4, 8], "half-h")
    r8 = rows[1]
    orders = (r8.order_u, r8.order_p, r8.order_B)
    within = all(0.5 <= r.err_u_l2 / TABLE1_U[r.M] <= 2.0 for r in rows)
    ok = min(orders) >= 0.9 and within
    record(6, ok, f"L2(u) M=4 {rows[0].err_u_l2:.4e} (ref {TABLE1_U[4]:.4e}), M=8 {r8.err_u_l2:.4e} "
                  f"(ref {TABLE1_U[8]:.4e}); orders u {orders[0]:.3f} p {orders[1]:.3f} B {orders[2]:.3f}")
    assert ok


def test_criterion_07_spatial_order_two(record):
    rows = convergence(default_config("mms2d", k_hat=2), [8, 16, 32], "h2")
    ou = [r.order_u for r in rows[1:]]
    oB = [r.order_B for r in rows[1:]]
    ok = min(ou + oB) >= 1.9
    record(7, ok, "orders u " + ", ".join(f"{o:.3f}" for o in ou) + "; B " + ", ".join(f"{o:.3f}" for o in oB))
    assert ok


def test_criterion_08_temporal_order_two(record):
    from mhdfem.cases import case_temporal2d

    errs = []
    for tau in (1 / 10, 1 / 20, 1 / 40):
        row = case_temporal2d(default_config("temporal2d", M=32, tau=tau, T=1.0)).rows[0]
        errs.append(row.err_u_l2 + row.err_B_l2)
    orders = [np.log2(a / b) for a, b in zip(errs, errs[1:])]
    ok = min(orders) >= 1.8
    record(8, ok, "L2(u)+L2(B) " + ", ".join(f"{e:.3e}" for e in errs) + "; orders " +
           ", ".join(f"{o:.3f}" for o in orders))
    assert ok


def test_criterion_09_hartmann(record):
    res = case_hartmann(default_config("hartmann", M=32, tau=0.005, T=10.0, k_hat=2))
    e = res.errors
    ok = (e["u_rel_l2"] <= 1e-3 and abs(e["u1_at_center_bottom"] - HARTMANN_U1) <= 1e-3
          and res.seconds < 600 and e["steps"] == 2000)
    record(9, ok, f"rel L2(u) {e['u_rel_l2']:.2e}, u1(0.5,0) {e['u1_at_center_bottom']:.6f}, {res.seconds:.0f}s")
    assert ok


def test_criterion_10_cavity(record):
    res = case_cavity3d(default_config("cavity3d", M=8, tau=0.01, T=4.0))
    led = res.run.ledger
    energy = np.array([r.total for r in led])
    rel = np.array([r.steady_rel for r in led])
    t = np.array([r.t for r in led])
    late = rel[t >= 1.0 - 1e-12]
    increases = int(np.sum(np.diff(late) >= 0))
    bounded = bool(np.all(np.isfinite(energy))) and energy.max() <= 10 * max(energy[0], 1e-300)
    ok = len(led) == 400 and bounded and increases == 0
    record(10, ok, f"{len(led)} steps, energy max {energy.max():.4e}; steady indicator {late[0]:.3e} -> "
                   f"{late[-1]:.3e} with {increases} non-decreasing steps after t=1")
    assert ok
