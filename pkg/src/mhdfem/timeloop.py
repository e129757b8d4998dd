"""Time marching, energy ledger and divergence monitor."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import B_MIXED, B_NATURAL, MHDProblem, MHDSpaces, StepAssembler
from .fespace import FieldCoefficients, FunctionSpace
from .linsolve import SequenceSolver, SolverConfig

log = logging.getLogger(__name__)

LEDGER_HEADER = ["n", "t", "kinetic", "magnetic", "viscous", "ohmic", "work",
                 "identity_residual", "weak_div", "steady_rel"]


@dataclass
class State:
    n: int
    tau: float
    u: FieldCoefficients
    p: FieldCoefficients
    B: FieldCoefficients

    @property
    def t(self) -> float:
        return float(self.n * Fraction(self.tau).limit_denominator(10**9)) if self.n else 0.0


@dataclass
class EnergyRecord:
    n: int
    t: float
    kinetic: float
    magnetic: float
    viscous: float
    ohmic: float
    work: float
    identity_residual: float
    weak_div: float = float("nan")
    steady_rel: float = float("nan")

    @property
    def total(self) -> float:
        return self.kinetic + self.magnetic

    def row(self) -> list:
        return [self.n] + [getattr(self, k) for k in LEDGER_HEADER[1:]]


@dataclass
class RunResult:
    state: State
    ledger: list[EnergyRecord]
    initial: State
    monitors: dict = field(default_factory=dict)

    def write_ledger(self, path) -> None:
        write_ledger(self.ledger, path)


def write_ledger(records, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LEDGER_HEADER)
        for r in records:
            w.writerow([r.n] + [f"{v:.17g}" for v in r.row()[1:]])


def read_ledger(path) -> list[dict]:
    with open(path) as fh:
        return [{k: (int(v) if k == "n" else float(v)) for k, v in row.items()} for row in csv.DictReader(fh)]


def weak_divergence_norm(B: FieldCoefficients, V: FunctionSpace, exclude=None, G=None, M2=None) -> float:
    """``max_i |(B, grad phi_i)|`` over scalar DOFs ``i`` not listed in ``exclude``."""
    from .assembly import assemble_mass
    from .fespace import gradient_inclusion_map

    G = gradient_inclusion_map(V, B.space) if G is None else G
    M2 = assemble_mass(B.space) if M2 is None else M2
    r = G.T @ (M2 @ B.values)
    if exclude is not None and len(exclude):
        r = r.copy()
        r[exclude] = 0.0
    return float(np.abs(r).max())


class Stepper:
    """Marches one problem on fixed spaces."""

    def __init__(self, problem: MHDProblem, spaces: MHDSpaces, solver: SolverConfig | None = None):
        self.problem, self.spaces = problem, spaces
        self.solver = solver or SolverConfig()
        self.assembler = StepAssembler(problem, spaces)
        self.linear = SequenceSolver(self.solver)
        self._x = None
        if problem.b_mode == B_NATURAL:
            self.fixed_scalars = np.zeros(0, dtype=np.int64)
        elif problem.b_mode == B_MIXED:
            self.fixed_scalars = spaces.scalar_aux.boundary_dofs(problem.b_markers)
        else:
            self.fixed_scalars = spaces.scalar_aux.boundary_dofs()

    @property
    def tau(self) -> float:
        return self.problem.tau

    # --------------------------------------------------------------
    def weak_divergence(self, B: FieldCoefficients) -> float:
        S = self.spaces
        return weak_divergence_norm(B, S.scalar_aux, self.fixed_scalars, G=S.G, M2=S.M2)

    def clean_divergence(self, B: np.ndarray) -> np.ndarray:
        """Subtract the discrete gradient part so that ``(B, grad s) = 0`` for admissible ``s``."""
        S = self.spaces
        G, M2 = S.G, S.M2
        L = (G.T @ M2 @ G).tocsr()
        rhs = G.T @ (M2 @ B)
        free = np.setdiff1d(np.arange(L.shape[0]), self.fixed_scalars)
        if len(self.fixed_scalars) == 0:
            free = free[1:]  # constants are in the kernel; pin one node
        s = np.zeros(L.shape[0])
        Lff = L[free][:, free].tocsc()
        s[free] = spla.spsolve(Lff, rhs[free])
        # one refinement pass keeps the residual at round-off level
        r = rhs[free] - Lff @ s[free]
        s[free] += spla.spsolve(Lff, r)
        return B - G @ s

    def initialize(self, u0, B0, clean_divergence: bool = False) -> State:
        """Interpolate initial data; ``u0``/``B0`` take ``points`` only."""
        S = self.spaces
        u = S.velocity.interpolate(u0)
        B = S.magnetic.interpolate(B0)
        if clean_divergence:
            B = FieldCoefficients(S.magnetic, self.clean_divergence(B.values))
        p = FieldCoefficients(S.pressure, np.zeros(S.pressure.dof_count))
        return State(0, self.tau, u, p, B)

    # --------------------------------------------------------------
    def _solve(self, system):
        x0 = self._x if self._x is not None and len(self._x) == len(system.b) else None
        x = self.linear.solve(system.A, system.b, x0)
        self._x = x
        return system.split(x)

    def energy_record(self, prev: State, new: State, F=None, G=None) -> EnergyRecord:
        S, P = self.spaces, self.problem
        c, tau = P.coefficients, P.tau
        wB = c.magnetic_weight
        u_bar = 0.5 * (new.u.values + prev.u.values)
        B_bar = 0.5 * (new.B.values + prev.B.values)
        kin = float(new.u.values @ (S.M1 @ new.u.values))
        mag = wB * float(new.B.values @ (S.M2 @ new.B.values))
        kin0 = float(prev.u.values @ (S.M1 @ prev.u.values))
        mag0 = wB * float(prev.B.values @ (S.M2 @ prev.B.values))
        visc = 2 * tau * c.viscous * float(u_bar @ (S.K1 @ u_bar))
        ohm = 2 * tau * wB * c.diffusion * float(B_bar @ (S.K2 @ B_bar))
        work = 0.0
        if F is not None:
            work += 2 * tau * float(F @ u_bar)
        if G is not None:
            work += 2 * tau * wB * float(G @ B_bar)
        resid = abs((kin + mag + visc + ohm) - (kin0 + mag0 + work))
        return EnergyRecord(new.n, new.t, kin, mag, visc, ohm, work, resid)

    def step_backward_euler(self, state: State) -> tuple[State, EnergyRecord]:
        n = state.n + 1
        t = State(n, self.tau, state.u, state.p, state.B).t
        system = self.assembler.backward_euler(state.u.values, state.B.values, t)
        u, p, B = self._solve(system)
        S = self.spaces
        new = State(n, self.tau, FieldCoefficients(S.velocity, u), FieldCoefficients(S.pressure, p),
                    FieldCoefficients(S.magnetic, B))
        rec = self.energy_record(state, new, system.blocks["F"], system.blocks["G"])
        return new, rec

    def step_bdf2(self, state1: State, state2: State) -> State:
        """Three-level step from ``state1`` (level n-1) and ``state2`` (level n-2)."""
        n = state1.n + 1
        t = State(n, self.tau, state1.u, state1.p, state1.B).t
        system = self.assembler.bdf2(state1.u.values, state1.B.values, state2.u.values, state2.B.values, t)
        u, p, B = self._solve(system)
        S = self.spaces
        return State(n, self.tau, FieldCoefficients(S.velocity, u), FieldCoefficients(S.pressure, p),
                     FieldCoefficients(S.magnetic, B))

    # --------------------------------------------------------------
    def steady_indicator(self, new: State, prev: State) -> float:
        S = self.spaces
        total = 0.0
        for a, b, Mm in ((new.u, prev.u, S.M1), (new.p, prev.p, S.Mp), (new.B, prev.B, S.M2)):
            num = np.sqrt(max((a.values - b.values) @ (Mm @ (a.values - b.values)), 0.0))
            den = np.sqrt(max(a.values @ (Mm @ a.values), 0.0))
            if den > 0:
                total += num / den
        return float(total)

    def run(self, initial: State, n_steps: int, bdf2: bool = False, steady_tol: float | None = None,
            callback=None) -> RunResult:
        """March ``n_steps`` steps; ``callback(state)`` is called after every step."""
        ledger = []
        state = initial
        prev2 = None
        for _ in range(n_steps):
            if bdf2 and prev2 is not None:
                new = self.step_bdf2(state, prev2)
                F, G = self.assembler.loads(new.t)
                rec = self.energy_record(state, new, F, G)
            else:
                new, rec = self.step_backward_euler(state)
            rec.weak_div = self.weak_divergence(new.B)
            rec.steady_rel = self.steady_indicator(new, state)
            ledger.append(rec)
            log.info("step %d t=%.4g energy=%.6e rel=%.3e", rec.n, rec.t, rec.total, rec.steady_rel)
            prev2, state = state, new
            if callback is not None:
                callback(state)
            if steady_tol is not None and rec.steady_rel < steady_tol:
                break
        return RunResult(state, ledger, initial)


def n_steps_for(T: float, tau: float) -> int:
    """Number of steps ``T / tau``; raises if it is not an integer."""
    ratio = Fraction(T).limit_denominator(10**9) / Fraction(tau).limit_denominator(10**9)
    if ratio.denominator != 1:
        raise ValueError(f"T/tau = {float(ratio)} is not an integer")
    return int(ratio)
