"""Sparse solves for the coupled step systems."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

DIRECT = "direct-LU"
GMRES_ILU = "gmres-ilu"
LAGGED_LU = "lagged-lu"
AUTO = "auto"
METHODS = (DIRECT, GMRES_ILU, LAGGED_LU, AUTO)
DIRECT_LIMIT = 300_000
ILU_DROP_TOL = 1e-4
ILU_FILL = 10.0


class SolverError(RuntimeError):
    pass


class SingularMatrixError(SolverError):
    pass


class ConvergenceError(SolverError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    method: str = AUTO
    relative_residual_tol: float = 1e-12
    max_iterations: int = 2000
    restart: int = 50
    # lagged-lu: refactor once GMRES needs more than this many iterations
    refactor_iterations: int = 12

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown solver method {self.method!r}")
        if not self.relative_residual_tol > 0:
            raise ValueError("relative_residual_tol must be positive")


def _check_structure(A: sp.csr_matrix) -> None:
    row_nnz = np.diff(A.indptr)
    empty = np.flatnonzero(row_nnz == 0)
    if len(empty):
        raise SingularMatrixError(f"structurally singular: row {empty[0]} has no entries")
    col_nnz = np.bincount(A.indices, minlength=A.shape[1])
    empty = np.flatnonzero(col_nnz == 0)
    if len(empty):
        raise SingularMatrixError(f"structurally singular: column {empty[0]} has no entries")


def _factor(A, pivoting: bool = False):
    """Sparse LU of ``A``.

    The step matrices are structurally symmetric, so a minimum-degree
    ordering on ``A + A^T`` with diagonal pivots gives much less fill than
    column ordering with partial pivoting. ``pivoting=True`` forces the
    robust variant.
    """
    A = sp.csc_matrix(A)
    try:
        if not pivoting:
            try:
                return spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                                 options=dict(SymmetricMode=True))
            except RuntimeError:
                log.debug("diagonal pivoting failed, retrying with partial pivoting")
        return spla.splu(A, permc_spec="COLAMD")
    except RuntimeError as exc:
        # SuperLU reports "Factor is exactly singular" with the pivot column
        raise SingularMatrixError(f"numerically singular matrix: {exc}") from exc


def _refine(lu, A, b, x, tol, steps=3):
    bnorm = np.linalg.norm(b)
    for _ in range(steps):
        r = b - A @ x
        if np.linalg.norm(r) <= tol * bnorm:
            break
        x = x + lu.solve(r)
    return x


def _direct(A: sp.csr_matrix, b: np.ndarray, tol: float) -> np.ndarray:
    x = _refine(lu := _factor(A), A, b, lu.solve(b), tol)
    if not np.linalg.norm(b - A @ x) <= tol * np.linalg.norm(b):
        lu = _factor(A, pivoting=True)
        x = _refine(lu, A, b, lu.solve(b), tol)
    return x


def _ilu(A):
    # zero-fill ILU breaks down on the zero pressure block; a threshold ILU
    # with the same symmetric ordering as the direct path does not
    A = sp.csc_matrix(A)
    try:
        return spla.spilu(A, drop_tol=ILU_DROP_TOL, fill_factor=ILU_FILL, permc_spec="MMD_AT_PLUS_A",
                          diag_pivot_thresh=0.0, options=dict(SymmetricMode=True))
    except RuntimeError:
        pass
    try:
        return spla.spilu(A, drop_tol=ILU_DROP_TOL, fill_factor=ILU_FILL)
    except RuntimeError as exc:
        raise SingularMatrixError(f"ILU factorization failed: {exc}") from exc


def _gmres_ilu(A: sp.csr_matrix, b: np.ndarray, cfg: SolverConfig) -> np.ndarray:
    ilu = _ilu(A)
    P = spla.LinearOperator(A.shape, ilu.solve, dtype=float)
    x, info = spla.gmres(
        A, b, M=P, rtol=cfg.relative_residual_tol, atol=0.0, restart=cfg.restart, maxiter=cfg.max_iterations
    )
    if info != 0:
        res = np.linalg.norm(b - A @ x) / max(np.linalg.norm(b), 1e-300)
        raise ConvergenceError(f"GMRES did not converge (info={info}, relative residual {res:.3e})")
    return x


def _prepare(A, b):
    A = sp.csr_matrix(A)
    b = np.asarray(b, dtype=float)
    n, m = A.shape
    if n != m:
        raise ValueError(f"matrix must be square, got {A.shape}")
    if b.shape != (n,):
        raise ValueError(f"right-hand side has shape {b.shape}, expected ({n},)")
    return A, b


def _check_result(A, b, x, tol, method):
    if not np.all(np.isfinite(x)):
        raise SingularMatrixError("solution contains non-finite values; matrix is numerically singular")
    bnorm = np.linalg.norm(b)
    res = np.linalg.norm(b - A @ x)
    if res > tol * bnorm:
        raise ConvergenceError(f"{method}: relative residual {res / bnorm:.3e} exceeds tolerance {tol:.1e}")
    log.debug("%s solve n=%d relative residual %.2e", method, len(b), res / bnorm)


def solve(A, b, cfg: SolverConfig | None = None) -> np.ndarray:
    """Solve ``A x = b`` with ``||b - A x|| <= tol ||b||``."""
    cfg = cfg or SolverConfig()
    A, b = _prepare(A, b)
    n = A.shape[0]
    if np.linalg.norm(b) == 0.0:
        return np.zeros(n)
    _check_structure(A)
    method = cfg.method
    if method == LAGGED_LU:
        method = DIRECT  # nothing to reuse for a one-off solve
    if method == AUTO:
        method = DIRECT if n <= DIRECT_LIMIT else GMRES_ILU
    if method == DIRECT:
        x = _direct(A, b, cfg.relative_residual_tol)
    else:
        x = _gmres_ilu(A, b, cfg)
    _check_result(A, b, x, cfg.relative_residual_tol, method)
    return x


class SequenceSolver:
    """Solver for a sequence of slowly varying systems of one size.

    With ``lagged-lu`` an LU factorization of an earlier matrix preconditions
    GMRES on the current one; it is recomputed when the iteration count
    exceeds ``refactor_iterations`` or GMRES stalls. Other methods fall back
    to :func:`solve`.
    """

    def __init__(self, cfg: SolverConfig | None = None):
        self.cfg = cfg or SolverConfig()
        self.lu = None
        self.factorizations = 0
        self.iterations: list[int] = []

    def _use_lagged(self) -> bool:
        return self.cfg.method in (LAGGED_LU, AUTO)

    def _gmres(self, A, b, x0):
        count = [0]

        def cb(_):
            count[0] += 1

        P = spla.LinearOperator(A.shape, self.lu.solve, dtype=float)
        x, info = spla.gmres(A, b, x0=x0, M=P, rtol=self.cfg.relative_residual_tol, atol=0.0,
                             restart=self.cfg.restart, maxiter=2, callback=cb, callback_type="pr_norm")
        return x, info, count[0]

    def solve(self, A, b, x0=None) -> np.ndarray:
        if not self._use_lagged():
            return solve(A, b, self.cfg)
        A, b = _prepare(A, b)
        if np.linalg.norm(b) == 0.0:
            return np.zeros(A.shape[0])
        if self.lu is None or self.lu.shape != A.shape:
            _check_structure(A)
            self.lu = _factor(A)
            self.factorizations += 1
        x, info, its = self._gmres(A, b, x0)
        tol = self.cfg.relative_residual_tol
        ok = info == 0 and np.linalg.norm(b - A @ x) <= tol * np.linalg.norm(b)
        if not ok or its > self.cfg.refactor_iterations:
            self.lu = _factor(A)
            self.factorizations += 1
            if not ok:
                x, info, its2 = self._gmres(A, b, None)
                its += its2
                if info != 0:
                    x = _direct(A, b, tol)
        self.iterations.append(its)
        _check_result(A, b, x, self.cfg.relative_residual_tol, LAGGED_LU)
        return x
