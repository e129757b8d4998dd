"""Gauss quadrature on the reference interval, triangle and tetrahedron.

Reference cells:

* ``"interval"``: [0, 1], measure 1
* ``"triangle"``: vertices (0,0), (1,0), (0,1), measure 1/2
* ``"tetrahedron"``: vertices (0,0,0), (1,0,0), (0,1,0), (0,0,1), measure 1/6

Simplex rules are conical (collapsed) products of Gauss--Jacobi rules, so an
``n``-point-per-direction rule integrates every polynomial of total degree
``2n - 1`` exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

MAX_DEGREE = 8

CELL_DIM = {"interval": 1, "triangle": 2, "tetrahedron": 3}


@dataclass(frozen=True)
class QuadRule:
    points: np.ndarray  # (n_points, dim) reference coordinates
    weights: np.ndarray  # (n_points,)
    exact_degree: int
    cell_type: str

    def __len__(self) -> int:
        return len(self.weights)


def _jacobi01(n: int, alpha: int) -> tuple[np.ndarray, np.ndarray]:
    # Gauss-Jacobi on [0, 1] with weight (1 - v)**alpha
    t, w = roots_jacobi(n, alpha, 0.0)
    return (1.0 + t) / 2.0, w / 2.0 ** (alpha + 1)


@lru_cache(maxsize=None)
def gauss_rule(cell_type: str, degree: int) -> QuadRule:
    """Return a rule on ``cell_type`` exact for polynomials of total degree ``degree``."""
    if cell_type not in CELL_DIM:
        raise ValueError(f"unknown cell type {cell_type!r}")
    if degree < 0:
        raise ValueError("degree must be non-negative")
    if degree > MAX_DEGREE:
        raise ValueError(f"unsupported quadrature degree {degree} (max {MAX_DEGREE})")
    n = max(1, (degree + 2) // 2)
    exact = 2 * n - 1

    if cell_type == "interval":
        u, wu = _jacobi01(n, 0)
        pts, wts = u[:, None], wu
    elif cell_type == "triangle":
        u, wu = _jacobi01(n, 0)
        v, wv = _jacobi01(n, 1)
        U, V = np.meshgrid(u, v, indexing="ij")
        pts = np.column_stack([(U * (1 - V)).ravel(), V.ravel()])
        wts = np.outer(wu, wv).ravel()
    else:
        u, wu = _jacobi01(n, 0)
        v, wv = _jacobi01(n, 1)
        w, ww = _jacobi01(n, 2)
        U, V, W = np.meshgrid(u, v, w, indexing="ij")
        pts = np.column_stack(
            [(U * (1 - V) * (1 - W)).ravel(), (V * (1 - W)).ravel(), W.ravel()]
        )
        wts = np.einsum("i,j,k->ijk", wu, wv, ww).ravel()

    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadRule(points=pts, weights=wts, exact_degree=exact, cell_type=cell_type)


def simplex_type(dim: int) -> str:
    return {1: "interval", 2: "triangle", 3: "tetrahedron"}[dim]


# Default degrees: bilinear/trilinear forms, and loads with non-polynomial data.
FORM_DEGREE = {2: 5, 3: 5}
LOAD_DEGREE = 6
