"""Error norms, convergence tables and field export."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .fespace import LAGRANGE_SCALAR, LAGRANGE_VECTOR, NEDELEC, FieldCoefficients
from .mesh import Mesh, write_vtk
from .quadrature import LOAD_DEGREE

FD_STEP = 1e-5


def field_at_quadrature(field: FieldCoefficients, degree: int = LOAD_DEGREE):
    """Values and first derivatives of a discrete field at the quadrature points.

    Returns ``(points, weights, values, deriv)``. ``deriv`` is the gradient for
    Lagrange fields (last axis = direction) and the curl for Nedelec fields.
    """
    V = field.space
    T = V.tabulate(degree)
    c = field.values
    if V.family == NEDELEC:
        loc = c[V.cell_dofs]
        vals = np.einsum("cqbd,cb->cqd", T.values, loc)
        if V.dim == 2:
            curl = np.einsum("cqb,cb->cq", T.curls, loc)
        else:
            curl = np.einsum("cqbd,cb->cqd", T.curls, loc)
        return T.points, T.weights, vals, curl
    sd = V.scalar_cell_dofs
    if V.family == LAGRANGE_SCALAR:
        loc = c[sd]
        return T.points, T.weights, np.einsum("qb,cb->cq", T.values, loc), np.einsum("cqbi,cb->cqi", T.grads, loc)
    comps = c.reshape(V.dim, V.n_scalar)[:, sd]  # (d, nc, nb)
    vals = np.einsum("qb,kcb->cqk", T.values, comps)
    grads = np.einsum("cqbi,kcb->cqki", T.grads, comps)
    return T.points, T.weights, vals, grads


def _integrate(w, vals) -> float:
    """Quadrature sum of ``vals`` summed over any trailing component axes."""
    return float((w.reshape(w.shape + (1,) * (vals.ndim - 2)) * vals).sum())


def _fd_gradient(exact, pts, t, h=FD_STEP):
    """Central differences of ``exact(points, t)``; trailing axis is the direction."""
    out = []
    for j in range(pts.shape[1]):
        e = np.zeros(pts.shape[1])
        e[j] = h
        out.append((np.asarray(exact(pts + e, t)) - np.asarray(exact(pts - e, t))) / (2 * h))
    return np.stack(out, axis=-1)


def _curl_from_gradient(g):
    # g[..., comp, direction]
    if g.shape[-1] == 2:
        return g[..., 1, 0] - g[..., 0, 1]
    return np.stack([g[..., 2, 1] - g[..., 1, 2], g[..., 0, 2] - g[..., 2, 0], g[..., 1, 0] - g[..., 0, 1]], axis=-1)


def error_norms(field: FieldCoefficients, exact, t: float = 0.0, derivative=None,
                degree: int = LOAD_DEGREE) -> tuple[float, float]:
    """L2 error and seminorm error (H1 for Lagrange, curl for Nedelec) of ``field``.

    ``exact(points, t)`` gives the reference values. ``derivative(points, t)``
    supplies its gradient (Lagrange) or curl (Nedelec); central differences
    are used when it is omitted.
    """
    pts, w, vals, deriv = field_at_quadrature(field, degree)
    flat = pts.reshape(-1, pts.shape[-1])
    ex = np.asarray(exact(flat, t), dtype=float).reshape(vals.shape)
    l2 = math.sqrt(max(_integrate(w, (vals - ex) ** 2), 0.0))
    if derivative is not None:
        dex = np.asarray(derivative(flat, t), dtype=float).reshape(deriv.shape)
    else:
        g = _fd_gradient(exact, flat, t)
        dex = (_curl_from_gradient(g) if field.space.family == NEDELEC else g).reshape(deriv.shape)
    semi = math.sqrt(max(_integrate(w, (deriv - dex) ** 2), 0.0))
    return l2, semi


def l2_norm(field: FieldCoefficients, degree: int = LOAD_DEGREE) -> float:
    _, w, vals, _ = field_at_quadrature(field, degree)
    return math.sqrt(_integrate(w, vals**2))


# ----------------------------------------------------------------------


@dataclass
class ConvergenceRow:
    M: int
    h: float
    tau: float
    err_u_l2: float
    err_p_l2: float
    err_B_l2: float
    err_u_h1: float = float("nan")
    err_B_curl: float = float("nan")
    order_u: float | None = None
    order_p: float | None = None
    order_B: float | None = None


ERRORS_HEADER = ["M", "h", "tau", "err_u_l2", "err_p_l2", "err_B_l2", "order_u", "order_p", "order_B"]


def observed_order(e_coarse: float, e_fine: float, ratio: float = 2.0) -> float:
    return math.log(e_coarse / e_fine) / math.log(ratio)


def fill_orders(rows: list[ConvergenceRow]) -> list[ConvergenceRow]:
    """Orders between consecutive rows, ``log(e_prev / e) / log(M / M_prev)``."""
    for prev, row in zip(rows, rows[1:]):
        r = row.M / prev.M
        row.order_u = observed_order(prev.err_u_l2, row.err_u_l2, r)
        row.order_p = observed_order(prev.err_p_l2, row.err_p_l2, r)
        row.order_B = observed_order(prev.err_B_l2, row.err_B_l2, r)
    return rows


def convergence_study(run_case, Ms, tau_rule) -> list[ConvergenceRow]:
    """Run ``run_case(M, tau)`` for each ``M`` and tabulate the errors.

    ``run_case`` returns a :class:`ConvergenceRow` without orders;
    ``tau_rule(M)`` gives the step for that resolution.
    """
    rows = [run_case(M, tau_rule(M)) for M in Ms]
    return fill_orders(rows)


def write_errors_csv(rows: list[ConvergenceRow], path) -> None:
    def fmt(v):
        return "" if v is None else f"{v:.17g}"

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ERRORS_HEADER)
        for r in rows:
            w.writerow([r.M] + [fmt(getattr(r, k)) for k in ERRORS_HEADER[1:]])


def read_errors_csv(path) -> list[dict]:
    with open(path) as fh:
        return [{k: (float(v) if v else None) for k, v in row.items()} for row in csv.DictReader(fh)]


# ----------------------------------------------------------------------


def cell_average(field: FieldCoefficients, degree: int = 2) -> np.ndarray:
    """Cell means of a field, shape (nc, d) or (nc,)."""
    _, w, vals, _ = field_at_quadrature(field, degree)
    return np.einsum("cq,cq...->c...", w, vals) / w.sum(axis=1).reshape((-1,) + (1,) * (vals.ndim - 2))


def vertex_values(field: FieldCoefficients) -> np.ndarray:
    """Nodal values at the mesh vertices of a Lagrange field."""
    V = field.space
    nv = V.mesh.n_vertices
    if V.family == LAGRANGE_SCALAR:
        return field.values[:nv].copy()
    if V.family == LAGRANGE_VECTOR:
        return field.values.reshape(V.dim, V.n_scalar)[:, :nv].T.copy()
    raise ValueError("vertex values need a Lagrange field")


def export_vtu(mesh: Mesh, fields: dict, path) -> None:
    """Legacy-VTK export; Lagrange fields as point data, edge fields as cell means."""
    point, cell = {}, {}
    for name, f in fields.items():
        if isinstance(f, FieldCoefficients):
            if f.space.mesh is not mesh:
                raise ValueError(f"field {name!r} lives on a different mesh")
            if f.space.family == NEDELEC:
                cell[name] = cell_average(f)
            else:
                point[name] = vertex_values(f)
        else:
            arr = np.asarray(f, dtype=float)
            if len(arr) == mesh.n_vertices:
                point[name] = arr
            elif len(arr) == mesh.n_cells:
                cell[name] = arr
            else:
                raise ValueError(f"array {name!r} matches neither vertices nor cells")
    write_vtk(mesh, path, point, cell)


def snapshot_name(case: str, t: float) -> str:
    return f"{case}_t{t:g}.vtk"
