"""Lagrange and first-kind Nedelec spaces on simplicial meshes.

Global DOF conventions
----------------------
* ``lagrange-scalar``: order 1 -> one DOF per vertex; order 2 -> vertices,
  then edge midpoints (``n_vertices + edge``).
* ``lagrange-vector``: component blocks, ``dof = comp * n_scalar + scalar_dof``.
* ``nedelec`` order 1: one DOF per edge, ``int_e u.t ds`` with ``t`` the unit
  tangent from the lower to the higher vertex index.
* ``nedelec`` order 2 (2D): edge ``e`` carries ``2e`` (moment against 1) and
  ``2e+1`` (moment against ``2s-1``, ``s`` the edge parameter from the lower
  vertex); cell ``c`` carries ``2*n_edges + 2c + k``, the mean of ``u`` dotted
  with the cell edge vector ``v_{k+1} - v_0``.

Edge functionals are written as ``int_0^1 u(x(s)).(x_b - x_a) q(s) ds``, which
is invariant under the covariant Piola map, so reference and physical DOFs
coincide up to the orientation sign of the constant edge moment.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.sparse as sp

from .mesh import LOCAL_EDGES, Mesh
from .quadrature import gauss_rule, simplex_type

LAGRANGE_SCALAR = "lagrange-scalar"
LAGRANGE_VECTOR = "lagrange-vector"
NEDELEC = "nedelec"
FAMILIES = (LAGRANGE_SCALAR, LAGRANGE_VECTOR, NEDELEC)


class UnsupportedElement(ValueError):
    pass


# ----------------------------------------------------------------------
# reference elements


def _barycentric(X: np.ndarray):
    lam = np.column_stack([1.0 - X.sum(axis=1), X])
    d = X.shape[1]
    glam = np.vstack([-np.ones(d), np.eye(d)])  # (d+1, d)
    return lam, glam


class LagrangeRef:
    def __init__(self, dim: int, order: int):
        if order not in (1, 2):
            raise UnsupportedElement(f"Lagrange order {order} is not supported")
        self.dim, self.order = dim, order
        verts = np.vstack([np.zeros(dim), np.eye(dim)])
        if order == 1:
            self.nodes = verts
        else:
            le = LOCAL_EDGES[dim]
            self.nodes = np.vstack([verts, 0.5 * (verts[le[:, 0]] + verts[le[:, 1]])])
        self.n = len(self.nodes)

    def tabulate(self, X: np.ndarray):
        """Values (nq, n) and reference gradients (nq, n, d)."""
        lam, glam = _barycentric(X)
        if self.order == 1:
            return lam, np.broadcast_to(glam, (len(X),) + glam.shape).copy()
        le = LOCAL_EDGES[self.dim]
        a, b = le[:, 0], le[:, 1]
        vals = np.hstack([lam * (2 * lam - 1), 4 * lam[:, a] * lam[:, b]])
        gv = (4 * lam - 1)[:, :, None] * glam[None, :, :]
        ge = 4 * (lam[:, a, None] * glam[None, b, :] + lam[:, b, None] * glam[None, a, :])
        return vals, np.concatenate([gv, ge], axis=1)


def _monomials2(X: np.ndarray):
    """Monomials [1, x, y, x^2, xy, y^2] with x- and y-derivatives."""
    x, y = X[:, 0], X[:, 1]
    one, zero = np.ones_like(x), np.zeros_like(x)
    m = np.column_stack([one, x, y, x * x, x * y, y * y])
    mx = np.column_stack([zero, one, zero, 2 * x, y, zero])
    my = np.column_stack([zero, zero, one, zero, x, 2 * y])
    return m, mx, my


# First-kind Nedelec degree-2 space on triangles: P1^2 plus {(-y q, x q): q homogeneous P1}.
_NED2_GENERATORS = np.zeros((8, 2, 6))
for _k, (_c, _m) in enumerate([(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (1, 2)]):
    _NED2_GENERATORS[_k, _c, _m] = 1.0
_NED2_GENERATORS[6, 0, 4], _NED2_GENERATORS[6, 1, 3] = -1.0, 1.0  # (-xy, x^2)
_NED2_GENERATORS[7, 0, 5], _NED2_GENERATORS[7, 1, 4] = -1.0, 1.0  # (-y^2, xy)


# quadrature degree for interpolation moments; high enough that smooth data is
# interpolated to round-off on desk meshes
MOMENT_DEGREE = 8


def edge_moment_weights(order: int):
    """Gauss points on [0,1] and the edge test polynomials evaluated there."""
    rule = gauss_rule("interval", MOMENT_DEGREE)
    s, w = rule.points[:, 0], rule.weights
    tests = [np.ones_like(s)] if order == 1 else [np.ones_like(s), 2 * s - 1]
    return s, w, tests


class NedelecRef:
    def __init__(self, dim: int, order: int):
        if order == 1:
            pass
        elif order == 2 and dim == 2:
            self._build_order2()
        else:
            raise UnsupportedElement(f"Nedelec order {order} in {dim}D is not supported")
        self.dim, self.order = dim, order
        ne = len(LOCAL_EDGES[dim])
        self.n = ne if order == 1 else 2 * ne + 2

    def _build_order2(self):
        verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        s, w, tests = edge_moment_weights(2)
        rows = []
        for a, b in LOCAL_EDGES[2]:
            pts = verts[a] + s[:, None] * (verts[b] - verts[a])
            m, _, _ = _monomials2(pts)
            vals = np.einsum("kcm,qm->qkc", _NED2_GENERATORS, m)  # (nq, 8, 2)
            tang = vals @ (verts[b] - verts[a])
            for q in tests:
                rows.append((w * q) @ tang)
        rule = gauss_rule("triangle", 2)
        m, _, _ = _monomials2(rule.points)
        vals = np.einsum("kcm,qm->qkc", _NED2_GENERATORS, m)
        for c in range(2):
            rows.append(2.0 * rule.weights @ vals[:, :, c])
        V = np.array(rows)  # V[i, k] = DOF_i(generator_k)
        self._coef = np.einsum("kj,kcm->jcm", np.linalg.inv(V), _NED2_GENERATORS)

    def tabulate(self, X: np.ndarray):
        """Reference values (nq, n, d) and curls: (nq, n) in 2D, (nq, n, 3) in 3D."""
        if self.order == 2:
            m, mx, my = _monomials2(X)
            vals = np.einsum("jcm,qm->qjc", self._coef, m)
            curl = my @ -self._coef[:, 0, :].T + mx @ self._coef[:, 1, :].T
            return vals, curl
        lam, glam = _barycentric(X)
        le = LOCAL_EDGES[self.dim]
        a, b = le[:, 0], le[:, 1]
        vals = lam[:, a, None] * glam[None, b, :] - lam[:, b, None] * glam[None, a, :]
        if self.dim == 2:
            c = 2 * (glam[a, 0] * glam[b, 1] - glam[a, 1] * glam[b, 0])
            curl = np.broadcast_to(c, (len(X), len(a))).copy()
        else:
            c = 2 * np.cross(glam[a], glam[b])
            curl = np.broadcast_to(c, (len(X),) + c.shape).copy()
        return vals, curl


@lru_cache(maxsize=None)
def reference_element(family: str, dim: int, order: int):
    if family == NEDELEC:
        return NedelecRef(dim, order)
    return LagrangeRef(dim, order)


# ----------------------------------------------------------------------
# global spaces


def count_dofs(mesh: Mesh, family: str, order: int) -> int:
    """Closed-form DOF count from mesh entity counts."""
    d = mesh.dim
    if family in (LAGRANGE_SCALAR, LAGRANGE_VECTOR):
        n = mesh.n_vertices if order == 1 else mesh.n_vertices + mesh.n_edges
        if order not in (1, 2):
            raise UnsupportedElement(f"Lagrange order {order} is not supported")
        return n * (d if family == LAGRANGE_VECTOR else 1)
    if family == NEDELEC:
        if order == 1:
            return mesh.n_edges
        if order == 2:
            return 2 * mesh.n_edges + (2 * mesh.n_cells if d == 2 else 2 * mesh.n_faces)
    raise UnsupportedElement(f"no count for {family} order {order}")


@dataclass(frozen=True)
class Tabulation:
    """Per-cell basis data at the points of one quadrature rule.

    ``weights`` already include the cell measure. Lagrange spaces fill
    ``values`` (nq, nb) and ``grads`` (nc, nq, nb, d); Nedelec spaces fill
    ``values`` (nc, nq, nb, d) and ``curls`` ((nc, nq, nb) in 2D, (nc, nq, nb, 3) in 3D).
    Vector Lagrange tabulations describe the scalar factor only.
    """

    points: np.ndarray  # physical quadrature points (nc, nq, d)
    weights: np.ndarray  # (nc, nq)
    values: np.ndarray
    grads: np.ndarray | None = None
    curls: np.ndarray | None = None


class FunctionSpace:
    def __init__(self, mesh: Mesh, family: str, order: int):
        if family not in FAMILIES:
            raise UnsupportedElement(f"unknown family {family!r}")
        self.mesh, self.family, self.order = mesh, family, order
        self.dim = mesh.dim
        self.ref = reference_element(family, mesh.dim, order)
        self.dof_count = count_dofs(mesh, family, order)
        self.cell_dofs, self.cell_signs = self._dof_map()

    def __repr__(self):
        return f"FunctionSpace({self.family}, order={self.order}, dofs={self.dof_count})"

    @property
    def is_vector(self) -> bool:
        return self.family != LAGRANGE_SCALAR

    @property
    def n_scalar(self) -> int:
        """Number of scalar DOFs per component (Lagrange spaces)."""
        return self.dof_count // self.dim if self.family == LAGRANGE_VECTOR else self.dof_count

    def _dof_map(self):
        m = self.mesh
        if self.family == NEDELEC:
            if self.order == 1:
                return m.cell_edges, m.cell_edge_signs.astype(float)
            ne = m.n_edges
            nloc = self.ref.n
            dofs = np.empty((m.n_cells, nloc), dtype=np.int64)
            signs = np.ones((m.n_cells, nloc))
            dofs[:, 0:6:2] = 2 * m.cell_edges
            dofs[:, 1:6:2] = 2 * m.cell_edges + 1
            signs[:, 0:6:2] = m.cell_edge_signs
            dofs[:, 6] = 2 * ne + 2 * np.arange(m.n_cells)
            dofs[:, 7] = dofs[:, 6] + 1
            return dofs, signs
        scalar = m.cells if self.order == 1 else np.hstack([m.cells, m.n_vertices + m.cell_edges])
        if self.family == LAGRANGE_SCALAR:
            return scalar, np.ones(scalar.shape)
        ns = self.n_scalar
        dofs = np.hstack([scalar + c * ns for c in range(self.dim)])
        return dofs, np.ones(dofs.shape)

    @cached_property
    def scalar_cell_dofs(self) -> np.ndarray:
        """Cell DOF map of the scalar factor (Lagrange spaces)."""
        if self.family == LAGRANGE_VECTOR:
            return np.ascontiguousarray(self.cell_dofs[:, : self.ref.n])
        return self.cell_dofs

    # ------------------------------------------------------------------
    @cached_property
    def scalar_dof_coordinates(self) -> np.ndarray:
        m = self.mesh
        if self.family == NEDELEC:
            raise AttributeError("Nedelec DOFs are moments, not point values")
        if self.order == 1:
            return m.vertices
        mid = 0.5 * (m.vertices[m.edges[:, 0]] + m.vertices[m.edges[:, 1]])
        return np.vstack([m.vertices, mid])

    def boundary_dofs(self, markers=None) -> np.ndarray:
        """Essential DOFs on boundary facets with the given markers (all if None)."""
        m = self.mesh
        if self.family == NEDELEC:
            edges = m.boundary_edges(markers)
            if self.order == 1:
                return edges
            return np.sort(np.concatenate([2 * edges, 2 * edges + 1]))
        scalar = m.boundary_vertices(markers)
        if self.order == 2:
            scalar = np.concatenate([scalar, m.n_vertices + m.boundary_edges(markers)])
        scalar = np.sort(scalar)
        if self.family == LAGRANGE_SCALAR:
            return scalar
        return np.concatenate([scalar + c * self.n_scalar for c in range(self.dim)])

    # ------------------------------------------------------------------
    def tabulate(self, degree: int) -> Tabulation:
        return _tabulate(self, degree)

    def interpolate(self, field) -> "FieldCoefficients":
        """Canonical interpolant of ``field(points) -> values``."""
        return FieldCoefficients(self, self.interpolate_values(field))

    def interpolate_values(self, field) -> np.ndarray:
        m = self.mesh
        if self.family == LAGRANGE_SCALAR:
            return np.asarray(field(self.scalar_dof_coordinates), dtype=float).reshape(-1)
        if self.family == LAGRANGE_VECTOR:
            vals = np.asarray(field(self.scalar_dof_coordinates), dtype=float)
            return vals.T.reshape(-1).copy()
        return self._nedelec_interpolate(field)

    def _nedelec_interpolate(self, field) -> np.ndarray:
        m = self.mesh
        s, w, tests = edge_moment_weights(self.order)
        xa = m.vertices[m.edges[:, 0]]
        tvec = m.vertices[m.edges[:, 1]] - xa
        pts = xa[:, None, :] + s[None, :, None] * tvec[:, None, :]
        vals = np.asarray(field(pts.reshape(-1, self.dim)), dtype=float).reshape(pts.shape)
        tang = np.einsum("eqd,ed->eq", vals, tvec)
        moments = [tang @ (w * q) for q in tests]
        if self.order == 1:
            return moments[0]
        out = np.empty(self.dof_count)
        out[0 : 2 * m.n_edges : 2] = moments[0]
        out[1 : 2 * m.n_edges : 2] = moments[1]
        rule = gauss_rule("triangle", MOMENT_DEGREE)
        J = m.jacobians
        qp = m.vertices[m.cells[:, 0]][:, None, :] + np.einsum("cij,qj->cqi", J, rule.points)
        fv = np.asarray(field(qp.reshape(-1, 2)), dtype=float).reshape(qp.shape)
        # mean of u . (v_{k+1} - v_0); edge vectors are the columns of J
        mean = 2.0 * np.einsum("q,cqi,cik->ck", rule.weights, fv, J)
        out[2 * m.n_edges :] = mean.reshape(-1)
        return out

    # ------------------------------------------------------------------
    def _local_basis(self, cells: np.ndarray, points: np.ndarray):
        X = self.mesh.to_reference(cells, points)
        v, d = self.ref.tabulate(X)
        return X, v, d

    def evaluate(self, coeffs: np.ndarray, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        cells = self.mesh.locate(points)
        _, v, _ = self._local_basis(cells, points)
        c = coeffs[self.cell_dofs[cells]] * self.cell_signs[cells]
        if self.family == LAGRANGE_SCALAR:
            return np.einsum("pb,pb->p", v, c)
        if self.family == LAGRANGE_VECTOR:
            nb = self.ref.n
            return np.stack([np.einsum("pb,pb->p", v, c[:, k * nb : (k + 1) * nb]) for k in range(self.dim)], axis=1)
        phys = np.einsum("pij,pbj->pbi", np.transpose(self.mesh.inv_jacobians[cells], (0, 2, 1)), v)
        return np.einsum("pbi,pb->pi", phys, c)

    def gradient_evaluate(self, coeffs: np.ndarray, points: np.ndarray) -> np.ndarray:
        if self.family == NEDELEC:
            raise ValueError("gradient is not defined for Nedelec fields; use curl_evaluate")
        points = np.atleast_2d(np.asarray(points, dtype=float))
        cells = self.mesh.locate(points)
        _, _, g = self._local_basis(cells, points)
        g = np.einsum("pbj,pji->pbi", g, self.mesh.inv_jacobians[cells])
        c = coeffs[self.cell_dofs[cells]]
        if self.family == LAGRANGE_SCALAR:
            return np.einsum("pbi,pb->pi", g, c)
        nb = self.ref.n
        return np.stack(
            [np.einsum("pbi,pb->pi", g, c[:, k * nb : (k + 1) * nb]) for k in range(self.dim)], axis=1
        )

    def curl_evaluate(self, coeffs: np.ndarray, points: np.ndarray) -> np.ndarray:
        if self.family != NEDELEC:
            raise ValueError("curl_evaluate is defined for Nedelec fields")
        points = np.atleast_2d(np.asarray(points, dtype=float))
        cells = self.mesh.locate(points)
        _, _, cu = self._local_basis(cells, points)
        c = coeffs[self.cell_dofs[cells]] * self.cell_signs[cells]
        det = self.mesh.dets[cells]
        if self.dim == 2:
            return np.einsum("pb,pb->p", cu, c) / det
        phys = np.einsum("pij,pbj->pbi", self.mesh.jacobians[cells], cu) / det[:, None, None]
        return np.einsum("pbi,pb->pi", phys, c)


@lru_cache(maxsize=64)
def _tabulate(space: FunctionSpace, degree: int) -> Tabulation:
    m = space.mesh
    rule = gauss_rule(simplex_type(m.dim), degree)
    J, Jinv, det = m.jacobians, m.inv_jacobians, m.dets
    pts = m.vertices[m.cells[:, 0]][:, None, :] + np.einsum("cij,qj->cqi", J, rule.points)
    W = np.abs(det)[:, None] * rule.weights[None, :]
    vals, d = space.ref.tabulate(rule.points)
    if space.family != NEDELEC:
        grads = np.einsum("qbj,cji->cqbi", d, Jinv)
        return Tabulation(pts, W, vals, grads=grads)
    sg = space.cell_signs
    phys = np.einsum("cji,qbj->cqbi", Jinv, vals) * sg[:, None, :, None]
    if m.dim == 2:
        curls = d[None, :, :] / det[:, None, None] * sg[:, None, :]
    else:
        curls = np.einsum("cij,qbj->cqbi", J, d) / det[:, None, None, None] * sg[:, None, :, None]
    return Tabulation(pts, W, phys, curls=curls)


def build_space(mesh: Mesh, family: str, order: int) -> FunctionSpace:
    supported = {
        (LAGRANGE_SCALAR, 1),
        (LAGRANGE_SCALAR, 2),
        (LAGRANGE_VECTOR, 1),
        (LAGRANGE_VECTOR, 2),
        (NEDELEC, 1),
    }
    if mesh.dim == 2:
        supported.add((NEDELEC, 2))
    if (family, order) not in supported:
        raise UnsupportedElement(f"unsupported element: {family} order {order} in {mesh.dim}D")
    return FunctionSpace(mesh, family, order)


@dataclass
class FieldCoefficients:
    space: FunctionSpace
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.space.dof_count,):
            raise ValueError(
                f"coefficient vector has shape {self.values.shape}, expected ({self.space.dof_count},)"
            )

    def __call__(self, points):
        return self.space.evaluate(self.values, points)

    def evaluate(self, points):
        return self.space.evaluate(self.values, points)

    def curl(self, points):
        return self.space.curl_evaluate(self.values, points)

    def gradient(self, points):
        return self.space.gradient_evaluate(self.values, points)

    def copy(self) -> "FieldCoefficients":
        return FieldCoefficients(self.space, self.values.copy())


def evaluate(field: FieldCoefficients, points) -> np.ndarray:
    return field.evaluate(points)


def curl_evaluate(field: FieldCoefficients, points) -> np.ndarray:
    return field.curl(points)


def interpolate(space: FunctionSpace, exact_field) -> FieldCoefficients:
    return space.interpolate(exact_field)


def gradient_inclusion_map(V: FunctionSpace, Q: FunctionSpace) -> sp.csr_matrix:
    """Matrix G with ``Q``-coefficients of ``grad s`` equal to ``G @ s`` for ``s`` in ``V``."""
    if V.family != LAGRANGE_SCALAR or Q.family != NEDELEC:
        raise ValueError("gradient_inclusion_map needs a scalar Lagrange and a Nedelec space")
    if V.order != Q.order:
        raise ValueError(f"order mismatch: V has order {V.order}, Q has order {Q.order}")
    if V.mesh is not Q.mesh:
        raise ValueError("spaces live on different meshes")
    m = V.mesh
    if Q.order == 1:
        ne = m.n_edges
        rows = np.repeat(np.arange(ne), 2)
        cols = m.edges.ravel()
        vals = np.tile([-1.0, 1.0], ne)
        return sp.csr_matrix((vals, (rows, cols)), shape=(ne, m.n_vertices))
    # order 2 (2D): apply reference DOF functionals to reference gradients
    Gref = _reference_gradient_dofs(V.ref)  # (nQ, nV)
    nc = m.n_cells
    rows = np.repeat(Q.cell_dofs, V.ref.n, axis=1).reshape(nc, Q.ref.n, V.ref.n)
    cols = np.broadcast_to(V.cell_dofs[:, None, :], rows.shape)
    vals = Q.cell_signs[:, :, None] * Gref[None]
    key = rows.ravel() * V.dof_count + cols.ravel()
    _, first = np.unique(key, return_index=True)
    G = sp.coo_matrix(
        (vals.ravel()[first], (rows.ravel()[first], cols.ravel()[first])), shape=(Q.dof_count, V.dof_count)
    ).tocsr()
    G.eliminate_zeros()
    return G


def _reference_gradient_dofs(lag: LagrangeRef) -> np.ndarray:
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    s, w, tests = edge_moment_weights(2)
    rows = []
    for a, b in LOCAL_EDGES[2]:
        pts = verts[a] + s[:, None] * (verts[b] - verts[a])
        _, g = lag.tabulate(pts)
        tang = g @ (verts[b] - verts[a])  # (nq, nV)
        for q in tests:
            rows.append((w * q) @ tang)
    rule = gauss_rule("triangle", 2)
    _, g = lag.tabulate(rule.points)
    for c in range(2):
        rows.append(2.0 * rule.weights @ g[:, :, c])
    G = np.array(rows)
    G[np.abs(G) < 1e-14] = 0.0
    return G
