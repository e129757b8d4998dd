"""Block assembly of the linearized MHD step systems.

Unknown layout of the coupled system: ``[u | p | B | lambda?]`` where the
optional trailing multiplier enforces a mean-zero pressure.

Sign convention. With ``Bdiv[i, j] = -(q_j, div phi_i)`` and
``N2[i, j] = -(curl psi_j x B_prev, phi_i)``, the continuity rows are written as
``(div u, q) = -(Bdiv^T u)`` and the induction coupling enters the magnetic
rows as ``-N2^T``. Both off-diagonal pairs are then skew, so the quadratic
form of the coupled matrix is exactly the sum of the mass and dissipation
terms.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .fespace import LAGRANGE_SCALAR, LAGRANGE_VECTOR, NEDELEC, FieldCoefficients, FunctionSpace, build_space
from .mesh import Mesh
from .quadrature import FORM_DEGREE, LOAD_DEGREE


# ----------------------------------------------------------------------
# scatter helpers


class _Scatter:
    """Cached COO -> CSR pattern for one (row dof map, column dof map) pair."""

    def __init__(self, row_dofs: np.ndarray, col_dofs: np.ndarray, shape: tuple[int, int]):
        nc = len(row_dofs)
        r = np.broadcast_to(row_dofs[:, :, None], (nc, row_dofs.shape[1], col_dofs.shape[1]))
        c = np.broadcast_to(col_dofs[:, None, :], r.shape)
        key = r.ravel().astype(np.int64) * shape[1] + c.ravel()
        uniq, self.inverse = np.unique(key, return_inverse=True)
        self.shape = shape
        self.nnz = len(uniq)
        rows = uniq // shape[1]
        self.indices = (uniq % shape[1]).astype(np.int32)
        self.indptr = np.searchsorted(rows, np.arange(shape[0] + 1)).astype(np.int32)

    def __call__(self, local: np.ndarray) -> sp.csr_matrix:
        data = np.bincount(self.inverse, weights=local.ravel(), minlength=self.nnz)
        return sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()), shape=self.shape)


_SCATTERS: dict = {}


def _scatter(row_dofs, col_dofs, shape) -> _Scatter:
    key = (id(row_dofs), id(col_dofs), shape)
    if key not in _SCATTERS:
        _SCATTERS[key] = (_Scatter(row_dofs, col_dofs, shape), row_dofs, col_dofs)
    return _SCATTERS[key][0]


def _scalar_dofs(space: FunctionSpace) -> np.ndarray:
    """Cell DOF map of the scalar factor of a Lagrange space."""
    return space.scalar_cell_dofs


def _vector_kron(space: FunctionSpace, S: sp.csr_matrix) -> sp.csr_matrix:
    if space.family == LAGRANGE_VECTOR:
        return sp.kron(sp.identity(space.dim, format="csr"), S, format="csr")
    return S


def _degree(space: FunctionSpace) -> int:
    return FORM_DEGREE[space.dim]


# ----------------------------------------------------------------------
# blocks


def assemble_mass(space: FunctionSpace, degree: int | None = None) -> sp.csr_matrix:
    """Mass matrix ``(phi_j, phi_i)``."""
    T = space.tabulate(degree or _degree(space))
    if space.family == NEDELEC:
        local = np.einsum("cq,cqid,cqjd->cij", T.weights, T.values, T.values)
        return _scatter(space.cell_dofs, space.cell_dofs, (space.dof_count,) * 2)(local)
    local = np.einsum("cq,qi,qj->cij", T.weights, T.values, T.values)
    sd = _scalar_dofs(space)
    S = _scatter(sd, sd, (space.n_scalar,) * 2)(local)
    return _vector_kron(space, S)


def assemble_stiffness(space: FunctionSpace, degree: int | None = None) -> sp.csr_matrix:
    """``(grad phi_j, grad phi_i)`` for Lagrange spaces, ``(curl phi_j, curl phi_i)`` for Nedelec."""
    T = space.tabulate(degree or _degree(space))
    if space.family == NEDELEC:
        if space.dim == 2:
            local = np.einsum("cq,cqi,cqj->cij", T.weights, T.curls, T.curls)
        else:
            local = np.einsum("cq,cqid,cqjd->cij", T.weights, T.curls, T.curls)
        return _scatter(space.cell_dofs, space.cell_dofs, (space.dof_count,) * 2)(local)
    local = np.einsum("cq,cqid,cqjd->cij", T.weights, T.grads, T.grads)
    sd = _scalar_dofs(space)
    S = _scatter(sd, sd, (space.n_scalar,) * 2)(local)
    return _vector_kron(space, S)


def _coeff_values(w) -> np.ndarray:
    return w.values if isinstance(w, FieldCoefficients) else np.asarray(w, dtype=float)


def velocity_at_quadrature(space: FunctionSpace, w, degree: int | None = None) -> np.ndarray:
    """Values of a vector Lagrange field at the quadrature points, shape (nc, nq, d)."""
    T = space.tabulate(degree or _degree(space))
    comps = _coeff_values(w).reshape(space.dim, space.n_scalar)
    wloc = comps[:, _scalar_dofs(space)]  # (d, nc, nb)
    return np.einsum("qb,kcb->cqk", T.values, wloc)


def edge_field_at_quadrature(space: FunctionSpace, B, degree: int | None = None) -> np.ndarray:
    T = space.tabulate(degree or _degree(space))
    loc = _coeff_values(B)[space.cell_dofs]
    return np.einsum("cqbd,cb->cqd", T.values, loc)


def convection_local(velocity_space: FunctionSpace, w, degree: int | None = None) -> np.ndarray:
    """Per-cell scalar convection matrices, shape (nc, nb, nb); see :func:`assemble_convection`."""
    space = velocity_space
    deg = degree or _degree(space)
    T = space.tabulate(deg)
    wq = velocity_at_quadrature(space, w, deg)
    adv = np.einsum("cqk,cqjk->cqj", wq, T.grads)
    C = np.einsum("cq,qi,cqj->cij", T.weights, T.values, adv)
    return 0.5 * (C - np.transpose(C, (0, 2, 1)))


def assemble_convection(velocity_space: FunctionSpace, w, degree: int | None = None) -> sp.csr_matrix:
    """Skew-symmetrized convection ``1/2 [(w.grad phi_j, phi_i) - (w.grad phi_i, phi_j)]``."""
    space = velocity_space
    sd = _scalar_dofs(space)
    S = _scatter(sd, sd, (space.n_scalar,) * 2)(convection_local(space, w, degree))
    return _vector_kron(space, S)


def assemble_divergence(velocity_space: FunctionSpace, pressure_space: FunctionSpace) -> sp.csr_matrix:
    """``Bdiv[i, j] = -(q_j, div phi_i)``."""
    deg = _degree(velocity_space)
    Tu = velocity_space.tabulate(deg)
    Tp = pressure_space.tabulate(deg)
    # (nc, d, nb_u, nb_p): component k of phi_i contributes d_k phi
    local = -np.einsum("cq,cqak,qj->ckaj", Tu.weights, Tu.grads, Tp.values)
    nc = len(local)
    local = local.reshape(nc, -1, Tp.values.shape[1])
    return _scatter(velocity_space.cell_dofs, pressure_space.cell_dofs,
                    (velocity_space.dof_count, pressure_space.dof_count))(local)


def coupling_local(velocity_space: FunctionSpace, edge_space: FunctionSpace, Bprev) -> np.ndarray:
    """Per-cell coupling matrices, shape (nc, d * nb_u, nb_B); see :func:`assemble_coupling`."""
    deg = _degree(velocity_space)
    Tu = velocity_space.tabulate(deg)
    Tb = edge_space.tabulate(deg)
    Bq = edge_field_at_quadrature(edge_space, Bprev, deg)  # (nc, nq, d)
    if velocity_space.dim == 2:
        # -(curl psi x B) = curl psi * (B2, -B1)
        rot = np.stack([Bq[..., 1], -Bq[..., 0]], axis=-1)
        force = np.einsum("cqj,cqk->cqjk", Tb.curls, rot)
    else:
        force = -np.cross(Tb.curls, Bq[:, :, None, :])  # (nc, nq, nb_B, 3)
    local = np.einsum("cq,qa,cqjk->ckaj", Tu.weights, Tu.values, force)
    return local.reshape(len(local), -1, edge_space.ref.n)


def assemble_coupling(velocity_space: FunctionSpace, edge_space: FunctionSpace, Bprev) -> sp.csr_matrix:
    """``N2[i, j] = -(curl psi_j x B_prev, phi_i)``.

    In 2D this is ``(curl psi_j, B_prev^T T phi_i)`` with ``T`` the rotation by pi/2.
    """
    return _scatter(velocity_space.cell_dofs, edge_space.cell_dofs,
                    (velocity_space.dof_count, edge_space.dof_count))(coupling_local(velocity_space, edge_space, Bprev))


def assemble_load(velocity_space: FunctionSpace, f, t: float = 0.0, degree: int = LOAD_DEGREE) -> np.ndarray:
    """Load vector ``(f(., t), phi_i)`` on a Lagrange space; ``f(points, t)``."""
    space = velocity_space
    T = space.tabulate(degree)
    pts = T.points.reshape(-1, space.dim)
    fv = np.asarray(f(pts, t), dtype=float)
    nc, nq = T.weights.shape
    sd = _scalar_dofs(space)
    out = np.zeros(space.dof_count)
    if space.family == LAGRANGE_SCALAR:
        loc = np.einsum("cq,qa,cq->ca", T.weights, T.values, fv.reshape(nc, nq))
        np.add.at(out, sd, loc)
        return out
    fv = fv.reshape(nc, nq, space.dim)
    loc = np.einsum("cq,qa,cqk->kca", T.weights, T.values, fv)
    for k in range(space.dim):
        out[k * space.n_scalar : (k + 1) * space.n_scalar] = np.bincount(
            sd.ravel(), weights=loc[k].ravel(), minlength=space.n_scalar
        )
    return out


def assemble_magnetic_source(edge_space: FunctionSpace, g, t: float = 0.0, degree: int = LOAD_DEGREE) -> np.ndarray:
    """Source vector ``(g(., t), psi_i)`` on a Nedelec space."""
    T = edge_space.tabulate(degree)
    nc, nq = T.weights.shape
    gv = np.asarray(g(T.points.reshape(-1, edge_space.dim), t), dtype=float).reshape(nc, nq, edge_space.dim)
    loc = np.einsum("cq,cqbd,cqd->cb", T.weights, T.values, gv)
    return np.bincount(edge_space.cell_dofs.ravel(), weights=loc.ravel(), minlength=edge_space.dof_count)


def pressure_mean_vector(pressure_space: FunctionSpace) -> np.ndarray:
    """Entries ``(1, q_j)``."""
    return assemble_load(pressure_space, lambda x, t: np.ones(len(x)), degree=2)


# ----------------------------------------------------------------------
# coupled system


@dataclass(frozen=True)
class Coefficients:
    """Weights of the four physical terms.

    ``viscous * Lap u``, ``lorentz * curl B x B``, ``diffusion * curl curl B``,
    ``induction * curl(u x B)``. From (Re, Rm, Sc): (1/Re, Sc, Sc/Rm, Sc).
    """

    viscous: float
    lorentz: float
    diffusion: float
    induction: float

    @classmethod
    def from_numbers(cls, Re: float, Rm: float, Sc: float) -> "Coefficients":
        for name, v in (("Re", Re), ("Rm", Rm), ("Sc", Sc)):
            if not v > 0:
                raise ValueError(f"{name} must be positive, got {v}")
        return cls(1.0 / Re, Sc, Sc / Rm, Sc)

    def __post_init__(self):
        if not (self.viscous > 0 and self.diffusion > 0 and self.lorentz > 0 and self.induction > 0):
            raise ValueError("all four coefficients must be positive")

    @property
    def magnetic_weight(self) -> float:
        """Weight of ||B||^2 in the conserved energy (1 for the Re/Rm/Sc form)."""
        return self.lorentz / self.induction


class MHDSpaces:
    """Velocity, pressure, magnetic and auxiliary scalar spaces on one mesh."""

    def __init__(self, mesh: Mesh, k: int = 1, k_hat: int = 1):
        self.mesh, self.k, self.k_hat = mesh, k, k_hat
        self.velocity = build_space(mesh, LAGRANGE_VECTOR, k + 1)
        self.pressure = build_space(mesh, LAGRANGE_SCALAR, k)
        self.magnetic = build_space(mesh, NEDELEC, k_hat)
        self.scalar_aux = build_space(mesh, LAGRANGE_SCALAR, k_hat)

    @property
    def sizes(self) -> tuple[int, int, int]:
        return self.velocity.dof_count, self.pressure.dof_count, self.magnetic.dof_count

    @cached_property
    def M1(self):
        return assemble_mass(self.velocity)

    @cached_property
    def K1(self):
        return assemble_stiffness(self.velocity)

    @cached_property
    def Bdiv(self):
        return assemble_divergence(self.velocity, self.pressure)

    @cached_property
    def M2(self):
        return assemble_mass(self.magnetic)

    @cached_property
    def K2(self):
        return assemble_stiffness(self.magnetic)

    @cached_property
    def Mp(self):
        return assemble_mass(self.pressure)

    @cached_property
    def pressure_mean(self):
        return pressure_mean_vector(self.pressure)

    @cached_property
    def G(self):
        from .fespace import gradient_inclusion_map

        return gradient_inclusion_map(self.scalar_aux, self.magnetic)


@dataclass(frozen=True)
class Layout:
    n_u: int
    n_p: int
    n_B: int
    multiplier: bool

    @property
    def u(self) -> slice:
        return slice(0, self.n_u)

    @property
    def p(self) -> slice:
        return slice(self.n_u, self.n_u + self.n_p)

    @property
    def B(self) -> slice:
        return slice(self.n_u + self.n_p, self.n_u + self.n_p + self.n_B)

    @property
    def size(self) -> int:
        return self.n_u + self.n_p + self.n_B + int(self.multiplier)


@dataclass
class BlockSystem:
    """One step's coupled system.

    ``A_free``/``b_free`` hold the raw Galerkin system; ``A``/``b`` have the
    essential conditions and the pressure constraint applied.
    """

    blocks: dict
    A_free: sp.csr_matrix
    b_free: np.ndarray
    layout: Layout
    A: sp.csr_matrix | None = None
    b: np.ndarray | None = None
    essential: dict = field(default_factory=dict)  # global row -> value

    def split(self, x: np.ndarray):
        L = self.layout
        return x[L.u], x[L.p], x[L.B]


def couple_blocks(Auu, Bdiv, AuB, ABu, ABB, n_p: int) -> sp.csr_matrix:
    """Assemble ``[[Auu, Bdiv, AuB], [-Bdiv^T, 0, 0], [ABu, 0, ABB]]``."""
    Zpp = sp.csr_matrix((n_p, n_p))
    return sp.bmat(
        [[Auu, Bdiv, AuB], [-Bdiv.T, Zpp, None], [ABu, None, ABB]],
        format="csr",
    )


def apply_essential(A: sp.csr_matrix, b: np.ndarray, rows: np.ndarray, values: np.ndarray):
    """Row replacement: constrained rows become identity rows with the prescribed value."""
    n = A.shape[0]
    rows = np.asarray(rows, dtype=np.int64)
    keep = np.ones(n)
    keep[rows] = 0.0
    A = sp.diags(keep) @ A
    diag = np.zeros(n)
    diag[rows] = 1.0
    A = (A + sp.diags(diag)).tocsr()
    b = b.copy()
    b[rows] = values
    return A, b


def apply_pressure_constraint(system: BlockSystem, mode: str = "mean-zero", pin_index: int = 0,
                              pin_value: float = 0.0, mean: np.ndarray | None = None) -> BlockSystem:
    """Fix the pressure constant: append a mean-zero multiplier or pin one pressure DOF."""
    L = system.layout
    A, b = system.A, system.b
    if mode == "mean-zero":
        if mean is None:
            raise ValueError("mean-zero mode needs the pressure mean vector")
        n = A.shape[0]
        col = np.zeros(n)
        col[L.p] = -mean
        row = np.zeros(n + 1)
        row[L.p] = mean
        A = sp.vstack([sp.hstack([A, sp.csr_matrix(col[:, None])]), sp.csr_matrix(row[None, :])], format="csr")
        b = np.append(b, 0.0)
        layout = Layout(L.n_u, L.n_p, L.n_B, True)
    elif mode == "pin-node":
        if not 0 <= pin_index < L.n_p:
            raise IndexError(f"pin node index {pin_index} out of range for {L.n_p} pressure DOFs")
        r = L.p.start + pin_index
        A, b = apply_essential(A, b, [r], [pin_value])
        layout = L
    else:
        raise ValueError(f"unknown pressure mode {mode!r}")
    system.A, system.b, system.layout = A, b, layout
    return system


def write_coo(A, path) -> None:
    """Dump a sparse matrix as ``row col value`` lines."""
    C = sp.coo_matrix(A)
    with open(path, "w") as fh:
        for i, j, v in zip(C.row, C.col, C.data):
            fh.write(f"{i} {j} {v:.17g}\n")


# ----------------------------------------------------------------------
# step systems

B_NATURAL, B_TANGENTIAL, B_MIXED = "natural", "tangential", "mixed"
MEAN_ZERO, PIN_NODE = "mean-zero", "pin-node"


@dataclass
class MHDProblem:
    """Discrete problem data shared by every step.

    Callables take ``(points, t)``. ``u_bc``/``B_bc`` give the essential data
    (``None`` means homogeneous). ``b_markers`` lists the boundary sides where
    ``B x n`` is prescribed in ``mixed`` mode.
    """

    coefficients: Coefficients
    tau: float
    f: object = None
    g: object = None
    u_bc: object = None
    B_bc: object = None
    b_mode: str = B_NATURAL
    b_markers: tuple = ()
    pressure_mode: str = MEAN_ZERO
    pin_point: tuple | None = None
    pin_value: object = 0.0  # float or callable(t)

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"time step must be positive, got {self.tau}")
        if self.b_mode not in (B_NATURAL, B_TANGENTIAL, B_MIXED):
            raise ValueError(f"unknown B boundary mode {self.b_mode!r}")
        if self.pressure_mode not in (MEAN_ZERO, PIN_NODE):
            raise ValueError(f"unknown pressure mode {self.pressure_mode!r}")

    @property
    def homogeneous(self) -> bool:
        return self.u_bc is None and (self.B_bc is None or self.b_mode == B_NATURAL)


class SystemPattern:
    """Fixed CSR pattern of the coupled step matrix.

    Holds scatter positions for the parts that change every step (the
    convection and coupling blocks) so a new matrix is one ``bincount`` over
    precomputed indices.
    """

    def __init__(self, spaces: MHDSpaces, layout: Layout):
        S, L = spaces, layout
        n = L.size
        self.n, self.layout = n, L
        Vu, Vp, VB = S.velocity, S.pressure, S.magnetic
        oB = L.B.start
        sd, ns = _scalar_dofs(Vu), Vu.n_scalar
        cu, cp, cB = Vu.cell_dofs, Vp.cell_dofs, VB.cell_dofs + oB

        def pairs(r, c):
            return (r[:, :, None] * n + c[:, None, :]).ravel()

        uu = np.concatenate([pairs(sd + k * ns, sd + k * ns) for k in range(Vu.dim)])
        uB, Bu = pairs(cu, cB), pairs(cB, cu)
        parts = [uu, pairs(cu, cp + L.p.start), pairs(cp + L.p.start, cu), uB, Bu, pairs(cB, cB),
                 np.arange(n, dtype=np.int64) * (n + 1)]
        if L.multiplier:
            pr = np.arange(L.p.start, L.p.stop, dtype=np.int64)
            parts += [pr * n + (n - 1), (n - 1) * n + pr]
        self.keys = np.unique(np.concatenate(parts))
        rows = self.keys // n
        self.indices = (self.keys % n).astype(np.int32)
        self.indptr = np.searchsorted(rows, np.arange(n + 1)).astype(np.int32)
        self.rows = rows
        self.nnz = len(self.keys)
        self.pos_uu = np.searchsorted(self.keys, uu)
        self.pos_uB = np.searchsorted(self.keys, uB)
        # transpose positions in the same (cell, i, j) order as the uB block
        nc, nbu, nbB = len(cu), cu.shape[1], cB.shape[1]
        self.pos_Bu = np.searchsorted(self.keys, Bu).reshape(nc, nbB, nbu).transpose(0, 2, 1).ravel()
        self.pos_diag = np.searchsorted(self.keys, np.arange(n, dtype=np.int64) * (n + 1))

    def positions(self, rows, cols) -> np.ndarray:
        return np.searchsorted(self.keys, np.asarray(rows, np.int64) * self.n + cols)

    def data_of(self, blocks) -> np.ndarray:
        """Data array for a sum of ``(matrix, row_offset, col_offset)`` contributions."""
        data = np.zeros(self.nnz)
        for Mb, r0, c0 in blocks:
            C = sp.coo_matrix(Mb)
            data += np.bincount(self.positions(C.row + r0, C.col + c0), weights=C.data, minlength=self.nnz)
        return data

    def matrix(self, data) -> sp.csr_matrix:
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))

    def row_mask(self, rows) -> np.ndarray:
        mark = np.zeros(self.n, dtype=bool)
        mark[np.asarray(rows, dtype=np.int64)] = True
        return mark[self.rows]


class StepAssembler:
    """Builds backward Euler and BDF2 systems for one problem on fixed spaces."""

    def __init__(self, problem: MHDProblem, spaces: MHDSpaces):
        self.problem, self.spaces = problem, spaces
        S = spaces
        self.u_bdofs = S.velocity.boundary_dofs()
        if problem.b_mode == B_NATURAL:
            self.B_bdofs = np.zeros(0, dtype=np.int64)
        elif problem.b_mode == B_TANGENTIAL:
            self.B_bdofs = S.magnetic.boundary_dofs()
        else:
            self.B_bdofs = S.magnetic.boundary_dofs(problem.b_markers)
        self.pin_index = 0
        if problem.pressure_mode == PIN_NODE:
            pt = np.zeros(S.mesh.dim) if problem.pin_point is None else np.asarray(problem.pin_point, float)
            coords = S.pressure.scalar_dof_coordinates
            self.pin_index = int(np.argmin(((coords - pt) ** 2).sum(axis=1)))
        nu, npr, nb = S.sizes
        self.layout = Layout(nu, npr, nb, False)
        self.full_layout = Layout(nu, npr, nb, problem.pressure_mode == MEAN_ZERO)
        self._pattern = None
        self._const = {}

    @property
    def pattern(self) -> SystemPattern:
        if self._pattern is None:
            self._pattern = SystemPattern(self.spaces, self.full_layout)
        return self._pattern

    def constrained_rows(self) -> np.ndarray:
        L = self.layout
        rows = [self.u_bdofs, L.B.start + self.B_bdofs]
        if self.problem.pressure_mode == PIN_NODE:
            rows.append(np.array([L.p.start + self.pin_index]))
        return np.concatenate(rows).astype(np.int64)

    # --------------------------------------------------------------
    def loads(self, t: float):
        P, S = self.problem, self.spaces
        F = assemble_load(S.velocity, P.f, t) if P.f is not None else np.zeros(S.sizes[0])
        G = assemble_magnetic_source(S.magnetic, P.g, t) if P.g is not None else np.zeros(S.sizes[2])
        return F, G

    def essential_data(self, t: float):
        P, S = self.problem, self.spaces
        L = self.layout
        if P.u_bc is None:
            uval = np.zeros(len(self.u_bdofs))
        else:
            uval = S.velocity.interpolate_values(lambda x: P.u_bc(x, t))[self.u_bdofs]
        if P.B_bc is None or len(self.B_bdofs) == 0:
            bval = np.zeros(len(self.B_bdofs))
        else:
            bval = S.magnetic.interpolate_values(lambda x: P.B_bc(x, t))[self.B_bdofs]
        rows = np.concatenate([self.u_bdofs, L.B.start + self.B_bdofs])
        return rows, np.concatenate([uval, bval])

    def _constant_part(self, scheme: str):
        """Step-independent data: diagonal blocks, divergence pair and multiplier."""
        if scheme not in self._const:
            P, S = self.problem, self.spaces
            c, tau = P.coefficients, P.tau
            L = self.full_layout
            if scheme == "be":
                Auu = S.M1 / tau + 0.5 * c.viscous * S.K1
                ABB = S.M2 / tau + 0.5 * c.diffusion * S.K2
            else:
                Auu = 1.5 / tau * S.M1 + c.viscous * S.K1
                ABB = 1.5 / tau * S.M2 + c.diffusion * S.K2
            blocks = [(Auu, 0, 0), (S.Bdiv, 0, L.p.start), (-S.Bdiv.T, L.p.start, 0), (ABB, L.B.start, L.B.start)]
            if L.multiplier:
                m = sp.csr_matrix(S.pressure_mean[:, None])
                blocks += [(-m, L.p.start, L.size - 1), (m.T, L.size - 1, L.p.start)]
            self._const[scheme] = (self.pattern.data_of(blocks), Auu.tocsr(), ABB.tocsr())
        return self._const[scheme]

    def _assemble(self, scheme, w, Bw, s_conv, s_lor, s_ind, rhs, t) -> BlockSystem:
        P, S = self.problem, self.spaces
        c = P.coefficients
        pat = self.pattern
        base, Auu, ABB = self._constant_part(scheme)
        n1 = convection_local(S.velocity, w)
        n2 = coupling_local(S.velocity, S.magnetic, Bw)
        data = base.copy()
        data += np.bincount(pat.pos_uu, weights=np.tile(s_conv * n1.ravel(), S.mesh.dim), minlength=pat.nnz)
        data += np.bincount(pat.pos_uB, weights=(s_lor * c.lorentz) * n2.ravel(), minlength=pat.nnz)
        data += np.bincount(pat.pos_Bu, weights=(-s_ind * c.induction) * n2.ravel(), minlength=pat.nnz)
        L = self.full_layout
        b = np.zeros(L.size)
        b[: L.B.stop] = rhs(n1, n2)
        A_free, b_free = pat.matrix(data.copy()), b.copy()
        # essential rows become identity rows
        rows, vals = self.essential_data(t)
        crow = self.constrained_rows()
        data[pat.row_mask(crow)] = 0.0
        data[pat.pos_diag[crow]] = 1.0
        b[rows] = vals
        if P.pressure_mode == PIN_NODE:
            b[L.p.start + self.pin_index] = P.pin_value(t) if callable(P.pin_value) else float(P.pin_value)
        blocks = dict(M1=S.M1, K1=S.K1, B=S.Bdiv, M2=S.M2, K2=S.K2, Auu=Auu, ABB=ABB, N1_local=n1, N2_local=n2)
        system = BlockSystem(blocks, A_free, b_free, L, pat.matrix(data), b)
        system.essential = dict(rows=rows, values=vals)
        return system

    def _apply_local(self, n1, n2, u, B):
        """``(N1 u, N2 B, N2^T u)`` from the per-cell matrices."""
        S = self.spaces
        Vu, VB = S.velocity, S.magnetic
        sd, ns, d = _scalar_dofs(Vu), Vu.n_scalar, Vu.dim
        N1u = np.empty(Vu.dof_count)
        for k in range(d):
            uk = u[k * ns : (k + 1) * ns]
            loc = np.einsum("cab,cb->ca", n1, uk[sd])
            N1u[k * ns : (k + 1) * ns] = np.bincount(sd.ravel(), weights=loc.ravel(), minlength=ns)
        loc = np.einsum("cij,cj->ci", n2, B[VB.cell_dofs])
        N2B = np.bincount(Vu.cell_dofs.ravel(), weights=loc.ravel(), minlength=Vu.dof_count)
        loc = np.einsum("cij,ci->cj", n2, u[Vu.cell_dofs])
        N2Tu = np.bincount(VB.cell_dofs.ravel(), weights=loc.ravel(), minlength=VB.dof_count)
        return N1u, N2B, N2Tu

    def backward_euler(self, u_prev: np.ndarray, B_prev: np.ndarray, t: float) -> BlockSystem:
        """System for the new level ``(u^n, p^n, B^n)`` of the linearized backward Euler scheme."""
        P, S = self.problem, self.spaces
        c, tau = P.coefficients, P.tau
        F, G = self.loads(t)

        def rhs(n1, n2):
            N1u, N2B, N2Tu = self._apply_local(n1, n2, u_prev, B_prev)
            bu = S.M1 @ u_prev / tau - 0.5 * c.viscous * (S.K1 @ u_prev) - 0.5 * N1u - 0.5 * c.lorentz * N2B + F
            bp = S.Bdiv.T @ u_prev
            bB = S.M2 @ B_prev / tau - 0.5 * c.diffusion * (S.K2 @ B_prev) + 0.5 * c.induction * N2Tu + G
            return np.concatenate([bu, bp, bB])

        system = self._assemble("be", u_prev, B_prev, 0.5, 0.5, 0.5, rhs, t)
        system.blocks.update(F=F, G=G)
        return system

    def bdf2(self, u1, B1, u2, B2, t: float) -> BlockSystem:
        """Three-level system with extrapolated transport/magnetic fields ``2 X^{n-1} - X^{n-2}``."""
        P, S = self.problem, self.spaces
        tau = P.tau
        F, G = self.loads(t)

        def rhs(n1, n2):
            bu = S.M1 @ (2 * u1 - 0.5 * u2) / tau + F
            bB = S.M2 @ (2 * B1 - 0.5 * B2) / tau + G
            return np.concatenate([bu, np.zeros(S.sizes[1]), bB])

        system = self._assemble("bdf2", 2 * u1 - u2, 2 * B1 - B2, 1.0, 1.0, 1.0, rhs, t)
        system.blocks.update(F=F, G=G)
        return system


def build_step_system(problem: MHDProblem, spaces: MHDSpaces, u_prev, B_prev, t: float) -> BlockSystem:
    return StepAssembler(problem, spaces).backward_euler(_coeff_values(u_prev), _coeff_values(B_prev), t)
