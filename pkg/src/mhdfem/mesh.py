"""Structured simplicial meshes of the unit square and unit cube."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np

# Local edges as pairs of local vertex indices (low -> high).
LOCAL_EDGES = {
    2: np.array([[0, 1], [0, 2], [1, 2]]),
    3: np.array([[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]]),
}
# Local facet i is opposite local vertex i.
LOCAL_FACETS = {
    2: np.array([[1, 2], [0, 2], [0, 1]]),
    3: np.array([[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]]),
}

# Boundary marker of a facet lying on x_k = 0 is 2k, on x_k = 1 it is 2k + 1.
INTERIOR = -1


def _permutation_sign(rows: np.ndarray) -> np.ndarray:
    """Sign of the permutation that sorts each row."""
    order = np.argsort(rows, axis=1)
    n = rows.shape[1]
    sign = np.ones(len(rows), dtype=np.int8)
    for i in range(n):
        for j in range(i + 1, n):
            sign *= np.where(order[:, i] > order[:, j], -1, 1).astype(np.int8)
    return sign


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming simplicial mesh with oriented edge and face connectivity.

    ``cells`` are stored with positive orientation. Global edges (and faces)
    are sorted vertex tuples, so every edge points from its lower to its
    higher vertex index.
    """

    vertices: np.ndarray
    cells: np.ndarray
    M: int = 0
    cells_per_box: int = 0

    def __post_init__(self):
        self.vertices.setflags(write=False)
        self.cells.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    # ------------------------------------------------------------------
    # connectivity
    @cached_property
    def _edge_data(self):
        le = LOCAL_EDGES[self.dim]
        pairs = self.cells[:, le]  # (nc, ne, 2)
        signs = np.where(pairs[..., 0] < pairs[..., 1], 1, -1).astype(np.int8)
        flat = np.sort(pairs.reshape(-1, 2), axis=1)
        edges, inv = np.unique(flat, axis=0, return_inverse=True)
        return edges, inv.reshape(len(self.cells), len(le)), signs

    @property
    def edges(self) -> np.ndarray:
        return self._edge_data[0]

    @property
    def cell_edges(self) -> np.ndarray:
        return self._edge_data[1]

    @property
    def cell_edge_signs(self) -> np.ndarray:
        """+1 where the cell-local edge direction agrees with the global one."""
        return self._edge_data[2]

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def _face_data(self):
        if self.dim != 3:
            raise AttributeError("faces are only defined for 3D meshes")
        tri = self.cells[:, LOCAL_FACETS[3]]  # (nc, 4, 3)
        flat = tri.reshape(-1, 3)
        faces, inv = np.unique(np.sort(flat, axis=1), axis=0, return_inverse=True)
        signs = _permutation_sign(flat).reshape(len(self.cells), 4)
        return faces, inv.reshape(len(self.cells), 4), signs

    @property
    def faces(self) -> np.ndarray:
        return self._face_data[0]

    @property
    def cell_faces(self) -> np.ndarray:
        return self._face_data[1]

    @property
    def cell_face_signs(self) -> np.ndarray:
        return self._face_data[2]

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def facets(self) -> np.ndarray:
        return self.edges if self.dim == 2 else self.faces

    @property
    def cell_facets(self) -> np.ndarray:
        """Global facet index of each local facet (local facet i is opposite vertex i)."""
        if self.dim == 3:
            return self.cell_faces
        # local facet i opposite vertex i maps onto local edges (1,2),(0,2),(0,1)
        return self.cell_edges[:, [2, 1, 0]]

    @cached_property
    def facet_cell_count(self) -> np.ndarray:
        return np.bincount(self.cell_facets.ravel(), minlength=len(self.facets))

    @cached_property
    def facet_markers(self) -> np.ndarray:
        """Boundary side of each facet (2k for x_k = 0, 2k+1 for x_k = 1), -1 if interior."""
        markers = np.full(len(self.facets), INTERIOR, dtype=np.int64)
        bnd = np.flatnonzero(self.facet_cell_count == 1)
        xyz = self.vertices[self.facets[bnd]]  # (nb, d, d)
        for k in range(self.dim):
            for side in (0, 1):
                on = np.all(np.abs(xyz[:, :, k] - side) < 1e-12, axis=1)
                markers[bnd[on]] = 2 * k + side
        return markers

    def boundary_facets(self, markers=None) -> np.ndarray:
        m = self.facet_markers
        if markers is None:
            return np.flatnonzero(m != INTERIOR)
        return np.flatnonzero(np.isin(m, list(markers)))

    def boundary_vertices(self, markers=None) -> np.ndarray:
        return np.unique(self.facets[self.boundary_facets(markers)])

    def boundary_edges(self, markers=None) -> np.ndarray:
        facets = self.boundary_facets(markers)
        if self.dim == 2:
            return facets
        tri = self.faces[facets]
        pairs = np.sort(tri[:, [[0, 1], [0, 2], [1, 2]]].reshape(-1, 2), axis=1)
        pairs = np.unique(pairs, axis=0)
        return self.find_edges(pairs)

    def find_edges(self, pairs: np.ndarray) -> np.ndarray:
        """Global indices of edges given as vertex pairs (any order)."""
        pairs = np.sort(np.asarray(pairs), axis=1)
        key = self.edges[:, 0] * self.n_vertices + self.edges[:, 1]
        q = pairs[:, 0] * self.n_vertices + pairs[:, 1]
        idx = np.searchsorted(key, q)
        if np.any(idx >= len(key)) or np.any(key[np.minimum(idx, len(key) - 1)] != q):
            raise KeyError("edge not in mesh")
        return idx

    # ------------------------------------------------------------------
    # geometry
    @cached_property
    def jacobians(self) -> np.ndarray:
        v = self.vertices[self.cells]
        return np.transpose(v[:, 1:, :] - v[:, :1, :], (0, 2, 1))  # (nc, d, d)

    @cached_property
    def dets(self) -> np.ndarray:
        return np.linalg.det(self.jacobians)

    @cached_property
    def inv_jacobians(self) -> np.ndarray:
        return np.linalg.inv(self.jacobians)

    @cached_property
    def volumes(self) -> np.ndarray:
        return np.abs(self.dets) / (1 if self.dim == 1 else (2 if self.dim == 2 else 6))

    @cached_property
    def h(self) -> float:
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return float(np.sqrt((d**2).sum(axis=1)).max())

    def cell_geometry(self, cell: int):
        """Affine map data of one cell: (vertex coords, J, det J, J^{-T})."""
        if not 0 <= cell < self.n_cells:
            raise IndexError(f"cell index {cell} out of range")
        J = self.jacobians[cell]
        return self.vertices[self.cells[cell]], J, float(self.dets[cell]), self.inv_jacobians[cell].T

    def to_reference(self, cells: np.ndarray, points: np.ndarray) -> np.ndarray:
        x0 = self.vertices[self.cells[cells, 0]]
        return np.einsum("nij,nj->ni", self.inv_jacobians[cells], points - x0)

    def locate(self, points: np.ndarray) -> np.ndarray:
        """Index of a cell containing each point; raises if a point is outside."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        tol = 1e-12
        if np.any(points < -tol) or np.any(points > 1 + tol):
            raise ValueError("point outside the unit domain")
        box = np.clip(np.floor(points * self.M).astype(int), 0, self.M - 1)
        flat = np.zeros(len(points), dtype=int)
        for k in reversed(range(self.dim)):
            flat = flat * self.M + box[:, k]
        found = np.full(len(points), -1)
        for j in range(self.cells_per_box):
            cand = flat * self.cells_per_box + j
            ref = self.to_reference(cand, points)
            lam = np.column_stack([1 - ref.sum(axis=1), ref])
            inside = (found < 0) & np.all(lam >= -1e-10, axis=1)
            found[inside] = cand[inside]
        if np.any(found < 0):
            raise ValueError("point outside the mesh")
        return found


def build_unit_square_mesh(M: int) -> Mesh:
    """(M+1)^2 vertices, 2 M^2 triangles; every square is cut along its (0,0)-(1,1) diagonal."""
    if M < 1:
        raise ValueError("M must be a positive integer")
    g = np.linspace(0.0, 1.0, M + 1)
    X, Y = np.meshgrid(g, g, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    cells = []
    for j in range(M):
        for i in range(M):
            v00 = i + j * (M + 1)
            v10, v01, v11 = v00 + 1, v00 + M + 1, v00 + M + 2
            cells.append((v00, v10, v11))
            cells.append((v00, v11, v01))
    return Mesh(vertices, np.array(cells, dtype=np.int64), M=M, cells_per_box=2)


def build_unit_cube_mesh(M: int) -> Mesh:
    """(M+1)^3 vertices, 6 M^3 tetrahedra from the Kuhn split along the (0,0,0)-(1,1,1) diagonal."""
    if M < 1:
        raise ValueError("M must be a positive integer")
    g = np.linspace(0.0, 1.0, M + 1)
    Z, Y, X = np.meshgrid(g, g, g, indexing="ij")
    vertices = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])
    n1 = M + 1

    def vid(i, j, k):
        return i + n1 * (j + n1 * k)

    corner = np.array([[vid(i, j, k) for i in range(M)] for k in range(M) for j in range(M)]).ravel()
    stride = np.array([1, n1, n1 * n1])
    tets = []
    for perm in itertools.permutations(range(3)):
        path = [0]
        for ax in perm:
            path.append(path[-1] + stride[ax])
        tets.append(path)
    tets = np.array(tets)  # (6, 4) offsets from the cube's lower corner
    cells = (corner[:, None, None] + tets[None, :, :]).reshape(-1, 4)

    v = vertices[cells]
    det = np.linalg.det(v[:, 1:, :] - v[:, :1, :])
    neg = det < 0
    cells[neg] = cells[neg][:, [0, 2, 1, 3]]
    return Mesh(vertices, cells.astype(np.int64), M=M, cells_per_box=6)


def write_vtk(mesh: Mesh, path, point_data=None, cell_data=None) -> None:
    """Write an ASCII legacy-VTK unstructured grid."""
    point_data = point_data or {}
    cell_data = cell_data or {}
    d = mesh.dim
    ctype = 5 if d == 2 else 10
    pts = mesh.vertices if d == 3 else np.column_stack([mesh.vertices, np.zeros(mesh.n_vertices)])
    nv = d + 1
    lines = [
        "# vtk DataFile Version 3.0",
        "mhdfem output",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.n_vertices} double",
    ]
    lines += [" ".join(f"{c:.17g}" for c in p) for p in pts]
    lines.append(f"CELLS {mesh.n_cells} {mesh.n_cells * (nv + 1)}")
    lines += [f"{nv} " + " ".join(map(str, c)) for c in mesh.cells]
    lines.append(f"CELL_TYPES {mesh.n_cells}")
    lines += [str(ctype)] * mesh.n_cells

    def block(kind, n, data):
        if not data:
            return []
        out = [f"{kind} {n}"]
        for name, arr in data.items():
            arr = np.asarray(arr, dtype=float)
            if arr.ndim == 1:
                out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                out += [f"{a:.17g}" for a in arr]
            else:
                if arr.shape[1] == 2:
                    arr = np.column_stack([arr, np.zeros(len(arr))])
                out.append(f"VECTORS {name} double")
                out += [" ".join(f"{a:.17g}" for a in row) for row in arr]
        return out

    lines += block("POINT_DATA", mesh.n_vertices, point_data)
    lines += block("CELL_DATA", mesh.n_cells, cell_data)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_vtk(path) -> dict:
    """Minimal reader for files produced by :func:`write_vtk` (used for round trips)."""
    with open(path) as fh:
        tokens = fh.read().split("\n")
    out = {"point_data": {}, "cell_data": {}}
    i = 0
    section = None
    while i < len(tokens):
        line = tokens[i].strip()
        if line.startswith("POINTS"):
            n = int(line.split()[1])
            out["points"] = np.array([list(map(float, t.split())) for t in tokens[i + 1 : i + 1 + n]])
            i += n
        elif line.startswith("CELLS"):
            n = int(line.split()[1])
            out["cells"] = np.array([list(map(int, t.split()))[1:] for t in tokens[i + 1 : i + 1 + n]])
            i += n
        elif line.startswith("POINT_DATA"):
            section, count = "point_data", int(line.split()[1])
        elif line.startswith("CELL_DATA"):
            section, count = "cell_data", int(line.split()[1])
        elif line.startswith("SCALARS"):
            name = line.split()[1]
            vals = tokens[i + 2 : i + 2 + count]
            out[section][name] = np.array(list(map(float, vals)))
            i += 1 + count
        elif line.startswith("VECTORS"):
            name = line.split()[1]
            vals = tokens[i + 1 : i + 1 + count]
            out[section][name] = np.array([list(map(float, t.split())) for t in vals])
            i += count
        i += 1
    return out
