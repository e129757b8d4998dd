"""Brute-force dense reference for one 2D time step.

Shares nothing with the package except the mesh arrays and the DOF
conventions: bases are built in physical coordinates by inverting the DOF
functionals, quadrature is a collapsed Gauss-Legendre rule, weak forms are
written directly from the equations, and boundary values are eliminated
rather than imposed by row replacement.
"""

import numpy as np

MONO = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (3, 0), (2, 1), (1, 2), (0, 3)]


def _mono(e, X, Y):
    return X ** e[0] * Y ** e[1]


def _dmono(e, X, Y, axis):
    a, b = e
    if axis == 0:
        return a * X ** max(a - 1, 0) * Y**b if a else np.zeros_like(X)
    return b * X**a * Y ** max(b - 1, 0) if b else np.zeros_like(X)


def triangle_rule(n=8):
    g, w = np.polynomial.legendre.leggauss(n)
    g, w = (g + 1) / 2, w / 2
    U, V = np.meshgrid(g, g, indexing="ij")
    W = np.outer(w, w) * (1 - U)
    pts = np.column_stack([U.ravel(), (V * (1 - U)).ravel()])
    return pts, W.ravel()


def line_rule(n=10):
    g, w = np.polynomial.legendre.leggauss(n)
    return (g + 1) / 2, w / 2


class Poly:
    """Vector (or scalar) polynomial as coefficient arrays over MONO."""

    def __init__(self, coeffs):
        self.c = np.atleast_2d(np.asarray(coeffs, dtype=float))  # (ncomp, nmono)

    def __call__(self, X, Y):
        return np.stack([sum(ci * _mono(e, X, Y) for ci, e in zip(row, MONO)) for row in self.c], axis=-1)

    def d(self, X, Y, axis):
        return np.stack([sum(ci * _dmono(e, X, Y, axis) for ci, e in zip(row, MONO)) for row in self.c], axis=-1)


def _combine(gens, coef):
    return Poly(sum(c * g.c for c, g in zip(coef, gens)))


def _unit(ncomp, comp, mono):
    c = np.zeros((ncomp, len(MONO)))
    c[comp, MONO.index(mono)] = 1.0
    return Poly(c)


class DenseOracle:
    def __init__(self, mesh, k_hat, nu, kappa, eta, iota, tau):
        assert mesh.dim == 2
        self.mesh, self.k_hat = mesh, k_hat
        self.nu, self.kappa, self.eta, self.iota, self.tau = nu, kappa, eta, iota, tau
        V, C, E = mesh.vertices, mesh.cells, mesh.edges
        self.nv, self.ne, self.nc = len(V), len(E), len(C)
        self.edge_id = {tuple(sorted(e)): i for i, e in enumerate(E.tolist())}
        self.ns = self.nv + self.ne
        self.nB = self.ne if k_hat == 1 else 2 * self.ne + 2 * self.nc
        self.n = 2 * self.ns + self.nv + self.nB
        self.qp, self.qw = triangle_rule()
        self._build_cells()

    # local bases -----------------------------------------------------
    def _build_cells(self):
        m = self.mesh
        self.cells = []
        for c, verts in enumerate(m.cells.tolist()):
            P = m.vertices[verts]
            xc = P.mean(axis=0)
            loc_edges = [(verts[a], verts[b]) for a, b in ((0, 1), (0, 2), (1, 2))]
            eids = [self.edge_id[tuple(sorted(e))] for e in loc_edges]
            # P2 Lagrange: nodes are vertices then edge midpoints
            nodes = [P[0], P[1], P[2]] + [0.5 * (m.vertices[a] + m.vertices[b]) for a, b in loc_edges]
            s_ids = list(verts) + [self.nv + e for e in eids]
            gens2 = [_unit(1, 0, e) for e in MONO[:6]]
            Vm = np.array([[g(*(np.array(x) - xc))[0] for g in gens2] for x in nodes])
            p2 = [_combine(gens2, col) for col in np.linalg.inv(Vm).T]
            gens1 = [_unit(1, 0, e) for e in MONO[:3]]
            Vm1 = np.array([[g(*(x - xc))[0] for g in gens1] for x in P])
            p1 = [_combine(gens1, col) for col in np.linalg.inv(Vm1).T]
            ned, ned_ids = self._nedelec(c, verts, P, xc, eids)
            self.cells.append(dict(P=P, xc=xc, p2=p2, s_ids=s_ids, p1=p1, p_ids=list(verts), ned=ned, ned_ids=ned_ids))

    def _nedelec(self, c, verts, P, xc, eids):
        m = self.mesh
        if self.k_hat == 1:
            gens = [_unit(2, 0, (0, 0)), _unit(2, 1, (0, 0)), Poly([[0, 0, -1, 0, 0, 0, 0, 0, 0, 0], [0, 1, 0, 0, 0, 0, 0, 0, 0, 0]])]
        else:
            gens = [_unit(2, k, e) for k in (0, 1) for e in MONO[:3]]
            # x-perp times homogeneous degree one: (-Y X, X X) and (-Y Y, X Y)
            a = np.zeros((2, len(MONO)))
            a[0, MONO.index((1, 1))] = -1
            a[1, MONO.index((2, 0))] = 1
            b = np.zeros((2, len(MONO)))
            b[0, MONO.index((0, 2))] = -1
            b[1, MONO.index((1, 1))] = 1
            gens += [Poly(a), Poly(b)]
        s, w = line_rule()
        funcs, ids = [], []
        for e in eids:
            a, b = m.edges[e]
            xa, xb = m.vertices[a], m.vertices[b]  # global orientation low -> high
            pts = xa + s[:, None] * (xb - xa)
            tests = [np.ones_like(s)] if self.k_hat == 1 else [np.ones_like(s), 2 * s - 1]
            for k, q in enumerate(tests):
                funcs.append(lambda g, pts=pts, t=xb - xa, q=q: float((g(*(pts - xc).T) @ t) @ (w * q)))
                ids.append(e if self.k_hat == 1 else 2 * e + k)
        if self.k_hat == 2:
            X = P[0] + self.qp @ np.column_stack([P[1] - P[0], P[2] - P[0]]).T
            for k in range(2):
                dvec = P[k + 1] - P[0]
                # cell mean of u . (v_{k+1} - v_0); reference weights sum to 1/2
                funcs.append(lambda g, X=X, d=dvec: float(2 * ((g(*(X - xc).T) @ d) @ self.qw)))
                ids.append(2 * self.ne + 2 * c + k)
        Dm = np.array([[f(g) for g in gens] for f in funcs])
        basis = [_combine(gens, col) for col in np.linalg.inv(Dm).T]
        return basis, ids

    # quadrature per cell --------------------------------------------
    def _points(self, cell):
        P = cell["P"]
        J = np.column_stack([P[1] - P[0], P[2] - P[0]])
        X = P[0] + self.qp @ J.T
        return X, self.qw * abs(np.linalg.det(J))

    # operators --------------------------------------------------------
    def _vel_basis(self, cell, X):
        """List of (global id, value (nq,2), grad (nq,2,2))."""
        Xr = X - cell["xc"]
        out = []
        for k in range(2):
            for phi, sid in zip(cell["p2"], cell["s_ids"]):
                v = phi(*Xr.T)[:, 0]
                g = np.stack([phi.d(*Xr.T, 0)[:, 0], phi.d(*Xr.T, 1)[:, 0]], axis=-1)
                val = np.zeros((len(X), 2))
                val[:, k] = v
                grad = np.zeros((len(X), 2, 2))
                grad[:, k, :] = g
                out.append((k * self.ns + sid, val, grad))
        return out

    def _ned_basis(self, cell, X):
        Xr = X - cell["xc"]
        out = []
        for psi, gid in zip(cell["ned"], cell["ned_ids"]):
            val = psi(*Xr.T)
            curl = psi.d(*Xr.T, 0)[:, 1] - psi.d(*Xr.T, 1)[:, 0]
            out.append((gid, val, curl))
        return out

    def _p_basis(self, cell, X):
        Xr = X - cell["xc"]
        return [(pid, q(*Xr.T)[:, 0]) for q, pid in zip(cell["p1"], cell["p_ids"])]

    def field_u(self, cell, X, coeffs):
        val = np.zeros((len(X), 2))
        grad = np.zeros((len(X), 2, 2))
        for gid, v, g in self._vel_basis(cell, X):
            val += coeffs[gid] * v
            grad += coeffs[gid] * g
        return val, grad

    def field_B(self, cell, X, coeffs):
        val = np.zeros((len(X), 2))
        for gid, v, _ in self._ned_basis(cell, X):
            val += coeffs[gid] * v
        return val

    def matrices(self, w, Bo, f=None, g=None, t=0.0):
        """Dense M1, K1, C(w), D, M2, K2, L(Bo), I(Bo) and loads F, G."""
        nu_, nB, np_ = 2 * self.ns, self.nB, self.nv
        M1, K1, Cw = np.zeros((nu_, nu_)), np.zeros((nu_, nu_)), np.zeros((nu_, nu_))
        D = np.zeros((np_, nu_))
        M2, K2 = np.zeros((nB, nB)), np.zeros((nB, nB))
        L, I = np.zeros((nu_, nB)), np.zeros((nB, nu_))
        F, G = np.zeros(nu_), np.zeros(nB)
        for cell in self.cells:
            X, W = self._points(cell)
            vb, bb, pb = self._vel_basis(cell, X), self._ned_basis(cell, X), self._p_basis(cell, X)
            wv, _ = self.field_u(cell, X, w)
            Bv = self.field_B(cell, X, Bo)
            fv = f(X, t) if f is not None else np.zeros((len(X), 2))
            gv = g(X, t) if g is not None else np.zeros((len(X), 2))
            for i, vi, gi in vb:
                F[i] += W @ (fv * vi).sum(1)
                wgi = np.einsum("qk,qck->qc", wv, gi)
                for j, vj, gj in vb:
                    M1[i, j] += W @ (vi * vj).sum(1)
                    K1[i, j] += W @ (gi * gj).sum((1, 2))
                    wgj = np.einsum("qk,qck->qc", wv, gj)
                    Cw[i, j] += 0.5 * (W @ (wgj * vi).sum(1) - W @ (wgi * vj).sum(1))
                div_i = gi[:, 0, 0] + gi[:, 1, 1]
                for pid, q in pb:
                    D[pid, i] += W @ (div_i * q)
                for j, pj, cj in bb:
                    # curl psi_j x Bo in 2D: curl * (-Bo2, Bo1)
                    lor = cj[:, None] * np.column_stack([-Bv[:, 1], Bv[:, 0]])
                    L[i, j] += W @ (lor * vi).sum(1)
                    # (phi_i x Bo) . curl psi_j with the scalar cross product
                    cr = vi[:, 0] * Bv[:, 1] - vi[:, 1] * Bv[:, 0]
                    I[j, i] += W @ (cr * cj)
            for i, pi_, ci in bb:
                G[i] += W @ (gv * pi_).sum(1)
                for j, pj, cj in bb:
                    M2[i, j] += W @ (pi_ * pj).sum(1)
                    K2[i, j] += W @ (ci * cj)
        return dict(M1=M1, K1=K1, C=Cw, D=D, M2=M2, K2=K2, L=L, I=I, F=F, G=G)

    # steps ---------------------------------------------------------------
    def _slices(self):
        nu_ = 2 * self.ns
        return slice(0, nu_), slice(nu_, nu_ + self.nv), slice(nu_ + self.nv, self.n)

    def backward_euler(self, u0, B0, t, f=None, g=None):
        """Residual form ``A x = b`` of the linearized backward Euler step."""
        m = self.matrices(u0, B0, f, g, t)
        su, sp_, sB = self._slices()
        tau, A, b = self.tau, np.zeros((self.n, self.n)), np.zeros(self.n)
        # velocity: M(u - u0)/tau + nu K ubar + C ubar - D^T p - kappa L Bbar = F
        A[su, su] = m["M1"] / tau + 0.5 * (self.nu * m["K1"] + m["C"])
        A[su, sp_] = -m["D"].T
        A[su, sB] = -0.5 * self.kappa * m["L"]
        b[su] = m["M1"] @ u0 / tau - 0.5 * (self.nu * m["K1"] + m["C"]) @ u0 + 0.5 * self.kappa * m["L"] @ B0 + m["F"]
        # continuity: D ubar = 0
        A[sp_, su] = 0.5 * m["D"]
        b[sp_] = -0.5 * m["D"] @ u0
        # magnetic: M(B - B0)/tau + eta K Bbar - iota I ubar = G
        A[sB, sB] = m["M2"] / tau + 0.5 * self.eta * m["K2"]
        A[sB, su] = -0.5 * self.iota * m["I"]
        b[sB] = m["M2"] @ B0 / tau - 0.5 * self.eta * m["K2"] @ B0 + 0.5 * self.iota * m["I"] @ u0 + m["G"]
        return A, b

    def bdf2(self, u1, B1, u2, B2, t, f=None, g=None):
        uh, Bh = 2 * u1 - u2, 2 * B1 - B2
        m = self.matrices(uh, Bh, f, g, t)
        su, sp_, sB = self._slices()
        tau, A, b = self.tau, np.zeros((self.n, self.n)), np.zeros(self.n)
        A[su, su] = 1.5 / tau * m["M1"] + self.nu * m["K1"] + m["C"]
        A[su, sp_] = -m["D"].T
        A[su, sB] = -self.kappa * m["L"]
        b[su] = m["M1"] @ (2 * u1 - 0.5 * u2) / tau + m["F"]
        A[sp_, su] = m["D"]
        A[sB, sB] = 1.5 / tau * m["M2"] + self.eta * m["K2"]
        A[sB, su] = -self.iota * m["I"]
        b[sB] = m["M2"] @ (2 * B1 - 0.5 * B2) / tau + m["G"]
        return A, b

    def solve(self, A, b, fixed: dict, drop_rows=(), mean_zero=False):
        """Eliminate ``fixed`` unknowns (and their test rows), then solve densely."""
        n = self.n
        fixed_idx = np.array(sorted(fixed), dtype=int)
        vals = np.array([fixed[i] for i in fixed_idx])
        free = np.setdiff1d(np.arange(n), fixed_idx)
        rows = np.setdiff1d(np.arange(n), np.concatenate([fixed_idx, np.asarray(drop_rows, dtype=int)]))
        Ar = A[np.ix_(rows, free)]
        br = b[rows] - A[np.ix_(rows, fixed_idx)] @ vals
        if mean_zero:
            _, sp_, _ = self._slices()
            mvec = np.zeros(n)
            mvec[sp_] = self.pressure_mean()
            col = np.zeros((len(rows), 1))
            is_p = (rows >= sp_.start) & (rows < sp_.stop)
            col[is_p, 0] = mvec[rows[is_p]]
            Ar = np.block([[Ar, col], [mvec[free][None, :], np.zeros((1, 1))]])
            br = np.append(br, 0.0)
        xr = np.linalg.solve(Ar, br)
        # the Hartmann start has pressures of order 1/tau; refine with extended-precision residuals
        for _ in range(3):
            r = br.astype(np.longdouble) - Ar.astype(np.longdouble) @ xr.astype(np.longdouble)
            xr = xr + np.linalg.solve(Ar, r.astype(float))
        x = np.zeros(n)
        x[fixed_idx] = vals
        x[free] = xr[: len(free)]
        return x

    def pressure_mean(self):
        out = np.zeros(self.nv)
        for cell in self.cells:
            X, W = self._points(cell)
            for pid, q in self._p_basis(cell, X):
                out[pid] += W @ q
        return out

    # interpolation ---------------------------------------------------------
    def interpolate_u(self, fn):
        m = self.mesh
        pts = np.vstack([m.vertices, 0.5 * (m.vertices[m.edges[:, 0]] + m.vertices[m.edges[:, 1]])])
        vals = fn(pts)
        return np.concatenate([vals[:, 0], vals[:, 1]])

    def interpolate_B(self, fn):
        m = self.mesh
        s, w = line_rule()
        out = np.zeros(self.nB)
        for e, (a, b) in enumerate(m.edges):
            xa, xb = m.vertices[a], m.vertices[b]
            tang = fn(xa + s[:, None] * (xb - xa)) @ (xb - xa)
            if self.k_hat == 1:
                out[e] = tang @ w
            else:
                out[2 * e] = tang @ w
                out[2 * e + 1] = tang @ (w * (2 * s - 1))
        if self.k_hat == 2:
            for c, cell in enumerate(self.cells):
                X, W = self._points(cell)
                area = W.sum()
                P = cell["P"]
                for k in range(2):
                    out[2 * self.ne + 2 * c + k] = W @ (fn(X) @ (P[k + 1] - P[0])) / area
        return out

    def boundary_ids(self):
        """Velocity, magnetic (tangential) boundary DOFs and a boundary-edge list."""
        m = self.mesh
        V = m.vertices
        on = lambda x: (np.abs(x) < 1e-12) | (np.abs(x - 1) < 1e-12)
        edges = [e for e, (a, b) in enumerate(m.edges)
                 if (on(V[a, 0]) & on(V[b, 0]) & (V[a, 0] == V[b, 0])) or (on(V[a, 1]) & on(V[b, 1]) & (V[a, 1] == V[b, 1]))]
        verts = [i for i in range(self.nv) if on(V[i, 0]) or on(V[i, 1])]
        scal = verts + [self.nv + e for e in edges]
        uids = scal + [self.ns + s for s in scal]
        off = 2 * self.ns + self.nv
        if self.k_hat == 1:
            bids = [off + e for e in edges]
        else:
            bids = [off + 2 * e for e in edges] + [off + 2 * e + 1 for e in edges]
        return uids, bids
