"""Symbolic exact solutions and the forcing that makes them solve the MHD system."""

from __future__ import annotations

from functools import cached_property

import numpy as np
import sympy as sy

from .assembly import Coefficients

X, Y, Z, T = sy.symbols("x y z t", real=True)
COORDS = {2: (X, Y), 3: (X, Y, Z)}


def _curl(F, dim):
    if dim == 2:
        return sy.diff(F[1], X) - sy.diff(F[0], Y)
    x, y, z = COORDS[3]
    return [sy.diff(F[2], y) - sy.diff(F[1], z), sy.diff(F[0], z) - sy.diff(F[2], x), sy.diff(F[1], x) - sy.diff(F[0], y)]


def _rot_curl(s):
    """Vector curl of a scalar in 2D, ``(ds/dy, -ds/dx)``."""
    return [sy.diff(s, Y), -sy.diff(s, X)]


def _cross(a, b):
    return [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]


def _vectorize(exprs, dim):
    """Lambdify a list of expressions into ``f(points, t) -> (n, len(exprs))``."""
    args = COORDS[dim] + (T,)
    fns = [sy.lambdify(args, e, "numpy") for e in exprs]

    def f(points, t=0.0):
        pts = np.asarray(points, dtype=float).reshape(-1, dim)
        cols = [np.broadcast_to(np.asarray(fn(*pts.T, t), dtype=float), (len(pts),)) for fn in fns]
        return np.stack(cols, axis=-1)

    return f


def _scalarize(expr, dim):
    vf = _vectorize([expr], dim)
    return lambda points, t=0.0: vf(points, t)[:, 0]


class ManufacturedSolution:
    """Exact ``(u, p, B)`` with matching body force ``f`` and magnetic source ``g``.

    ``f = u_t - nu Lap u + (u.grad)u + grad p - kappa curl B x B`` and
    ``g = B_t + eta curl curl B - iota curl(u x B)``; in 2D the scalar curl and
    the rotated forms are used.
    """

    def __init__(self, dim: int, u, p, B, coefficients: Coefficients):
        self.dim = dim
        self.u_expr = [sy.sympify(e) for e in u]
        self.p_expr = sy.sympify(p)
        self.B_expr = [sy.sympify(e) for e in B]
        self.coefficients = coefficients

    # symbolic pieces ---------------------------------------------------
    @cached_property
    def forcing_exprs(self):
        d, c = self.dim, self.coefficients
        xs = COORDS[d]
        u, p, B = self.u_expr, self.p_expr, self.B_expr
        lap = [sum(sy.diff(ui, x, 2) for x in xs) for ui in u]
        conv = [sum(u[j] * sy.diff(ui, xs[j]) for j in range(d)) for ui in u]
        gp = [sy.diff(p, x) for x in xs]
        cB = _curl(B, d)
        if d == 2:
            lorentz = [-cB * B[1], cB * B[0]]  # curl B x B
            uxB = u[0] * B[1] - u[1] * B[0]
            ccB = _rot_curl(cB)
            cuxB = _rot_curl(uxB)
        else:
            lorentz = _cross(cB, B)
            ccB = _curl(cB, 3)
            cuxB = _curl(_cross(u, B), 3)
        f = [sy.diff(u[i], T) - c.viscous * lap[i] + conv[i] + gp[i] - c.lorentz * lorentz[i] for i in range(d)]
        g = [sy.diff(B[i], T) + c.diffusion * ccB[i] - c.induction * cuxB[i] for i in range(d)]
        return [sy.simplify(e) for e in f], [sy.simplify(e) for e in g]

    def divergences(self):
        xs = COORDS[self.dim]
        du = sy.simplify(sum(sy.diff(self.u_expr[i], xs[i]) for i in range(self.dim)))
        dB = sy.simplify(sum(sy.diff(self.B_expr[i], xs[i]) for i in range(self.dim)))
        return du, dB

    def pressure_mean(self, t=0.0):
        xs = COORDS[self.dim]
        e = self.p_expr.subs(T, t)
        for x in xs:
            e = sy.integrate(e, (x, 0, 1))
        return float(e)

    # numerical callables ----------------------------------------------
    @cached_property
    def u(self):
        return _vectorize(self.u_expr, self.dim)

    @cached_property
    def p(self):
        return _scalarize(self.p_expr, self.dim)

    @cached_property
    def B(self):
        return _vectorize(self.B_expr, self.dim)

    @cached_property
    def f(self):
        return _vectorize(self.forcing_exprs[0], self.dim)

    @cached_property
    def g(self):
        return _vectorize(self.forcing_exprs[1], self.dim)

    @cached_property
    def grad_u(self):
        xs = COORDS[self.dim]
        flat = [sy.diff(ui, x) for ui in self.u_expr for x in xs]
        vf = _vectorize(flat, self.dim)
        d = self.dim
        return lambda points, t=0.0: vf(points, t).reshape(-1, d, d)

    @cached_property
    def grad_p(self):
        return _vectorize([sy.diff(self.p_expr, x) for x in COORDS[self.dim]], self.dim)

    @cached_property
    def curl_B(self):
        cB = _curl(self.B_expr, self.dim)
        if self.dim == 2:
            return _scalarize(cB, 2)
        return _vectorize(cB, 3)


# ----------------------------------------------------------------------
# solutions used by the cases and tests


def mms2d_solution(coefficients: Coefficients) -> ManufacturedSolution:
    e = sy.exp(T)
    return ManufacturedSolution(
        2, [e * sy.cos(Y), e * sy.cos(X)], e * (X - sy.Rational(1, 2)) * sy.cos(Y), [e * sy.sin(Y), e * sy.cos(X)],
        coefficients,
    )


def mms3d_solution(coefficients: Coefficients) -> ManufacturedSolution:
    e = sy.exp(T)
    return ManufacturedSolution(
        3,
        [e * sy.cos(Y), e * sy.cos(Z), e * sy.cos(X)],
        e * (X - sy.Rational(1, 2)) * sy.cos(Y) * sy.sin(Z),
        [e * sy.sin(Y), e * sy.sin(Z), e * sy.cos(X)],
        coefficients,
    )


def polynomial2d_solution(coefficients: Coefficients) -> ManufacturedSolution:
    """Time-dependent solution lying in the order-2 spaces: all error is temporal."""
    a, b = sy.cos(T), sy.exp(-T / 2)
    return ManufacturedSolution(2, [a * Y**2, a * X**2], a * (X - sy.Rational(1, 2)), [b * Y, -b * X], coefficients)


def hartmann_profiles():
    """Closed-form Hartmann ``u_1(y)``, ``B_1(y)`` and ``p(x, y)``."""
    sh, ch = np.sinh(0.5), np.cosh(0.5)

    def u1(y):
        return (ch - np.cosh(y)) / (2 * sh)

    def B1(y):
        return (np.sinh(y) - 2 * sh * y) / (2 * sh)

    def p(x, y):
        return -x - B1(y) ** 2 / 2

    return u1, B1, p
