"""Manufactured interface problems and their data.

A problem bundles the level set, the coefficient pair, and the exact
solution pieces with analytic gradients and Laplacians.  Interface data
(value jump, flux jump, source pieces) and boundary traces are derived
from the pieces; the flux jump uses the same normal orientation as the
discrete jump terms.

The coefficient pair is always stored in the canonical order
beta_minus >= beta_plus.  Helpers below realize an arbitrary physical
assignment (inside/outside, below/above) by flipping the level-set sign
instead of swapping labels.

For linear interfaces the local Cauchy problem has an exact polynomial
solution; :func:`line_cauchy_extension` builds it by a Taylor recursion
in the normal coordinate and is used both to manufacture piecewise
polynomial exact solutions and as an independent oracle in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as npoly

from ifelab.geometry import Circle, Line, jump_normal
from ifelab.localife import InterfaceData, check_beta


@dataclass
class PiecewiseSolution:
    """Exact solution pieces with analytic derivatives (vectorized)."""

    u_plus: callable
    u_minus: callable
    grad_plus: callable
    grad_minus: callable
    lap_plus: callable
    lap_minus: callable


@dataclass
class InterfaceProblem:
    ls: object
    beta: tuple  # (beta_plus, beta_minus), canonical order
    exact: PiecewiseSolution
    name: str = ""

    def __post_init__(self):
        check_beta(self.beta)

    def source_plus(self):
        bp = self.beta[0]
        lap = self.exact.lap_plus
        return lambda X: -bp * np.asarray(lap(X), float)

    def source_minus(self):
        bm = self.beta[1]
        lap = self.exact.lap_minus
        return lambda X: -bm * np.asarray(lap(X), float)

    def j_dirichlet(self):
        ex = self.exact
        return lambda X: np.asarray(ex.u_minus(X), float) - np.asarray(
            ex.u_plus(X), float
        )

    def j_neumann(self):
        ex = self.exact
        bp, bm = self.beta
        ls = self.ls

        def jn(X):
            n = jump_normal(ls, X)
            gm = np.asarray(ex.grad_minus(X), float)
            gp = np.asarray(ex.grad_plus(X), float)
            return np.einsum("qd,qd->q", bm * gm - bp * gp, n)

        return jn

    def interface_data(self) -> InterfaceData:
        return InterfaceData(
            j_dirichlet=self.j_dirichlet(),
            j_neumann=self.j_neumann(),
            f_plus=self.source_plus(),
            f_minus=self.source_minus(),
        )

    def boundary_trace(self):
        ex = self.exact
        ls = self.ls

        def g(X):
            X = np.atleast_2d(np.asarray(X, float))
            inside_plus = ls.value(X) < 0
            return np.where(inside_plus, ex.u_plus(X), ex.u_minus(X))

        return g

    def value(self, X):
        """Exact solution, evaluated piecewise (points on the interface
        take the plus trace)."""
        X = np.atleast_2d(np.asarray(X, float))
        inside_plus = self.ls.value(X) <= 0
        return np.where(inside_plus, self.exact.u_plus(X), self.exact.u_minus(X))


def circle_with_interior_side(r, interior_is_plus: bool, center=(0.0, 0.0)):
    return Circle(center[0], center[1], r, 1.0 if interior_is_plus else -1.0)


def line_with_below_side(delta: float, below_is_plus: bool):
    """Horizontal line y = delta; phi is oriented so the requested side
    of the line is the plus region."""
    return Line(0.0, 1.0, -delta) if below_is_plus else Line(0.0, -1.0, delta)


def trig_exp_circle_problem(beta_inside, beta_outside, r=np.pi / 4):
    """Circular-interface benchmark: sin(pi x) sin(pi y) / beta inside the
    circle, exp(x y) / beta outside, glued with nonhomogeneous jumps."""
    inside_is_plus = beta_inside <= beta_outside
    ls = circle_with_interior_side(r, inside_is_plus)
    b_in, b_out = float(beta_inside), float(beta_outside)

    def u_in(X):
        return np.sin(np.pi * X[..., 0]) * np.sin(np.pi * X[..., 1]) / b_in

    def grad_in(X):
        sx = np.sin(np.pi * X[..., 0])
        cx = np.cos(np.pi * X[..., 0])
        sy = np.sin(np.pi * X[..., 1])
        cy = np.cos(np.pi * X[..., 1])
        return np.pi / b_in * np.stack([cx * sy, sx * cy], axis=-1)

    def lap_in(X):
        return -2.0 * np.pi**2 / b_in * np.sin(np.pi * X[..., 0]) * np.sin(
            np.pi * X[..., 1]
        )

    def u_out(X):
        return np.exp(X[..., 0] * X[..., 1]) / b_out

    def grad_out(X):
        e = np.exp(X[..., 0] * X[..., 1]) / b_out
        return np.stack([X[..., 1] * e, X[..., 0] * e], axis=-1)

    def lap_out(X):
        return (
            (X[..., 0] ** 2 + X[..., 1] ** 2)
            * np.exp(X[..., 0] * X[..., 1])
            / b_out
        )

    if inside_is_plus:
        beta = (b_in, b_out)
        exact = PiecewiseSolution(u_in, u_out, grad_in, grad_out, lap_in, lap_out)
    else:
        beta = (b_out, b_in)
        exact = PiecewiseSolution(u_out, u_in, grad_out, grad_in, lap_out, lap_in)
    return InterfaceProblem(ls=ls, beta=beta, exact=exact, name="trig-exp-circle")


def linear_line_problem(delta, beta_below, beta_above):
    """Piecewise linear solution (y - delta) / beta across the line
    y = delta; homogeneous jumps, zero source."""
    below_is_plus = beta_below <= beta_above
    ls = line_with_below_side(delta, below_is_plus)
    bb, ba = float(beta_below), float(beta_above)

    def piece(b):
        u = lambda X: (X[..., 1] - delta) / b
        g = lambda X: np.broadcast_to(
            np.array([0.0, 1.0 / b]), np.asarray(X, float).shape
        ).copy()
        lap = lambda X: np.zeros(np.asarray(X, float).shape[:-1])
        return u, g, lap

    ub, gb, lb = piece(bb)
    ua, ga, la = piece(ba)
    if below_is_plus:
        beta = (bb, ba)
        exact = PiecewiseSolution(ub, ua, gb, ga, lb, la)
    else:
        beta = (ba, bb)
        exact = PiecewiseSolution(ua, ub, ga, gb, la, lb)
    return InterfaceProblem(ls=ls, beta=beta, exact=exact, name="linear-line")


# ----------------------------------------------------------------------
# exact Cauchy extension across a linear interface
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class LineFrame:
    """Orthonormal frame adapted to a line: t is the coordinate along the
    level-set gradient (so sign(t) = sign(phi)), s runs along the line."""

    origin: tuple
    tau: tuple
    nu: tuple

    @classmethod
    def of(cls, line: Line):
        g = np.array([line.a, line.b], float)
        nu = g / np.linalg.norm(g)
        tau = np.array([-nu[1], nu[0]])
        if abs(line.a) >= abs(line.b):
            origin = np.array([-line.c / line.a, 0.0])
        else:
            origin = np.array([0.0, -line.c / line.b])
        return cls(tuple(origin), tuple(tau), tuple(nu))

    def coords(self, X):
        X = np.atleast_2d(np.asarray(X, float))
        rel = X - np.asarray(self.origin)
        return rel @ np.asarray(self.tau), rel @ np.asarray(self.nu)


@dataclass
class STPoly:
    """Polynomial in line-frame coordinates: sum c[i, j] s^i t^j."""

    frame: LineFrame
    coef: np.ndarray

    def eval(self, X):
        s, t = self.frame.coords(X)
        return npoly.polyval2d(s, t, self.coef)

    def grad(self, X):
        s, t = self.frame.coords(X)
        ds = npoly.polyval2d(s, t, npoly.polyder(self.coef, axis=0))
        dt = npoly.polyval2d(s, t, npoly.polyder(self.coef, axis=1))
        return ds[:, None] * np.asarray(self.frame.tau) + dt[:, None] * np.asarray(
            self.frame.nu
        )

    def lap(self, X):
        s, t = self.frame.coords(X)
        css = npoly.polyder(self.coef, m=2, axis=0)
        ctt = npoly.polyder(self.coef, m=2, axis=1)
        return npoly.polyval2d(s, t, css) + npoly.polyval2d(s, t, ctt)


def line_cauchy_extension(z_coef: np.ndarray, rho: float) -> np.ndarray:
    """Exact polynomial solving the Cauchy problem across {t = 0}.

    Given z as s^i t^j coefficients, returns v with v = z and
    dv/dt = rho dz/dt on the line, and lap v = rho lap z identically;
    equivalently all extended matching conditions hold.  Built by the
    Taylor recursion a_k = rho d_t^{k-2}(lap z)|_0 - a_{k-2}'' with
    a_0 = z|_0 and a_1 = rho d_t z|_0.
    """
    from math import factorial

    z = np.asarray(z_coef, float)
    m = z.shape[0]

    def pad(c):
        c = np.atleast_1d(np.asarray(c, float))
        out = np.zeros(m)
        out[: len(c)] = c
        return out

    p = z.shape[1] - 1
    a = [None] * (p + 1)
    a[0] = pad(z[:, 0])
    if p >= 1:
        a[1] = pad(rho * z[:, 1])
    for k in range(2, p + 1):
        dt_lap_z = factorial(k - 2) * pad(
            npoly.polyder(z[:, k - 2], m=2)
        ) + factorial(k) * pad(z[:, k])
        a[k] = rho * dt_lap_z - pad(npoly.polyder(a[k - 2], m=2))
    v = np.zeros_like(z)
    for k in range(p + 1):
        v[:, k] = a[k] / factorial(k)
    return v


def line_poly_problem(line: Line, beta, z_coef) -> InterfaceProblem:
    """Piecewise polynomial exact solution across a linear interface.

    The plus side carries the given polynomial z (in line-frame
    coordinates); the minus side carries its exact Cauchy extension, so
    both jump conditions are homogeneous while the source is piecewise.
    """
    bp, bm = check_beta(beta)
    frame = LineFrame.of(line)
    z = np.asarray(z_coef, float)
    v = line_cauchy_extension(z, bp / bm)
    zp = STPoly(frame, z)
    vp = STPoly(frame, v)
    exact = PiecewiseSolution(
        u_plus=zp.eval,
        u_minus=vp.eval,
        grad_plus=zp.grad,
        grad_minus=vp.grad,
        lap_plus=zp.lap,
        lap_minus=vp.lap,
    )
    return InterfaceProblem(ls=line, beta=(bp, bm), exact=exact, name="line-poly")


def nodal_ife_vector(dofmap, classification, problem: InterfaceProblem):
    """Coefficient vector of the exact solution when it lies in the IFE
    space (linear interfaces with exact Cauchy extensions).

    Interface-element coefficients are the nodal values of the plus-side
    polynomial; the minus piece is then reproduced by the element's
    extension matrix.
    """
    from ifelab.geometry import INTERFACE, PLUS
    from ifelab.polybasis import lattice_nodes

    mesh = dofmap.mesh
    u = np.zeros(dofmap.ndof)
    ex = problem.exact
    for t in range(len(mesh.triangles)):
        nodes = lattice_nodes(mesh.tri_vertices(t), dofmap.p)
        c = classification.tri_class[t]
        if c == INTERFACE or c == PLUS:
            vals = np.asarray(ex.u_plus(nodes), float)
        else:
            vals = np.asarray(ex.u_minus(nodes), float)
        u[dofmap.cell_dofs[t]] = vals
    return u
