"""Degree-p polynomial bases on triangles.

Each basis is nodal Lagrange on the uniform lattice of an anchor
triangle, represented internally by coefficients over monomials that are
centered at the triangle centroid and scaled by the triangle diameter.
The scaled frame keeps local Vandermonde and Gram matrices well
conditioned under mesh refinement.  Basis polynomials are entire, so
evaluation is permitted anywhere, in particular on the enlarged element
that contains the anchor triangle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ifelab.errors import DegenerateRegionError, InvalidConfigError

MAX_DEGREE = 4


def space_dim(p: int) -> int:
    return (p + 1) * (p + 2) // 2


def exponents(p: int) -> np.ndarray:
    """Monomial exponent pairs ordered by total degree (prefix property:
    the first space_dim(k) rows span degree k for every k <= p)."""
    out = [(d - a, a) for d in range(p + 1) for a in range(d + 1)]
    return np.asarray(out, dtype=np.int64)


def lattice_nodes(verts, p: int) -> np.ndarray:
    """Uniform barycentric lattice; the first entries hit the vertices in order
    only for p = 1, but every vertex appears as a lattice node for all p."""
    verts = np.asarray(verts, float)
    nodes = []
    for a in range(p, -1, -1):
        for b in range(p - a, -1, -1):
            c = p - a - b
            nodes.append((a * verts[0] + b * verts[1] + c * verts[2]) / p)
    return np.asarray(nodes)


@dataclass(frozen=True)
class MonoFrame:
    """Scaled monomial frame: m_k(X) = u^a v^b, (u, v) = (X - center)/scale."""

    center: tuple
    scale: float
    p: int

    @property
    def exps(self) -> np.ndarray:
        return exponents(self.p)

    def local(self, X):
        X = np.atleast_2d(np.asarray(X, float))
        return (X - np.asarray(self.center)) / self.scale

    def values(self, X) -> np.ndarray:
        """(npts, nmono) monomial values."""
        U = self.local(X)
        e = self.exps
        return U[:, 0:1] ** e[:, 0] * U[:, 1:2] ** e[:, 1]

    def gradients(self, X) -> np.ndarray:
        """(npts, nmono, 2) monomial gradients."""
        U = self.local(X)
        e = self.exps
        a = e[:, 0]
        b = e[:, 1]
        ua = U[:, 0:1] ** np.maximum(a - 1, 0)
        ub = U[:, 1:2] ** np.maximum(b - 1, 0)
        g = np.empty((U.shape[0], len(e), 2))
        g[:, :, 0] = a * ua * U[:, 1:2] ** b
        g[:, :, 1] = b * U[:, 0:1] ** a * ub
        return g / self.scale

    def laplacians(self, X) -> np.ndarray:
        """(npts, nmono) monomial Laplacians."""
        U = self.local(X)
        e = self.exps
        a = e[:, 0]
        b = e[:, 1]
        uxx = (
            a
            * (a - 1)
            * U[:, 0:1] ** np.maximum(a - 2, 0)
            * U[:, 1:2] ** b
        )
        uyy = (
            b
            * (b - 1)
            * U[:, 0:1] ** a
            * U[:, 1:2] ** np.maximum(b - 2, 0)
        )
        return (uxx + uyy) / self.scale**2


class PolyBasis:
    """Nodal Lagrange basis of degree p anchored on a triangle."""

    def __init__(self, verts, p: int):
        if not 1 <= p <= MAX_DEGREE:
            raise InvalidConfigError(f"degree must be in [1, {MAX_DEGREE}], got {p}")
        verts = np.asarray(verts, float)
        self.p = p
        self.n = space_dim(p)
        self.vertices = verts
        diam = max(
            np.linalg.norm(verts[1] - verts[0]),
            np.linalg.norm(verts[2] - verts[1]),
            np.linalg.norm(verts[0] - verts[2]),
        )
        self.frame = MonoFrame(tuple(verts.mean(axis=0)), diam, p)
        self.nodes = lattice_nodes(verts, p)
        V = self.frame.values(self.nodes)
        # column j of coeffs holds the monomial coefficients of zeta_j
        self.coeffs = np.linalg.inv(V)

    @property
    def h_T(self) -> float:
        return self.frame.scale

    def eval(self, X) -> np.ndarray:
        """(npts, n) values of all basis functions."""
        return self.frame.values(X) @ self.coeffs

    def grad(self, X) -> np.ndarray:
        """(npts, n, 2) gradients of all basis functions."""
        return np.einsum("qmd,mj->qjd", self.frame.gradients(X), self.coeffs)

    def laplacian(self, X) -> np.ndarray:
        """(npts, n) Laplacians of all basis functions."""
        return self.frame.laplacians(X) @ self.coeffs


@dataclass
class MonoPoly:
    """A polynomial as coefficients over a MonoFrame (degree <= frame.p)."""

    frame: MonoFrame
    coeffs: np.ndarray

    def eval(self, X):
        return self.frame.values(X) @ self.coeffs

    def grad(self, X):
        return np.einsum("qmd,m->qd", self.frame.gradients(X), self.coeffs)

    def laplacian(self, X):
        return self.frame.laplacians(X) @ self.coeffs

    def __add__(self, other):
        return MonoPoly(self.frame, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return MonoPoly(self.frame, self.coeffs - other.coeffs)

    def scaled(self, c):
        return MonoPoly(self.frame, c * self.coeffs)


def l2_project(f, rule, frame: MonoFrame, k: int) -> MonoPoly:
    """L2 projection onto degree-k polynomials over a quadratured region.

    `f` is a vectorized callable of (npts, 2) points or an array of values
    at the rule's points.  The rule must integrate degree 2k + 2
    accurately for the Gram system to be trustworthy.
    """
    if k < 0:
        return MonoPoly(frame, np.zeros(len(frame.exps)))
    w = rule.weights
    if w.sum() <= 0.0 or len(w) == 0:
        raise DegenerateRegionError("projection region has vanishing measure")
    m = space_dim(k)
    V = frame.values(rule.points)[:, :m]
    fvals = f(rule.points) if callable(f) else np.asarray(f, float)
    M = V.T @ (w[:, None] * V)
    b = V.T @ (w * fvals)
    try:
        c = np.linalg.solve(M, b)
    except np.linalg.LinAlgError as exc:
        raise DegenerateRegionError(f"singular Gram matrix: {exc}") from exc
    full = np.zeros(len(frame.exps))
    full[:m] = c
    return MonoPoly(frame, full)
