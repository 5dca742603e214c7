"""Unfitted meshes, level-set interfaces, element classification.

The computational domain is the square (-1,1)^2 partitioned into N x N
squares, each split into two triangles by its upper-left / lower-right
diagonal.  The interface is a line or a circle given as a level set phi,
with the sign convention

    plus region  = { phi < 0 },      minus region = { phi > 0 }.

The stored unit normal is grad(phi)/|grad(phi)|, which points from the
plus region into the minus region.  Jump terms of the discretization use
the opposite orientation; see :func:`jump_normal`.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from ifelab.errors import (
    AssumptionViolationError,
    GeometricDegeneracyError,
    InvalidConfigError,
    NoIntersectionError,
)

VERTEX_TOL = 1e-12

PLUS, MINUS, INTERFACE = 1, -1, 0


class LevelSetInterface:
    """Base class for analytic level sets (lines and circles)."""

    kind = "abstract"

    def value(self, X):
        raise NotImplementedError

    def gradient(self, X):
        raise NotImplementedError

    def unit_normal(self, X):
        """grad(phi)/|grad(phi)|; points from the plus into the minus region."""
        g = self.gradient(X)
        norm = np.linalg.norm(g, axis=-1, keepdims=True)
        return g / norm


@dataclass(frozen=True)
class Line(LevelSetInterface):
    """phi(x, y) = a*x + b*y + c."""

    a: float
    b: float
    c: float
    kind = "line"

    def __post_init__(self):
        if self.a**2 + self.b**2 <= 0.0:
            raise InvalidConfigError("line requires a^2 + b^2 > 0")

    def value(self, X):
        X = np.asarray(X, float)
        return self.a * X[..., 0] + self.b * X[..., 1] + self.c

    def gradient(self, X):
        X = np.asarray(X, float)
        g = np.empty(X.shape, float)
        g[..., 0] = self.a
        g[..., 1] = self.b
        return g

    def negated(self):
        return Line(-self.a, -self.b, -self.c)


@dataclass(frozen=True)
class Circle(LevelSetInterface):
    """phi(x, y) = sign * ((x-cx)^2 + (y-cy)^2 - r^2).

    With sign=+1 the disk interior is the plus region; sign=-1 swaps the
    side labels without moving the interface.
    """

    cx: float
    cy: float
    r: float
    sign: float = 1.0
    kind = "circle"

    def __post_init__(self):
        if self.r <= 0.0:
            raise InvalidConfigError("circle requires r > 0")
        if self.sign not in (1.0, -1.0):
            raise InvalidConfigError("circle sign must be +1 or -1")

    def value(self, X):
        X = np.asarray(X, float)
        dx = X[..., 0] - self.cx
        dy = X[..., 1] - self.cy
        return self.sign * (dx * dx + dy * dy - self.r**2)

    def gradient(self, X):
        X = np.asarray(X, float)
        g = np.empty(X.shape, float)
        g[..., 0] = 2.0 * self.sign * (X[..., 0] - self.cx)
        g[..., 1] = 2.0 * self.sign * (X[..., 1] - self.cy)
        return g

    def negated(self):
        return Circle(self.cx, self.cy, self.r, -self.sign)


def jump_normal(ls: LevelSetInterface, X):
    """Unit normal oriented from the minus region into the plus region.

    The jump convention [v] = v_minus - v_plus pairs with this
    orientation in the flux and penalty terms.
    """
    return -ls.unit_normal(X)


def edge_intersection(ls: LevelSetInterface, P, Q):
    """Intersection of the zero level set with the segment PQ.

    Requires a sign change: phi(P) * phi(Q) < 0.  Lines are solved in
    closed form; circles as a quadratic in the segment parameter.
    """
    P = np.asarray(P, float)
    Q = np.asarray(Q, float)
    fp = float(ls.value(P))
    fq = float(ls.value(Q))
    if fp * fq >= 0.0:
        raise NoIntersectionError(
            f"no sign change on segment {P.tolist()} -> {Q.tolist()}"
        )
    if isinstance(ls, Line):
        t = fp / (fp - fq)
        return P + t * (Q - P)
    # circle: |P + t(Q-P) - c|^2 = r^2
    d = Q - P
    m = P - np.array([ls.cx, ls.cy])
    a = d @ d
    b = 2.0 * (m @ d)
    c = m @ m - ls.r**2
    disc = b * b - 4.0 * a * c
    disc = max(disc, 0.0)
    sq = np.sqrt(disc)
    # numerically stable pair of roots
    qq = -0.5 * (b + np.copysign(sq, b))
    roots = [qq / a]
    if qq != 0.0:
        roots.append(c / qq)
    ts = [t for t in roots if -1e-12 <= t <= 1.0 + 1e-12]
    if not ts:
        raise NoIntersectionError("circle-segment roots fell outside [0, 1]")
    # with a sign change exactly one root lies inside the segment
    t = min(ts, key=lambda t: abs(t - 0.5))
    # one Newton polish on g(t) = phi(P + t d)
    x = P + t * d
    g = float(ls.value(x))
    dg = float(ls.gradient(x) @ d)
    if dg != 0.0:
        t -= g / dg
    t = min(max(t, 0.0), 1.0)
    return P + t * d


@dataclass
class Mesh:
    """Uniform triangulation of (-1,1)^2; 2*N^2 positively oriented triangles."""

    N: int
    vertices: np.ndarray  # (nv, 2)
    triangles: np.ndarray  # (nt, 3) vertex indices
    edges: np.ndarray  # (ne, 2) vertex indices
    edge_tris: list  # per edge, list of adjacent triangle ids
    tri_edges: np.ndarray  # (nt, 3) global edge id of local edge k

    @property
    def h(self) -> float:
        return 2.0 / self.N

    def tri_vertices(self, t: int) -> np.ndarray:
        return self.vertices[self.triangles[t]]

    def local_edge_endpoints(self, t: int, k: int) -> np.ndarray:
        """Local edge k of triangle t joins local vertices k and (k+1) % 3."""
        tri = self.triangles[t]
        return self.vertices[[tri[k], tri[(k + 1) % 3]]]


def build_mesh(N: int) -> Mesh:
    if N < 2:
        raise InvalidConfigError(f"N must be >= 2, got {N}")
    s = 2.0 / N
    xs = -1.0 + s * np.arange(N + 1)
    xv, yv = np.meshgrid(xs, xs, indexing="xy")
    vertices = np.column_stack([xv.ravel(), yv.ravel()])

    def vid(i, j):  # column i, row j
        return j * (N + 1) + i

    tris = []
    for j in range(N):
        for i in range(N):
            v00 = vid(i, j)
            v10 = vid(i + 1, j)
            v01 = vid(i, j + 1)
            v11 = vid(i + 1, j + 1)
            # square split by the diagonal from upper-left to lower-right
            tris.append((v00, v10, v01))
            tris.append((v10, v11, v01))
    triangles = np.asarray(tris, dtype=np.int64)

    edge_ids: dict[tuple[int, int], int] = {}
    edges = []
    edge_tris: list[list[int]] = []
    tri_edges = np.empty((len(triangles), 3), dtype=np.int64)
    for t, tri in enumerate(triangles):
        for k in range(3):
            key = tuple(sorted((int(tri[k]), int(tri[(k + 1) % 3]))))
            e = edge_ids.get(key)
            if e is None:
                e = len(edges)
                edge_ids[key] = e
                edges.append(key)
                edge_tris.append([])
            edge_tris[e].append(t)
            tri_edges[t, k] = e
    return Mesh(
        N=N,
        vertices=vertices,
        triangles=triangles,
        edges=np.asarray(edges, dtype=np.int64),
        edge_tris=edge_tris,
        tri_edges=tri_edges,
    )


@dataclass
class CutInfo:
    """Cut data of one interface triangle."""

    points: np.ndarray  # (2, 2) intersection points, in local-edge order
    cut_edges: tuple  # the two local edge indices carrying the points
    vertex_signs: np.ndarray  # (3,) sign of phi at the vertices


@dataclass
class CutClassification:
    tri_class: np.ndarray  # (nt,) PLUS / MINUS / INTERFACE
    cuts: dict = field(default_factory=dict)  # tri id -> CutInfo
    interface_edges: np.ndarray = None  # (ne,) bool, membership in the cut skeleton

    @property
    def interface_tris(self):
        return np.flatnonzero(self.tri_class == INTERFACE)


def _cut_triangle(verts, ls, context=""):
    """Return (cut_edges, points, signs) or None when the triangle is uncut."""
    phi = np.asarray(ls.value(verts), float)
    bad = np.flatnonzero(np.abs(phi) < VERTEX_TOL)
    if bad.size:
        k = int(bad[0])
        raise GeometricDegeneracyError(
            f"interface passes through vertex {verts[k].tolist()}{context} "
            f"(|phi| = {abs(phi[k]):.3e} < {VERTEX_TOL})"
        )
    signs = np.sign(phi)
    if np.all(signs > 0) or np.all(signs < 0):
        return None
    cut_edges = tuple(
        k for k in range(3) if signs[k] * signs[(k + 1) % 3] < 0
    )
    if len(cut_edges) != 2:
        raise AssumptionViolationError(
            f"interface must cut exactly 2 edges, found {len(cut_edges)}{context}"
        )
    points = np.array(
        [
            edge_intersection(ls, verts[k], verts[(k + 1) % 3])
            for k in cut_edges
        ]
    )
    return cut_edges, points, signs


def classify(mesh: Mesh, ls: LevelSetInterface) -> CutClassification:
    """Classify every triangle against the interface.

    Raises GeometricDegeneracyError when a mesh vertex lies within
    VERTEX_TOL of the interface, and AssumptionViolationError when a
    triangle is not cut on exactly two distinct edges.
    """
    phi = ls.value(mesh.vertices)
    bad = np.flatnonzero(np.abs(phi) < VERTEX_TOL)
    if bad.size:
        k = int(bad[0])
        raise GeometricDegeneracyError(
            f"interface passes through mesh vertex {k} at "
            f"{mesh.vertices[k].tolist()} (|phi| = {abs(phi[k]):.3e})"
        )
    signs = np.sign(phi)
    tri_signs = signs[mesh.triangles]  # (nt, 3)
    nt = len(mesh.triangles)
    tri_class = np.empty(nt, dtype=np.int64)
    tri_class[np.all(tri_signs < 0, axis=1)] = PLUS
    tri_class[np.all(tri_signs > 0, axis=1)] = MINUS
    mixed = ~(np.all(tri_signs < 0, axis=1) | np.all(tri_signs > 0, axis=1))
    tri_class[mixed] = INTERFACE

    cuts = {}
    for t in np.flatnonzero(mixed):
        verts = mesh.tri_vertices(t)
        res = _cut_triangle(verts, ls, context=f" (triangle {t})")
        cut_edges, points, vsigns = res
        cuts[int(t)] = CutInfo(points=points, cut_edges=cut_edges, vertex_signs=vsigns)

    interface_edges = np.zeros(len(mesh.edges), dtype=bool)
    for t in np.flatnonzero(mixed):
        interface_edges[mesh.tri_edges[t]] = True
    return CutClassification(
        tri_class=tri_class, cuts=cuts, interface_edges=interface_edges
    )


def incenter(verts) -> np.ndarray:
    """Incenter of a triangle: side-length weighted vertex average."""
    verts = np.asarray(verts, float)
    a = np.linalg.norm(verts[1] - verts[2])
    b = np.linalg.norm(verts[2] - verts[0])
    c = np.linalg.norm(verts[0] - verts[1])
    return (a * verts[0] + b * verts[1] + c * verts[2]) / (a + b + c)


@dataclass
class FictitiousElement:
    """Homothetic enlargement of an interface triangle about its incenter."""

    parent_id: int
    lam: float
    parent_vertices: np.ndarray  # (3, 2)
    vertices: np.ndarray  # (3, 2) scaled vertices
    center: np.ndarray  # incenter of the parent
    cut: CutInfo

    @property
    def h_parent(self) -> float:
        """Diameter (longest edge) of the parent triangle."""
        v = self.parent_vertices
        return max(
            np.linalg.norm(v[1] - v[0]),
            np.linalg.norm(v[2] - v[1]),
            np.linalg.norm(v[0] - v[2]),
        )


def fictitious(
    verts,
    lam: float,
    ls: LevelSetInterface,
    parent_id: int = -1,
    domain=((-1.0, 1.0), (-1.0, 1.0)),
) -> FictitiousElement:
    """Build the scaled element T_lambda and its cut data.

    lam = 1 reproduces the original triangle.  A warning (not an error)
    is emitted when the scaled element leaves the computational domain.
    """
    verts = np.asarray(verts, float)
    if lam < 1.0:
        raise InvalidConfigError(f"scaling factor must be >= 1, got {lam}")
    G = incenter(verts)
    scaled = G + lam * (verts - G)
    res = _cut_triangle(scaled, ls, context=f" (fictitious of element {parent_id})")
    if res is None:
        raise AssumptionViolationError(
            f"interface does not cut the scaled element of {parent_id} "
            f"(lambda = {lam}); reduce lambda"
        )
    cut_edges, points, signs = res
    if domain is not None:
        (x0, x1), (y0, y1) = domain
        if (
            scaled[:, 0].min() < x0
            or scaled[:, 0].max() > x1
            or scaled[:, 1].min() < y0
            or scaled[:, 1].max() > y1
        ):
            warnings.warn(
                f"fictitious element of {parent_id} (lambda={lam}) leaves the domain",
                stacklevel=2,
            )
    return FictitiousElement(
        parent_id=parent_id,
        lam=lam,
        parent_vertices=verts,
        vertices=scaled,
        center=G,
        cut=CutInfo(points=points, cut_edges=cut_edges, vertex_signs=signs),
    )


def triangle_area(verts) -> float:
    verts = np.asarray(verts, float)
    return 0.5 * abs(
        (verts[1, 0] - verts[0, 0]) * (verts[2, 1] - verts[0, 1])
        - (verts[2, 0] - verts[0, 0]) * (verts[1, 1] - verts[0, 1])
    )


def dump_json(mesh: Mesh, cls: CutClassification = None, path=None):
    """Debug dump of the mesh (and classification) as plain JSON arrays."""
    data = {
        "N": mesh.N,
        "h": mesh.h,
        "vertices": mesh.vertices.tolist(),
        "triangles": mesh.triangles.tolist(),
    }
    if cls is not None:
        data["tri_class"] = cls.tri_class.tolist()
        data["cuts"] = {
            str(t): {
                "points": info.points.tolist(),
                "cut_edges": list(info.cut_edges),
            }
            for t, info in cls.cuts.items()
        }
    if path is not None:
        with open(path, "w") as fh:
            json.dump(data, fh)
    return data
