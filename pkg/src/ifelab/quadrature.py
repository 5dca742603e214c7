"""Quadrature on triangles, cut subregions, edges and interface arcs.

Straight triangles use a conical-product Gauss rule (positive weights,
arbitrary exactness degree).  Cut subregions of an interface triangle are
integrated with curved-fan maps: the region between two rays from an
apex vertex and the exact interface curve is parametrized by
X(s, t) = apex + t (C(s) - apex) with C the chord (line case, exact) or
the circular arc, so no geometric linearization of the interface enters.
Interface arcs carry Gauss points with the exact metric factor and the
unit normal grad(phi)/|grad(phi)| stored per point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ifelab import geometry
from ifelab.errors import (
    DegenerateRegionError,
    InternalConsistencyError,
    InvalidConfigError,
)
from ifelab.geometry import Circle, Line, triangle_area


@dataclass
class QuadRule:
    points: np.ndarray  # (m, 2)
    weights: np.ndarray  # (m,)
    degree: int
    normals: np.ndarray = None  # (m, 2) for interface-arc rules

    def integrate(self, f):
        vals = f(self.points) if callable(f) else np.asarray(f, float)
        return float(self.weights @ vals)


def gauss01(m: int):
    """m-point Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(m)
    return 0.5 * (x + 1.0), 0.5 * w


def triangle_rule(d: int) -> QuadRule:
    """Rule of exactness >= d on the reference triangle (0,0),(1,0),(0,1).

    Conical product of Gauss rules through the Duffy map
    (x, y) = (s (1 - t), t); the extra factor (1 - t) is absorbed by one
    additional point in t.
    """
    if d < 1:
        raise InvalidConfigError(f"quadrature degree must be >= 1, got {d}")
    ms = (d + 2) // 2
    mt = (d + 3) // 2
    s, ws = gauss01(ms)
    t, wt = gauss01(mt)
    S, T = np.meshgrid(s, t, indexing="ij")
    WS, WT = np.meshgrid(ws, wt, indexing="ij")
    pts = np.column_stack([(S * (1.0 - T)).ravel(), T.ravel()])
    w = (WS * WT * (1.0 - T)).ravel()
    return QuadRule(points=pts, weights=w, degree=d)


def map_to_triangle(rule: QuadRule, verts) -> QuadRule:
    verts = np.asarray(verts, float)
    J = np.column_stack([verts[1] - verts[0], verts[2] - verts[0]])
    det = abs(np.linalg.det(J))
    pts = rule.points @ J.T + verts[0]
    # reference triangle has area 1/2, factor det = 2 * area(T) / 1
    return QuadRule(points=pts, weights=rule.weights * det, degree=rule.degree)


def triangle_rule_on(verts, d: int) -> QuadRule:
    return map_to_triangle(triangle_rule(d), verts)


def edge_rule(P, Q, d: int) -> QuadRule:
    """Gauss-Legendre rule on the segment PQ."""
    P = np.asarray(P, float)
    Q = np.asarray(Q, float)
    length = np.linalg.norm(Q - P)
    if length <= 0.0:
        raise DegenerateRegionError("zero-length segment")
    m = max((d + 2) // 2, 1)
    t, w = gauss01(m)
    pts = P + t[:, None] * (Q - P)
    return QuadRule(points=pts, weights=w * length, degree=d)


def split_edge_rule(P, Q, ls, d: int) -> QuadRule:
    """Edge rule split at the interface crossing when phi changes sign.

    Jump integrands on cut edges are only piecewise smooth; each part
    gets its own Gauss rule and the parts are concatenated.
    """
    P = np.asarray(P, float)
    Q = np.asarray(Q, float)
    if float(ls.value(P)) * float(ls.value(Q)) < 0.0:
        Z = geometry.edge_intersection(ls, P, Q)
        ra = edge_rule(P, Z, d)
        rb = edge_rule(Z, Q, d)
        return QuadRule(
            points=np.vstack([ra.points, rb.points]),
            weights=np.concatenate([ra.weights, rb.weights]),
            degree=d,
        )
    return edge_rule(P, Q, d)


def _curve(ls, A, B):
    """Parametrization C(s), C'(s) of the interface piece from A to B.

    Lines use the chord; circles the (minor) arc through the wrapped
    angle difference, which is the piece lying inside the element.
    """
    A = np.asarray(A, float)
    B = np.asarray(B, float)
    if isinstance(ls, Line):
        d = B - A

        def C(s):
            return A + s[:, None] * d

        def Cp(s):
            return np.broadcast_to(d, (len(s), 2)).copy()

        return C, Cp
    if isinstance(ls, Circle):
        c = np.array([ls.cx, ls.cy])
        ta = np.arctan2(A[1] - c[1], A[0] - c[0])
        tb = np.arctan2(B[1] - c[1], B[0] - c[0])
        dt = (tb - ta + np.pi) % (2.0 * np.pi) - np.pi
        r = ls.r

        def C(s):
            ang = ta + s * dt
            return c + r * np.column_stack([np.cos(ang), np.sin(ang)])

        def Cp(s):
            ang = ta + s * dt
            return r * dt * np.column_stack([-np.sin(ang), np.cos(ang)])

        return C, Cp
    raise InvalidConfigError(f"unsupported interface kind {ls.kind!r}")


def arc_rule(ls, A, B, d: int) -> QuadRule:
    """Gauss rule along the interface piece from A to B with unit normals.

    The point count is d (not ceil((d+1)/2)): the metric and normal
    factors on circular arcs are trigonometric, and d Gauss points drive
    their quadrature error far below the discretization tolerances.
    """
    C, Cp = _curve(ls, A, B)
    m = max(d, 4)
    s, w = gauss01(m)
    pts = C(s)
    speed = np.linalg.norm(Cp(s), axis=1)
    if np.all(speed == 0.0):
        raise DegenerateRegionError("zero-length interface piece")
    return QuadRule(
        points=pts,
        weights=w * speed,
        degree=d,
        normals=ls.unit_normal(pts),
    )


def _ruled_rule(base0, base1, C, Cp, d: int, curved: bool) -> QuadRule:
    """Quadrature over the ruled region between a straight base segment
    and the interface curve.

    X(s, t) = (1 - t) B(s) + t C(s) with B(s) = base0 + s (base1 - base0);
    a degenerate base (base0 == base1) gives the fan from that apex.  The
    Jacobian cross(X_s, X_t) must be one-signed over the region, which is
    checked; callers fall back to subdivision when it is not (the
    interface curvature is then large relative to the region).
    """
    base0 = np.asarray(base0, float)
    base1 = np.asarray(base1, float)
    m = (d + 2) // 2 + (2 if curved else 0)
    m = max(m, 2)
    s, ws = gauss01(m)
    t, wt = gauss01(m + 1)
    Cs = C(s)
    Cps = Cp(s)
    B = base0 + s[:, None] * (base1 - base0)
    dB = base1 - base0
    # X_s = (1 - t) B' + t C'(s);  X_t = C(s) - B(s)
    Xs = (1.0 - t)[:, None, None] * dB + t[:, None, None] * Cps[None, :, :]
    Xt = (Cs - B)[None, :, :]
    det = Xs[..., 0] * Xt[..., 1] - Xs[..., 1] * Xt[..., 0]
    scale = np.abs(det).max()
    if scale == 0.0:
        return QuadRule(points=np.zeros((0, 2)), weights=np.zeros(0), degree=d)
    if det.min() < -1e-13 * scale and det.max() > 1e-13 * scale:
        raise InternalConsistencyError("ruled map is not one-signed")
    pts = (1.0 - t)[:, None, None] * B[None, :, :] + t[:, None, None] * Cs[None, :, :]
    w = wt[:, None] * ws[None, :] * np.abs(det)
    return QuadRule(points=pts.reshape(-1, 2), weights=w.ravel(), degree=d)


def _concat(rules):
    rules = [r for r in rules if len(r.weights)]
    return QuadRule(
        points=np.vstack([r.points for r in rules]),
        weights=np.concatenate([r.weights for r in rules]),
        degree=min(r.degree for r in rules),
    )


@dataclass
class CutRegionQuad:
    """Rules over the two cut subregions and the interface piece of one
    triangle, plus split rules along its (possibly cut) edges."""

    plus: QuadRule
    minus: QuadRule
    interface: QuadRule  # with normals
    edge_rules: list  # per local edge, split at the crossing when cut
    area: float
    area_plus: float
    area_minus: float


def _side_rules(verts, ls, d: int, cut: geometry.CutInfo, depth: int):
    """Rules over the phi < 0 and phi > 0 parts of one cut triangle.

    The one-vertex side is the fan from its vertex; the two-vertex side
    is the ruled region between the opposite edge and the curve.  When a
    ruled map degenerates (apex beyond the circle's tangent point), the
    triangle is split into four congruent children and the cut children
    recurse; uncut children get straight rules.
    """
    verts = np.asarray(verts, float)
    e0, e1 = cut.cut_edges
    P, Q = cut.points
    # local edge k joins vertices k and k+1; the cut edges share one vertex
    shared = ({e0, (e0 + 1) % 3} & {e1, (e1 + 1) % 3}).pop()
    u, wv = [k for k in range(3) if k != shared]
    # P_u is the cut point on the edge having vertex u as an endpoint
    if u in (e0, (e0 + 1) % 3):
        P_u, Q_w = P, Q
    else:
        P_u, Q_w = Q, P
    curved = isinstance(ls, Circle)
    try:
        C, Cp = _curve(ls, P_u, Q_w)
        solo_rule = _ruled_rule(verts[shared], verts[shared], C, Cp, d, curved)
        duo_rule = _ruled_rule(verts[u], verts[wv], C, Cp, d, curved)
    except InternalConsistencyError:
        if depth >= 6:
            raise
        return _subdivided_side_rules(verts, ls, d, depth)
    solo_sign = cut.vertex_signs[shared]
    if solo_sign < 0:  # phi < 0 is the plus region
        return solo_rule, duo_rule
    return duo_rule, solo_rule


def _subdivided_side_rules(verts, ls, d: int, depth: int):
    mids = 0.5 * (verts + np.roll(verts, -1, axis=0))
    children = [
        np.array([verts[0], mids[0], mids[2]]),
        np.array([mids[0], verts[1], mids[1]]),
        np.array([mids[2], mids[1], verts[2]]),
        np.array([mids[0], mids[1], mids[2]]),
    ]
    plus_parts, minus_parts = [], []
    for child in children:
        res = geometry._cut_triangle(child, ls)
        if res is None:
            rule = triangle_rule_on(child, d)
            if float(ls.value(child.mean(axis=0))) < 0.0:
                plus_parts.append(rule)
            else:
                minus_parts.append(rule)
        else:
            info = geometry.CutInfo(
                points=res[1], cut_edges=res[0], vertex_signs=res[2]
            )
            cp, cm = _side_rules(child, ls, d, info, depth + 1)
            plus_parts.append(cp)
            minus_parts.append(cm)
    return _concat(plus_parts), _concat(minus_parts)


def cut_rules(verts, ls, d: int, cut: geometry.CutInfo = None) -> CutRegionQuad:
    """Build plus/minus/arc rules for a triangle cut on two edges.

    Additivity of the subregion areas is verified to 1e-10 relative.
    """
    verts = np.asarray(verts, float)
    if cut is None:
        res = geometry._cut_triangle(verts, ls)
        if res is None:
            raise InvalidConfigError("triangle is not cut by the interface")
        cut = geometry.CutInfo(points=res[1], cut_edges=res[0], vertex_signs=res[2])
    plus, minus = _side_rules(verts, ls, d, cut, depth=0)
    area = triangle_area(verts)
    a_plus = float(plus.weights.sum())
    a_minus = float(minus.weights.sum())
    if abs(a_plus + a_minus - area) > 1e-10 * area:
        raise InternalConsistencyError(
            f"cut areas {a_plus:.3e} + {a_minus:.3e} != {area:.3e}"
        )
    interface = arc_rule(ls, cut.points[0], cut.points[1], d)
    edge_rules = [
        split_edge_rule(verts[k], verts[(k + 1) % 3], ls, d) for k in range(3)
    ]
    return CutRegionQuad(
        plus=plus,
        minus=minus,
        interface=interface,
        edge_rules=edge_rules,
        area=area,
        area_plus=a_plus,
        area_minus=a_minus,
    )
