"""Error measurement against manufactured solutions and rate fitting."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass

import numpy as np

from ifelab import quadrature
from ifelab.assembly import (
    _boundary_normal,
    Discretization,
    SchemeParams,
    _beta_at,
    _edge_normal,
    element_rows,
    enrichment_at,
)
from ifelab.geometry import INTERFACE, PLUS


@dataclass
class ErrorReport:
    h: float
    n_dof: int
    l2: float
    h1: float
    energy: float = None
    seconds: float = None


@dataclass
class RateTable:
    ns: list
    errors: list
    successive: list  # per refinement step; None where undefined
    slope: float  # least-squares exponent of error ~ N^-slope


def error_norms(
    disc: Discretization,
    params: SchemeParams,
    u_vec,
    problem,
    include_enrichment: bool = True,
    with_energy: bool = True,
    quad_degree: int = None,
) -> ErrorReport:
    """Broken L2 / H1 errors of the discrete solution, and the mesh-
    dependent energy norm with jump penalties and flux averages.

    The discrete solution on cut elements includes the enrichment piece
    unless include_enrichment is False (diagnostic mode measuring the
    homogeneous part alone).
    """
    t0 = time.perf_counter()
    mesh, cls, dofmap = disc.mesh, disc.cls, disc.dofmap
    bp, bm = disc.beta
    qd = quad_degree if quad_degree is not None else max(disc.quad_degree, 2 * disc.p + 2)
    u_vec = np.asarray(u_vec, float)
    ex = problem.exact

    acc_l2 = 0.0
    acc_h1 = 0.0
    acc_energy = 0.0

    # uncut elements, vectorized per orientation and side
    for orient in (0, 1):
        for side in (PLUS, -1):
            sel = [
                t
                for t in range(len(mesh.triangles))
                if t % 2 == orient and cls.tri_class[t] == side
            ]
            if not sel:
                continue
            ref, _ = disc.basis_for(sel[0])
            v0 = mesh.tri_vertices(sel[0])[0]
            rule = quadrature.triangle_rule_on(mesh.tri_vertices(sel[0]) - v0, qd)
            Z = ref.eval(rule.points)
            G = ref.grad(rule.points)
            offs = np.array([mesh.vertices[mesh.triangles[t][0]] for t in sel])
            pts = (offs[:, None, :] + rule.points[None, :, :]).reshape(-1, 2)
            uf = ex.u_plus if side == PLUS else ex.u_minus
            gf = ex.grad_plus if side == PLUS else ex.grad_minus
            ue = np.asarray(uf(pts), float).reshape(len(sel), -1)
            ge = np.asarray(gf(pts), float).reshape(len(sel), -1, 2)
            coefs = u_vec[dofmap.cell_dofs[sel]]
            uh = np.einsum("kn,qn->kq", coefs, Z)
            gh = np.einsum("kn,qnd->kqd", coefs, G)
            dv = ue - uh
            dg = ge - gh
            acc_l2 += np.einsum("q,kq->", rule.weights, dv * dv)
            h1 = np.einsum("q,kqd->", rule.weights, dg * dg)
            acc_h1 += h1
            beta_c = bp if side == PLUS else bm
            acc_energy += beta_c * h1

    # cut elements
    for t, block in disc.blocks.items():
        cut = block.cut_unit
        coefs = u_vec[dofmap.cell_dofs[t]]
        for rule, side in ((cut.plus, PLUS), (cut.minus, -1)):
            Z, G = element_rows(disc, t, rule.points)
            uh = Z @ coefs
            gh = np.einsum("qnd,n->qd", G, coefs)
            if include_enrichment:
                ev, eg = enrichment_at(disc, t, rule.points)
                uh = uh + ev
                gh = gh + eg
            uf = ex.u_plus if side == PLUS else ex.u_minus
            gf = ex.grad_plus if side == PLUS else ex.grad_minus
            dv = np.asarray(uf(rule.points), float) - uh
            dg = np.asarray(gf(rule.points), float) - gh
            acc_l2 += rule.weights @ (dv * dv)
            h1 = np.einsum("q,qd->", rule.weights, dg * dg)
            acc_h1 += h1
            acc_energy += (bp if side == PLUS else bm) * h1

    if with_energy:
        acc_energy += _energy_jump_terms(
            disc, params, u_vec, problem, include_enrichment, qd
        )
        energy = float(np.sqrt(acc_energy))
    else:
        energy = None
    return ErrorReport(
        h=mesh.h,
        n_dof=dofmap.ndof,
        l2=float(np.sqrt(acc_l2)),
        h1=float(np.sqrt(acc_h1)),
        energy=energy,
        seconds=time.perf_counter() - t0,
    )


def _energy_jump_terms(disc, params, u_vec, problem, include_enrichment, qd):
    """Penalty and flux-average contributions of the broken energy norm
    (fixed first powers of |e| and h_T regardless of the penalty theta)."""
    mesh, cls, dofmap = disc.mesh, disc.cls, disc.dofmap
    bp, bm = disc.beta
    ex = problem.exact
    acc = 0.0

    def discrete_edge(t, X, n_e):
        Z, G = element_rows(disc, t, X)
        c = u_vec[dofmap.cell_dofs[t]]
        v = Z @ c
        gn = np.einsum("qnd,n,d->q", G, c, n_e)
        if include_enrichment:
            evals, egrads = enrichment_at(disc, t, X)
            v = v + evals
            gn = gn + egrads @ n_e
        return v, gn

    for e in np.flatnonzero(cls.interface_edges):
        tris = mesh.edge_tris[e]
        va, vb = mesh.vertices[mesh.edges[e]]
        rule = quadrature.split_edge_rule(va, vb, disc.ls, qd)
        X, w = rule.points, rule.weights
        bx = _beta_at(disc, X)
        on_plus = np.asarray(disc.ls.value(X), float) < 0.0
        ge = np.where(
            on_plus[:, None],
            np.asarray(ex.grad_plus(X), float),
            np.asarray(ex.grad_minus(X), float),
        )
        if len(tris) == 2:
            t1, t2 = tris
            n_e = _edge_normal(mesh, e, t1, t2)
            v1, gn1 = discrete_edge(t1, X, n_e)
            v2, gn2 = discrete_edge(t2, X, n_e)
            # the exact solution is single valued along the edge off the
            # crossing point, so its edge jump vanishes
            jump = v2 - v1  # [err] = [u] - [u_h] = -(v1 - v2)
            avg_err = bx * (ge @ n_e) - 0.5 * bx * (gn1 + gn2)
        else:
            # boundary edge of a cut element: one-sided trace mismatch
            (t1,) = tris
            n_e = _boundary_normal(mesh, e, t1)
            v1, gn1 = discrete_edge(t1, X, n_e)
            ue = np.where(
                on_plus,
                np.asarray(ex.u_plus(X), float),
                np.asarray(ex.u_minus(X), float),
            )
            jump = ue - v1
            avg_err = bx * (ge @ n_e) - bx * gn1
        length = np.linalg.norm(vb - va)
        acc += (params.sigma0 * params.gamma / length) * (w @ jump**2)
        acc += (length / (params.sigma0 * params.gamma)) * (w @ avg_err**2)

    for t, block in disc.blocks.items():
        arc = block.cut_unit.interface
        n_iface = -arc.normals
        X, w = arc.points, arc.weights
        c = u_vec[dofmap.cell_dofs[t]]
        Z = block.basis.eval(X)
        G = block.basis.grad(X)
        v_plus = Z @ c
        v_minus = Z @ (block.C @ c)
        gn_plus = np.einsum("qnd,n,qd->q", G, c, n_iface)
        gn_minus = np.einsum("qnd,n,qd->q", G, block.C @ c, n_iface)
        if include_enrichment and block.has_enrichment:
            v_minus = v_minus + Z @ block.enrich
            gn_minus = gn_minus + np.einsum(
                "qnd,n,qd->q", G, block.enrich, n_iface
            )
        jd = np.asarray(ex.u_minus(X), float) - np.asarray(ex.u_plus(X), float)
        jump_err = jd - (v_minus - v_plus)
        exact_avg = 0.5 * np.einsum(
            "qd,qd->q",
            bp * np.asarray(ex.grad_plus(X), float)
            + bm * np.asarray(ex.grad_minus(X), float),
            n_iface,
        )
        avg_err = exact_avg - 0.5 * (bp * gn_plus + bm * gn_minus)
        acc += (params.sigma1 * params.gamma / block.h_T) * (w @ jump_err**2)
        acc += (block.h_T / (params.sigma1 * params.gamma)) * (w @ avg_err**2)
    return acc


def fit_rates(ns, errors) -> RateTable:
    """Successive rates and the least-squares slope of log error against
    log(1/N); nonpositive errors are skipped with a None flag."""
    ns = list(map(float, ns))
    errors = list(map(float, errors))
    if len(ns) < 2 or any(b <= a for a, b in zip(ns, ns[1:])):
        raise ValueError("need at least two strictly increasing N values")
    successive = [None]
    for k in range(1, len(ns)):
        if errors[k] > 0 and errors[k - 1] > 0:
            successive.append(
                float(np.log(errors[k - 1] / errors[k]) / np.log(ns[k] / ns[k - 1]))
            )
        else:
            successive.append(None)
    ok = [k for k in range(len(ns)) if errors[k] > 0]
    if len(ok) >= 2:
        coef = np.polyfit(np.log([ns[k] for k in ok]), np.log([errors[k] for k in ok]), 1)
        slope = float(-coef[0])
    else:
        slope = float("nan")
    return RateTable(ns=ns, errors=errors, successive=successive, slope=slope)


CSV_COLUMNS = [
    "p",
    "N",
    "h",
    "N_dof",
    "errL2",
    "errH1",
    "errEnergy",
    "rateL2",
    "rateH1",
    "kappa",
    "kappaS",
    "eta",
    "seconds",
]


def write_csv(path, rows, columns=None):
    """Rows are dicts; missing entries are left blank."""
    columns = columns or CSV_COLUMNS
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(row.get(k)) for k in columns})


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.10e}"
    return x
