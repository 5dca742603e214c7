"""Global discretization: DOF map, stiffness matrix, load vector.

Degrees of freedom are nodal.  Continuity is imposed edge by edge: the
p + 1 nodes on an edge are merged between its two elements exactly when
the edge is not part of the cut skeleton (the set of all edges of cut
elements).  Cut elements therefore own their nodes privately and couple
to their neighbours only through interior-penalty terms on those edges
and through flux/penalty terms on the interface piece inside them.

Sign conventions: jumps are [v] = v_minus - v_plus across the interface
(and v_first - v_second across an edge, with the edge normal oriented
from the first to the second element); averages are arithmetic means.
The interface normal used in all flux terms points from the minus region
into the plus region, which makes the form consistent with the jump
conventions above.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ifelab import geometry, localife, quadrature
from ifelab.errors import InternalConsistencyError
from ifelab.geometry import INTERFACE, PLUS
from ifelab.localife import InterfaceData, check_beta
from ifelab.polybasis import PolyBasis, lattice_nodes, space_dim


@dataclass
class SchemeParams:
    """Penalty and symmetrization parameters of the scheme."""

    sigma0: float
    sigma1: float
    gamma: float
    theta: float = 1.0
    eps0: float = -1.0
    eps1: float = -1.0
    interface_penalties: bool = True
    quad_degree: int = None
    avg_mode: str = "arithmetic"  # or "harmonic" (coefficient-weighted)

    def iface_weights(self, beta):
        """(w_plus, w_minus) of the interface flux average.  The value
        average in the flux-jump data term uses the swapped pair, which
        is what consistency of the weighted form requires."""
        bp, bm = beta
        if self.avg_mode == "arithmetic":
            return 0.5, 0.5
        if self.avg_mode == "harmonic":
            return bm / (bp + bm), bp / (bp + bm)
        raise ValueError(f"unknown avg_mode {self.avg_mode!r}")


def default_params(
    p: int,
    beta,
    sigma: float = None,
    sigma_interface: float = None,
    gamma_mode: str = "contrast",
    gamma_value: float = None,
    theta: float = 1.0,
    eps: float = -1.0,
    interface_penalties: bool = True,
    avg_mode: str = "arithmetic",
) -> SchemeParams:
    """Defaults: sigma0 = 10 p^2, sigma1 = p^2, gamma = beta_minus / beta_plus.

    gamma_mode 'paper' uses beta_minus^2 / beta_plus (the unnormalized
    variant; the two coincide after dividing the equation by the larger
    coefficient, and the normalized weight measures noticeably better at
    high contrast on coarse meshes); 'explicit' takes gamma_value
    verbatim.  The interface penalty constant is kept smaller than the
    edge one: the edge penalties carry the coercivity of the broken
    space while a large interface penalty over-constrains the jump data
    on coarse meshes.
    """
    bp, bm = check_beta(beta)
    if gamma_mode == "paper":
        gamma = bm * bm / bp
    elif gamma_mode == "contrast":
        gamma = bm / bp
    elif gamma_mode == "explicit":
        gamma = float(gamma_value)
    else:
        raise ValueError(f"unknown gamma_mode {gamma_mode!r}")
    s0 = 10.0 * p * p if sigma is None else float(sigma)
    s1 = 1.0 * p * p if sigma_interface is None else float(sigma_interface)
    return SchemeParams(
        sigma0=s0,
        sigma1=s1,
        gamma=gamma,
        theta=theta,
        eps0=eps,
        eps1=eps,
        interface_penalties=interface_penalties,
        avg_mode=avg_mode,
    )


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


@dataclass
class DofMap:
    mesh: geometry.Mesh
    p: int
    cell_dofs: np.ndarray  # (nt, n)
    ndof: int
    dof_nodes: np.ndarray  # (ndof, 2)
    boundary_dofs: np.ndarray  # sorted indices of nodes on the outer boundary

    @property
    def n_local(self) -> int:
        return space_dim(self.p)


def build_dofs(mesh: geometry.Mesh, cls: geometry.CutClassification, p: int) -> DofMap:
    nt = len(mesh.triangles)
    n = space_dim(p)
    nodes = np.empty((nt, n, 2))
    for t in range(nt):
        nodes[t] = lattice_nodes(mesh.tri_vertices(t), p)

    uf = _UnionFind(nt * n)
    for e, tris in enumerate(mesh.edge_tris):
        if len(tris) != 2 or cls.interface_edges[e]:
            continue
        t1, t2 = tris
        va, vb = mesh.vertices[mesh.edges[e]]
        d = vb - va
        dd = d @ d

        def edge_slots(t):
            rel = nodes[t] - va
            ts = rel @ d / dd
            foot = va + ts[:, None] * d
            on = np.linalg.norm(nodes[t] - foot, axis=1) < 1e-10 * np.sqrt(dd)
            idx = np.flatnonzero(on)
            return idx[np.argsort(ts[idx])]

        s1 = edge_slots(t1)
        s2 = edge_slots(t2)
        if len(s1) != p + 1 or len(s2) != p + 1:
            raise InternalConsistencyError(
                f"edge {e}: found {len(s1)}/{len(s2)} nodes, expected {p + 1}"
            )
        for k in range(p + 1):
            uf.union(t1 * n + int(s1[k]), t2 * n + int(s2[k]))

    ids = {}
    cell_dofs = np.empty((nt, n), dtype=np.int64)
    dof_nodes = []
    for t in range(nt):
        for k in range(n):
            root = uf.find(t * n + k)
            g = ids.get(root)
            if g is None:
                g = len(dof_nodes)
                ids[root] = g
                dof_nodes.append(nodes[t, k])
            cell_dofs[t, k] = g
    dof_nodes = np.asarray(dof_nodes)
    on_boundary = (np.abs(np.abs(dof_nodes[:, 0]) - 1.0) < 1e-12) | (
        np.abs(np.abs(dof_nodes[:, 1]) - 1.0) < 1e-12
    )
    return DofMap(
        mesh=mesh,
        p=p,
        cell_dofs=cell_dofs,
        ndof=len(dof_nodes),
        dof_nodes=dof_nodes,
        boundary_dofs=np.flatnonzero(on_boundary),
    )


@dataclass
class Discretization:
    """Everything assembled once per (mesh, interface, degree) triple."""

    mesh: geometry.Mesh
    cls: geometry.CutClassification
    ls: object
    p: int
    beta: tuple
    lam: float
    dofmap: DofMap
    blocks: dict  # interface triangle id -> LocalIfeBlock
    quad_degree: int
    ref_bases: dict = field(default_factory=dict)  # orientation -> PolyBasis

    def basis_for(self, t: int) -> tuple:
        """(PolyBasis anchored at the element, offset) via the shared
        per-orientation reference basis; all same-orientation triangles
        of the uniform mesh are translates of each other."""
        orient = t % 2
        verts = self.mesh.tri_vertices(t)
        ref = self.ref_bases.get(orient)
        if ref is None:
            ref = PolyBasis(verts - verts[0], self.p)
            self.ref_bases[orient] = ref
        return ref, verts[0]


def discretize(
    mesh: geometry.Mesh,
    ls,
    p: int,
    beta,
    lam: float = 1.5,
    data: InterfaceData = None,
    quad_degree: int = None,
    cls: geometry.CutClassification = None,
) -> Discretization:
    check_beta(beta)
    if cls is None:
        cls = geometry.classify(mesh, ls)
    dofmap = build_dofs(mesh, cls, p)
    qd = quad_degree if quad_degree is not None else 2 * p + 2
    blocks = {}
    for t in cls.interface_tris:
        blocks[int(t)] = localife.build_block(
            mesh.tri_vertices(t),
            ls,
            lam,
            p,
            beta,
            data=data,
            quad_degree=qd,
            element_id=int(t),
            unit_cut=cls.cuts[int(t)],
        )
    return Discretization(
        mesh=mesh,
        cls=cls,
        ls=ls,
        p=p,
        beta=(float(beta[0]), float(beta[1])),
        lam=lam,
        dofmap=dofmap,
        blocks=blocks,
        quad_degree=qd,
    )


# ----------------------------------------------------------------------
# element-level trace helpers
# ----------------------------------------------------------------------


def element_rows(disc: Discretization, t: int, X):
    """Coefficient rows of values and gradients of the element's shape
    functions at physical points X, resolved by interface side for cut
    elements (the minus piece applies the extension matrix)."""
    X = np.atleast_2d(np.asarray(X, float))
    if disc.cls.tri_class[t] == INTERFACE:
        block = disc.blocks[t]
        Z = block.basis.eval(X)
        G = block.basis.grad(X)
        on_minus = np.asarray(disc.ls.value(X), float) > 0.0
        if np.any(on_minus):
            Z = Z.copy()
            G = G.copy()
            Z[on_minus] = Z[on_minus] @ block.C
            G[on_minus] = np.einsum("qjd,ji->qid", G[on_minus], block.C)
        return Z, G
    ref, off = disc.basis_for(t)
    return ref.eval(X - off), ref.grad(X - off)


def enrichment_at(disc: Discretization, t: int, X):
    """Values and gradients of the element's enrichment function (zero on
    the plus side and on uncut elements)."""
    X = np.atleast_2d(np.asarray(X, float))
    vals = np.zeros(len(X))
    grads = np.zeros((len(X), 2))
    if disc.cls.tri_class[t] != INTERFACE:
        return vals, grads
    block = disc.blocks[t]
    if not block.has_enrichment:
        return vals, grads
    on_minus = np.asarray(disc.ls.value(X), float) > 0.0
    if np.any(on_minus):
        vals[on_minus] = block.basis.eval(X[on_minus]) @ block.enrich
        grads[on_minus] = np.einsum(
            "qjd,j->qd", block.basis.grad(X[on_minus]), block.enrich
        )
    return vals, grads


def _edge_normal(mesh, e, t_first, t_second):
    """Unit normal of edge e oriented from t_first into t_second."""
    va, vb = mesh.vertices[mesh.edges[e]]
    tang = vb - va
    n = np.array([tang[1], -tang[0]])
    n /= np.linalg.norm(n)
    c1 = mesh.tri_vertices(t_first).mean(axis=0)
    c2 = mesh.tri_vertices(t_second).mean(axis=0)
    if n @ (c2 - c1) < 0:
        n = -n
    return n


def _boundary_normal(mesh, e, t):
    """Outward unit normal of boundary edge e of element t."""
    va, vb = mesh.vertices[mesh.edges[e]]
    tang = vb - va
    n = np.array([tang[1], -tang[0]])
    n /= np.linalg.norm(n)
    c = mesh.tri_vertices(t).mean(axis=0)
    if n @ (c - 0.5 * (va + vb)) > 0:
        n = -n
    return n


def _beta_at(disc, X):
    bp, bm = disc.beta
    return np.where(np.asarray(disc.ls.value(X), float) < 0.0, bp, bm)


# ----------------------------------------------------------------------
# stiffness matrix
# ----------------------------------------------------------------------


def assemble(disc: Discretization, params: SchemeParams) -> sp.csr_matrix:
    mesh, cls = disc.mesh, disc.cls
    dofmap = disc.dofmap
    n = dofmap.n_local
    bp, bm = disc.beta
    qd = params.quad_degree or disc.quad_degree

    rows, cols, vals = [], [], []

    def scatter(dofs, loc):
        kk = len(dofs)
        rows.append(np.repeat(dofs, kk))
        cols.append(np.tile(dofs, kk))
        vals.append(np.asarray(loc, float).ravel())

    # volumetric terms on uncut elements: one Gram matrix per orientation
    grams = {}
    for orient in (0, 1):
        t0 = next(
            (
                t
                for t in range(len(mesh.triangles))
                if t % 2 == orient and cls.tri_class[t] != INTERFACE
            ),
            None,
        )
        if t0 is None:
            continue
        ref, off = disc.basis_for(t0)
        rule = quadrature.triangle_rule_on(mesh.tri_vertices(t0) - off, qd)
        G = ref.grad(rule.points)
        grams[orient] = np.einsum("q,qid,qjd->ij", rule.weights, G, G)
    for t in range(len(mesh.triangles)):
        c = cls.tri_class[t]
        if c == INTERFACE:
            continue
        coef = bp if c == PLUS else bm
        scatter(dofmap.cell_dofs[t], coef * grams[t % 2])

    # volumetric terms on cut elements, with the extension on the minus side
    for t, block in disc.blocks.items():
        cut = block.cut_unit
        Gp = block.basis.grad(cut.plus.points)
        Gm = block.basis.grad(cut.minus.points)
        Kp = np.einsum("q,qid,qjd->ij", cut.plus.weights, Gp, Gp)
        Km = np.einsum("q,qid,qjd->ij", cut.minus.weights, Gm, Gm)
        loc = bp * Kp + bm * (block.C.T @ Km @ block.C)
        # interface flux, symmetrization, and penalty terms on the cut piece
        if params.interface_penalties:
            wp_avg, wm_avg = params.iface_weights(disc.beta)
            arc = cut.interface
            n_iface = -arc.normals  # oriented from minus into plus
            Z = block.basis.eval(arc.points)
            Gn = np.einsum("qjd,qd->qj", block.basis.grad(arc.points), n_iface)
            jump = Z @ block.C - Z
            avg = wp_avg * bp * Gn + wm_avg * bm * (Gn @ block.C)
            pen = params.sigma1 * params.gamma / block.h_T**params.theta
            w = arc.weights
            loc = loc - np.einsum("q,qi,qj->ij", w, jump, avg)
            loc = loc + params.eps1 * np.einsum("q,qi,qj->ij", w, avg, jump)
            loc = loc + pen * np.einsum("q,qi,qj->ij", w, jump, jump)
        scatter(dofmap.cell_dofs[t], loc)

    # interior-penalty terms on every edge of a cut element; boundary
    # edges of cut elements get one-sided terms that impose the
    # Dirichlet trace weakly (their nodal values parametrize the plus
    # piece only, so strong elimination cannot express the minus trace)
    for e in np.flatnonzero(cls.interface_edges):
        tris = mesh.edge_tris[e]
        va, vb = mesh.vertices[mesh.edges[e]]
        rule = quadrature.split_edge_rule(va, vb, disc.ls, qd)
        X, w = rule.points, rule.weights
        beta_x = _beta_at(disc, X)
        length = np.linalg.norm(vb - va)
        pen = params.sigma0 * params.gamma / length**params.theta
        if len(tris) == 2:
            t1, t2 = tris
            n_e = _edge_normal(mesh, e, t1, t2)
            Z1, G1 = element_rows(disc, t1, X)
            Z2, G2 = element_rows(disc, t2, X)
            gn1 = np.einsum("qjd,d->qj", G1, n_e)
            gn2 = np.einsum("qjd,d->qj", G2, n_e)
            jump = np.hstack([Z1, -Z2])
            avg = 0.5 * beta_x[:, None] * np.hstack([gn1, gn2])
            dofs = np.concatenate([dofmap.cell_dofs[t1], dofmap.cell_dofs[t2]])
        else:
            (t1,) = tris
            n_e = _boundary_normal(mesh, e, t1)
            jump, G1 = element_rows(disc, t1, X)
            avg = beta_x[:, None] * np.einsum("qjd,d->qj", G1, n_e)
            dofs = dofmap.cell_dofs[t1]
        loc = (
            -np.einsum("q,qi,qj->ij", w, jump, avg)
            + params.eps0 * np.einsum("q,qi,qj->ij", w, avg, jump)
            + pen * np.einsum("q,qi,qj->ij", w, jump, jump)
        )
        scatter(dofs, loc)

    K = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(dofmap.ndof, dofmap.ndof),
    )
    return K.tocsr()


# ----------------------------------------------------------------------
# load vector
# ----------------------------------------------------------------------


def assemble_load(
    disc: Discretization,
    params: SchemeParams,
    f_plus=None,
    f_minus=None,
    j_dirichlet=None,
    j_neumann=None,
    g_dirichlet=None,
) -> np.ndarray:
    """L_f(psi_i) - a_h(Phi_h, psi_i) for the global basis.

    The enrichment shift touches only cut elements and their edge
    neighbours; it vanishes when all jump data is zero.  g_dirichlet is
    the boundary trace used by the weak (one-sided) boundary terms on
    boundary edges of cut elements; None means a homogeneous trace.
    """
    mesh, cls, dofmap = disc.mesh, disc.cls, disc.dofmap
    bp, bm = disc.beta
    qd = params.quad_degree or disc.quad_degree
    F = np.zeros(dofmap.ndof)

    # source term over uncut elements (vectorized per orientation/side)
    if f_plus is not None or f_minus is not None:
        for orient in (0, 1):
            sel = [
                t
                for t in range(len(mesh.triangles))
                if t % 2 == orient and cls.tri_class[t] != INTERFACE
            ]
            if not sel:
                continue
            ref, off0 = disc.basis_for(sel[0])
            rule = quadrature.triangle_rule_on(
                mesh.tri_vertices(sel[0]) - mesh.tri_vertices(sel[0])[0], qd
            )
            Z = ref.eval(rule.points)
            offs = np.array([mesh.vertices[mesh.triangles[t][0]] for t in sel])
            pts = offs[:, None, :] + rule.points[None, :, :]
            flat = pts.reshape(-1, 2)
            fvals = np.zeros(len(flat))
            sides = np.array([cls.tri_class[t] for t in sel])
            mask_plus = np.repeat(sides == PLUS, len(rule.points))
            if f_plus is not None and mask_plus.any():
                fvals[mask_plus] = np.asarray(f_plus(flat[mask_plus]), float)
            if f_minus is not None and (~mask_plus).any():
                fvals[~mask_plus] = np.asarray(f_minus(flat[~mask_plus]), float)
            contrib = np.einsum(
                "kq,qi->ki", fvals.reshape(len(sel), -1) * rule.weights, Z
            )
            np.add.at(F, dofmap.cell_dofs[sel], contrib)

        for t, block in disc.blocks.items():
            cut = block.cut_unit
            dofs = dofmap.cell_dofs[t]
            if f_plus is not None:
                Zp = block.basis.eval(cut.plus.points)
                F[dofs] += Zp.T @ (
                    cut.plus.weights * np.asarray(f_plus(cut.plus.points), float)
                )
            if f_minus is not None:
                Zm = block.basis.eval(cut.minus.points) @ block.C
                F[dofs] += Zm.T @ (
                    cut.minus.weights * np.asarray(f_minus(cut.minus.points), float)
                )

    # interface data terms and the enrichment shift on cut elements
    wp_avg, wm_avg = params.iface_weights(disc.beta)
    for t, block in disc.blocks.items():
        cut = block.cut_unit
        dofs = dofmap.cell_dofs[t]
        arc = cut.interface
        n_iface = -arc.normals
        w = arc.weights
        Z = block.basis.eval(arc.points)
        Gn = np.einsum("qjd,qd->qj", block.basis.grad(arc.points), n_iface)
        Zminus = Z @ block.C
        jump = Zminus - Z
        # value average of the flux-jump data term: swapped weights
        avg_val = wm_avg * Z + wp_avg * Zminus
        avg_flux = wp_avg * bp * Gn + wm_avg * bm * (Gn @ block.C)
        pen = params.sigma1 * params.gamma / block.h_T**params.theta
        if j_neumann is not None:
            jn = np.asarray(j_neumann(arc.points), float)
            F[dofs] += avg_val.T @ (w * jn)
        if j_dirichlet is not None:
            jd = np.asarray(j_dirichlet(arc.points), float)
            F[dofs] += params.eps1 * (avg_flux.T @ (w * jd))
            if params.interface_penalties:
                F[dofs] += pen * (jump.T @ (w * jd))
        if block.has_enrichment:
            # volumetric part of a_h(Phi_h, .): the enrichment lives on
            # the minus piece only
            mw = cut.minus.weights
            Gm = block.basis.grad(cut.minus.points)
            gphi = np.einsum("qjd,j->qd", Gm, block.enrich)
            test_g = np.einsum("qjd,ji->qid", Gm, block.C)
            F[dofs] -= bm * np.einsum("q,qid,qd->i", mw, test_g, gphi)
            if params.interface_penalties:
                phi_v = Z @ block.enrich  # trace of the minus piece on the arc
                phi_gn = Gn @ block.enrich
                s_jump = phi_v  # [Phi] = Phi_minus - 0
                s_avg = wm_avg * bm * phi_gn
                F[dofs] -= (
                    -(jump.T @ (w * s_avg))
                    + params.eps1 * (avg_flux.T @ (w * s_jump))
                    + pen * (jump.T @ (w * s_jump))
                )

    # edge terms: weak boundary data on one-sided edges, and the
    # enrichment shift through the interior-penalty terms
    any_enrich = any(b.has_enrichment for b in disc.blocks.values())
    for e in np.flatnonzero(cls.interface_edges):
        tris = mesh.edge_tris[e]
        va, vb = mesh.vertices[mesh.edges[e]]
        one_sided = len(tris) == 1
        if not one_sided and not any_enrich:
            continue
        rule = quadrature.split_edge_rule(va, vb, disc.ls, qd)
        X, w = rule.points, rule.weights
        beta_x = _beta_at(disc, X)
        length = np.linalg.norm(vb - va)
        pen = params.sigma0 * params.gamma / length**params.theta
        if one_sided:
            (t1,) = tris
            n_e = _boundary_normal(mesh, e, t1)
            jump, G1 = element_rows(disc, t1, X)
            avg = beta_x[:, None] * np.einsum("qjd,d->qj", G1, n_e)
            dofs = dofmap.cell_dofs[t1]
            if g_dirichlet is not None:
                gv = np.asarray(g_dirichlet(X), float)
                F[dofs] += params.eps0 * (avg.T @ (w * gv)) + pen * (
                    jump.T @ (w * gv)
                )
            v1, g1 = enrichment_at(disc, t1, X)
            s_jump = v1
            s_avg = beta_x * (g1 @ n_e)
        else:
            t1, t2 = tris
            v1, g1 = enrichment_at(disc, t1, X)
            v2, g2 = enrichment_at(disc, t2, X)
            if not (np.any(v1) or np.any(v2) or np.any(g1) or np.any(g2)):
                continue
            n_e = _edge_normal(mesh, e, t1, t2)
            Z1, G1 = element_rows(disc, t1, X)
            Z2, G2 = element_rows(disc, t2, X)
            gn1 = np.einsum("qjd,d->qj", G1, n_e)
            gn2 = np.einsum("qjd,d->qj", G2, n_e)
            jump = np.hstack([Z1, -Z2])
            avg = 0.5 * beta_x[:, None] * np.hstack([gn1, gn2])
            dofs = np.concatenate([dofmap.cell_dofs[t1], dofmap.cell_dofs[t2]])
            s_jump = v1 - v2
            s_avg = 0.5 * beta_x * ((g1 + g2) @ n_e)
        if np.any(s_jump) or np.any(s_avg):
            contrib = (
                -(jump.T @ (w * s_avg))
                + params.eps0 * (avg.T @ (w * s_jump))
                + pen * (jump.T @ (w * s_jump))
            )
            np.add.at(F, dofs, -contrib)
    return F


# ----------------------------------------------------------------------
# Dirichlet boundary
# ----------------------------------------------------------------------


@dataclass
class ConstrainedSystem:
    K: sp.csr_matrix
    F: np.ndarray
    interior: np.ndarray
    boundary: np.ndarray
    boundary_values: np.ndarray
    ndof: int

    def expand(self, u_interior) -> np.ndarray:
        u = np.empty(self.ndof)
        u[self.interior] = u_interior
        u[self.boundary] = self.boundary_values
        return u

    def restrict(self, u_full) -> np.ndarray:
        return np.asarray(u_full, float)[self.interior]


def apply_dirichlet(K, F, disc: Discretization, g=None) -> ConstrainedSystem:
    """Strong nodal elimination of boundary values.

    g is a vectorized trace callable (None means homogeneous).  Nodes
    owned by cut elements are left free: their boundary condition is
    imposed weakly by the one-sided edge terms of the assembly, since
    the nodal coefficients of a cut element parametrize only its
    plus-side polynomial.
    """
    dofmap = disc.dofmap
    bd = dofmap.boundary_dofs
    if disc.blocks:
        cut_dofs = np.unique(
            dofmap.cell_dofs[list(disc.blocks.keys())].ravel()
        )
        bd = np.setdiff1d(bd, cut_dofs)
    interior = np.setdiff1d(np.arange(dofmap.ndof), bd)
    if g is None:
        gv = np.zeros(len(bd))
    else:
        gv = np.asarray(g(dofmap.dof_nodes[bd]), float)
    K = K.tocsc()
    F_int = F[interior] - K[:, bd][interior, :] @ gv
    K_int = K[:, interior][interior, :].tocsr()
    return ConstrainedSystem(
        K=K_int,
        F=F_int,
        interior=interior,
        boundary=bd,
        boundary_values=gv,
        ndof=dofmap.ndof,
    )


# ----------------------------------------------------------------------
# scalar bilinear form (independent accumulation path, used by tests)
# ----------------------------------------------------------------------


def bilinear_value(disc: Discretization, params: SchemeParams, u_vec, v_vec):
    """a_h(u, v) evaluated directly by quadrature from the definition.

    Accumulates scalars element by element and edge by edge instead of
    assembling outer products, so it cross-checks the matrix path.
    """
    mesh, cls, dofmap = disc.mesh, disc.cls, disc.dofmap
    bp, bm = disc.beta
    qd = params.quad_degree or disc.quad_degree
    u_vec = np.asarray(u_vec, float)
    v_vec = np.asarray(v_vec, float)
    total = 0.0
    for t in range(len(mesh.triangles)):
        du = u_vec[dofmap.cell_dofs[t]]
        dv = v_vec[dofmap.cell_dofs[t]]
        if cls.tri_class[t] == INTERFACE:
            cut = disc.blocks[t].cut_unit
            for rule, coef in ((cut.plus, bp), (cut.minus, bm)):
                _, G = element_rows(disc, t, rule.points)
                gu = np.einsum("qjd,j->qd", G, du)
                gv_ = np.einsum("qjd,j->qd", G, dv)
                total += coef * np.einsum("q,qd,qd->", rule.weights, gu, gv_)
        else:
            coef = bp if cls.tri_class[t] == PLUS else bm
            rule = quadrature.triangle_rule_on(mesh.tri_vertices(t), qd)
            _, G = element_rows(disc, t, rule.points)
            gu = np.einsum("qjd,j->qd", G, du)
            gv_ = np.einsum("qjd,j->qd", G, dv)
            total += coef * np.einsum("q,qd,qd->", rule.weights, gu, gv_)

    def traces(t, X, n_dir, coef_vec):
        Z, G = element_rows(disc, t, X)
        d_u = u_vec[dofmap.cell_dofs[t]]
        d_v = v_vec[dofmap.cell_dofs[t]]
        return (
            Z @ d_u,
            Z @ d_v,
            coef_vec * np.einsum("qjd,j,d->q", G, d_u, n_dir),
            coef_vec * np.einsum("qjd,j,d->q", G, d_v, n_dir),
        )

    for e in np.flatnonzero(cls.interface_edges):
        tris = mesh.edge_tris[e]
        va, vb = mesh.vertices[mesh.edges[e]]
        rule = quadrature.split_edge_rule(va, vb, disc.ls, qd)
        bx = _beta_at(disc, rule.points)
        length = np.linalg.norm(vb - va)
        pen = params.sigma0 * params.gamma / length**params.theta
        w = rule.weights
        if len(tris) == 2:
            t1, t2 = tris
            n_e = _edge_normal(mesh, e, t1, t2)
            u1, v1, fu1, fv1 = traces(t1, rule.points, n_e, bx)
            u2, v2, fu2, fv2 = traces(t2, rule.points, n_e, bx)
            ju, jv = u1 - u2, v1 - v2
            au, av = 0.5 * (fu1 + fu2), 0.5 * (fv1 + fv2)
        else:
            (t1,) = tris
            n_e = _boundary_normal(mesh, e, t1)
            ju, jv, au, av = traces(t1, rule.points, n_e, bx)
        total += w @ (-au * jv + params.eps0 * av * ju + pen * ju * jv)

    if params.interface_penalties:
        wp_avg, wm_avg = params.iface_weights(disc.beta)
        for t, block in disc.blocks.items():
            arc = block.cut_unit.interface
            n_iface = -arc.normals
            Z = block.basis.eval(arc.points)
            G = block.basis.grad(arc.points)
            du = u_vec[dofmap.cell_dofs[t]]
            dv = v_vec[dofmap.cell_dofs[t]]

            def side_vals(dcoef):
                plus_v = Z @ dcoef
                minus_v = Z @ (block.C @ dcoef)
                plus_f = bp * np.einsum("qjd,j,qd->q", G, dcoef, n_iface)
                minus_f = bm * np.einsum(
                    "qjd,j,qd->q", G, block.C @ dcoef, n_iface
                )
                return plus_v, minus_v, plus_f, minus_f

            pu, mu, fu_p, fu_m = side_vals(du)
            pv, mv, fv_p, fv_m = side_vals(dv)
            ju, jv = mu - pu, mv - pv
            au = wp_avg * fu_p + wm_avg * fu_m
            av = wp_avg * fv_p + wm_avg * fv_m
            pen = params.sigma1 * params.gamma / block.h_T**params.theta
            w = arc.weights
            total += w @ (-au * jv + params.eps1 * av * ju + pen * ju * jv)
    return float(total)


# ----------------------------------------------------------------------
# exchange formats
# ----------------------------------------------------------------------


def export_matrix(K, path):
    """MatrixMarket coordinate format (text, 1-indexed)."""
    from scipy.io import mmwrite

    mmwrite(str(path), sp.coo_matrix(K))


def read_matrix(path) -> sp.csr_matrix:
    from scipy.io import mmread

    return sp.csr_matrix(mmread(str(path)))


def export_vector(F, path):
    np.savetxt(str(path), np.asarray(F, float))


def read_vector(path) -> np.ndarray:
    return np.loadtxt(str(path))
