"""Per-element construction of immersed FE shape functions.

On each cut element T the degree-p space on the plus side is extended to
the minus side by a discrete Cauchy extension: the extension v of z
minimizes

    || lap v - rho lap z ||^2 on the minus part of the scaled element
    + h^-3 || v - z ||^2 + h^-1 || dn v - rho dn z ||^2 on the interface,

with rho = beta_plus / beta_minus <= 1.  The minimizer solves
A_T alpha_minus = B_T alpha_plus with the two SPD Gram matrices assembled
here.  Nonhomogeneous jump data enters through three extra right-hand
sides solved against the same Cholesky factor; their solutions form the
element's enrichment function (zero on the plus side).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from ifelab import geometry, quadrature
from ifelab.errors import InvalidConfigError, LocalDegeneracyError
from ifelab.polybasis import PolyBasis, l2_project
from ifelab.quadrature import CutRegionQuad


def check_beta(beta) -> tuple:
    """Coefficients come as (beta_plus, beta_minus) with
    beta_minus >= beta_plus > 0.

    The side labels are tied to the level-set sign convention and to
    which side carries the plain polynomial, so the pair is rejected
    rather than silently swapped; callers flip the level set instead.
    """
    bp, bm = float(beta[0]), float(beta[1])
    if not (0.0 < bp <= bm):
        raise InvalidConfigError(
            f"expected 0 < beta_plus <= beta_minus, got ({bp}, {bm}); "
            "flip the level-set orientation to relabel the sides"
        )
    return bp, bm


@dataclass
class InterfaceData:
    """Interface jump data and the two source-term pieces.

    All entries are vectorized callables of (npts, 2) arrays; None means
    identically zero (respectively: no source discontinuity).
    """

    j_dirichlet: callable = None
    j_neumann: callable = None
    f_plus: callable = None
    f_minus: callable = None

    @property
    def trivial(self):
        return (
            self.j_dirichlet is None
            and self.j_neumann is None
            and self.f_plus is None
            and self.f_minus is None
        )


@dataclass
class LocalIfeBlock:
    element_id: int
    lam: float
    p: int
    beta: tuple
    basis: PolyBasis
    h_T: float
    fict: geometry.FictitiousElement
    cut_lam: CutRegionQuad  # rules on the scaled element
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray  # column j: coefficients of the extension of zeta_j
    alpha_D: np.ndarray
    alpha_N: np.ndarray
    alpha_f: np.ndarray
    kappa_A: float
    cut_unit: CutRegionQuad = None  # rules on T itself (lam = 1)
    objectives: dict = field(default_factory=dict)

    @property
    def enrich(self) -> np.ndarray:
        """Coefficients of the enrichment piece on the minus side."""
        return self.alpha_D + self.alpha_N + self.alpha_f

    @property
    def has_enrichment(self) -> bool:
        return bool(np.any(self.enrich))


def _interface_arrays(basis: PolyBasis, cut: CutRegionQuad):
    """Values, jump-oriented normal derivatives, and Laplacians on the
    cut rules; the jump normal points from the minus into the plus side."""
    arc = cut.interface
    n_jump = -arc.normals
    Z = basis.eval(arc.points)
    Gn = np.einsum("qjd,qd->qj", basis.grad(arc.points), n_jump)
    L = basis.laplacian(cut.minus.points)
    return Z, Gn, L


def assemble_local(basis: PolyBasis, cut: CutRegionQuad, h_T: float, beta):
    """Gram matrices of the extension forms; both are SPD.

    The unweighted form carries weights (1, h^-3, h^-1) on the Laplacian,
    trace, and normal-derivative terms; the weighted form multiplies the
    first and third by rho = beta_plus / beta_minus.
    """
    bp, bm = check_beta(beta)
    rho = bp / bm
    Z, Gn, L = _interface_arrays(basis, cut)
    wa = cut.interface.weights
    wm = cut.minus.weights
    vol = L.T @ (wm[:, None] * L)
    mass = Z.T @ (wa[:, None] * Z)
    flux = Gn.T @ (wa[:, None] * Gn)
    A = vol + mass / h_T**3 + flux / h_T
    B = rho * vol + mass / h_T**3 + rho * flux / h_T
    return A, B


def _factor(A, context=""):
    try:
        return cho_factor(A)
    except np.linalg.LinAlgError as exc:
        raise LocalDegeneracyError(
            f"local system lost positive definiteness{context}: {exc}"
        ) from exc


def cauchy_matrix(A, B, chol=None) -> np.ndarray:
    """C = A^-1 B column by column; C maps plus-side coefficients to the
    coefficients of their extension."""
    if chol is None:
        chol = _factor(A)
    return cho_solve(chol, B)


def enrichment_rhs(
    basis: PolyBasis,
    cut: CutRegionQuad,
    h_T: float,
    beta,
    p: int,
    data: InterfaceData,
):
    """Right-hand sides for the three enrichment solves.

    The source-jump vector uses the volumetric pairing with the basis
    Laplacians over the minus part of the scaled element; it is zero for
    p = 1 (degree p - 2 projections do not exist) even when the source
    jumps, which the convergence theory tolerates at that order.
    """
    bp, bm = check_beta(beta)
    n = basis.n
    Z, Gn, L = _interface_arrays(basis, cut)
    wa = cut.interface.weights
    arc_pts = cut.interface.points
    b_D = np.zeros(n)
    b_N = np.zeros(n)
    b_f = np.zeros(n)
    if data.j_dirichlet is not None:
        b_D = Z.T @ (wa * np.asarray(data.j_dirichlet(arc_pts), float)) / h_T**3
    if data.j_neumann is not None:
        b_N = Gn.T @ (wa * np.asarray(data.j_neumann(arc_pts), float)) / (h_T * bm)
    if p >= 2 and (data.f_plus is not None or data.f_minus is not None):
        zero = lambda X: np.zeros(len(X))
        pp = l2_project(data.f_plus or zero, cut.plus, basis.frame, p - 2)
        pm = l2_project(data.f_minus or zero, cut.minus, basis.frame, p - 2)
        phi_f = (pp - pm).scaled(1.0 / bm)
        b_f = L.T @ (cut.minus.weights * phi_f.eval(cut.minus.points))
    return b_D, b_N, b_f


def enrichment_solve(chol, b_D, b_N, b_f):
    return (
        cho_solve(chol, b_D),
        cho_solve(chol, b_N),
        cho_solve(chol, b_f),
    )


def local_condition(A) -> float:
    """Spectral condition number by dense symmetric eigendecomposition.

    Returns inf when the smallest eigenvalue is not positive in floating
    point (extreme small-cut systems on unscaled elements get there).
    """
    mu = np.linalg.eigvalsh(A)
    if mu[0] <= 0.0:
        return float("inf")
    return float(mu[-1] / mu[0])


def local_matrix(verts, ls, lam: float, p: int, quad_degree: int = None):
    """Assemble the unweighted local matrix only (no factorization).

    Conditioning studies need kappa(A_T) even where the factorization
    would break down; A_T does not depend on the coefficient pair.
    """
    qd = quad_degree if quad_degree is not None else 2 * p + 2
    fict = geometry.fictitious(verts, lam, ls, domain=None)
    basis = PolyBasis(np.asarray(verts, float), p)
    cut = quadrature.cut_rules(fict.vertices, ls, qd, cut=fict.cut)
    A, _ = assemble_local(basis, cut, basis.h_T, (1.0, 1.0))
    return A


def cauchy_objective(
    basis: PolyBasis,
    cut: CutRegionQuad,
    h_T: float,
    rho: float,
    z_coef,
    v_coef,
    j_dirichlet=None,
    j_neumann_over_bm=None,
    phi_f_vals=None,
):
    """Value of the least-squares functional at a candidate extension.

    Zero (up to round-off) certifies that the Cauchy problem was solved
    exactly, which happens for every polynomial datum across a linear
    interface.
    """
    Z, Gn, L = _interface_arrays(basis, cut)
    wa = cut.interface.weights
    wm = cut.minus.weights
    z = np.asarray(z_coef, float)
    v = np.asarray(v_coef, float)
    r1 = L @ v - rho * (L @ z)
    if phi_f_vals is not None:
        r1 = r1 - phi_f_vals
    r2 = Z @ (v - z)
    if j_dirichlet is not None:
        r2 = r2 - j_dirichlet(cut.interface.points)
    r3 = Gn @ v - rho * (Gn @ z)
    if j_neumann_over_bm is not None:
        r3 = r3 - j_neumann_over_bm(cut.interface.points)
    return float(
        wm @ r1**2 + (wa @ r2**2) / h_T**3 + (wa @ r3**2) / h_T
    )


def build_block(
    verts,
    ls,
    lam: float,
    p: int,
    beta,
    data: InterfaceData = None,
    quad_degree: int = None,
    element_id: int = -1,
    unit_cut: geometry.CutInfo = None,
    with_unit_cut: bool = True,
    domain=((-1.0, 1.0), (-1.0, 1.0)),
    with_objectives: bool = False,
) -> LocalIfeBlock:
    """Assemble and solve all local systems of one interface element."""
    check_beta(beta)
    if data is None:
        data = InterfaceData()
    qd = quad_degree if quad_degree is not None else 2 * p + 2
    fict = geometry.fictitious(verts, lam, ls, parent_id=element_id, domain=domain)
    basis = PolyBasis(np.asarray(verts, float), p)
    h_T = basis.h_T
    cut_lam = quadrature.cut_rules(fict.vertices, ls, qd, cut=fict.cut)
    A, B = assemble_local(basis, cut_lam, h_T, beta)
    chol = _factor(
        A,
        context=(
            f" (element {element_id}, lambda = {lam}, "
            f"cut points {fict.cut.points.tolist()})"
        ),
    )
    C = cauchy_matrix(A, B, chol=chol)
    b_D, b_N, b_f = enrichment_rhs(basis, cut_lam, h_T, beta, p, data)
    alpha_D, alpha_N, alpha_f = enrichment_solve(chol, b_D, b_N, b_f)
    cut_unit = None
    if with_unit_cut:
        if lam == 1.0:
            cut_unit = cut_lam
        else:
            cut_unit = quadrature.cut_rules(
                np.asarray(verts, float), ls, qd, cut=unit_cut
            )
    block = LocalIfeBlock(
        element_id=element_id,
        lam=lam,
        p=p,
        beta=(float(beta[0]), float(beta[1])),
        basis=basis,
        h_T=h_T,
        fict=fict,
        cut_lam=cut_lam,
        A=A,
        B=B,
        C=C,
        alpha_D=alpha_D,
        alpha_N=alpha_N,
        alpha_f=alpha_f,
        kappa_A=local_condition(A),
        cut_unit=cut_unit,
    )
    if with_objectives:
        rho = block.beta[0] / block.beta[1]
        obj1 = max(
            cauchy_objective(basis, cut_lam, h_T, rho, np.eye(basis.n)[j], C[:, j])
            for j in range(basis.n)
        )
        block.objectives["min_basic"] = obj1
        if data.j_dirichlet is not None:
            block.objectives["min_dirichlet"] = cauchy_objective(
                basis, cut_lam, h_T, rho, 0 * alpha_D, alpha_D,
                j_dirichlet=data.j_dirichlet,
            )
        if data.j_neumann is not None:
            bm = block.beta[1]
            block.objectives["min_neumann"] = cauchy_objective(
                basis, cut_lam, h_T, rho, 0 * alpha_N, alpha_N,
                j_neumann_over_bm=lambda X: np.asarray(data.j_neumann(X)) / bm,
            )
        if p >= 2 and (data.f_plus is not None or data.f_minus is not None):
            zero = lambda X: np.zeros(len(X))
            pp = l2_project(data.f_plus or zero, cut_lam.plus, basis.frame, p - 2)
            pm = l2_project(data.f_minus or zero, cut_lam.minus, basis.frame, p - 2)
            bm = block.beta[1]
            phif = (pp - pm).scaled(1.0 / bm)
            block.objectives["min_source"] = cauchy_objective(
                basis, cut_lam, h_T, rho, 0 * alpha_f, alpha_f,
                phi_f_vals=phif.eval(cut_lam.minus.points),
            )
    return block


def blocks_csv(blocks, path):
    """Per-element diagnostics: conditioning and objective residuals."""
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["element", "lambda", "kappa_A", "obj_basic", "obj_D", "obj_N", "obj_f"]
        )
        for b in blocks:
            w.writerow(
                [
                    b.element_id,
                    b.lam,
                    f"{b.kappa_A:.6e}",
                    _fmt(b.objectives.get("min_basic")),
                    _fmt(b.objectives.get("min_dirichlet")),
                    _fmt(b.objectives.get("min_neumann")),
                    _fmt(b.objectives.get("min_source")),
                ]
            )


def _fmt(x):
    return "" if x is None else f"{x:.6e}"
