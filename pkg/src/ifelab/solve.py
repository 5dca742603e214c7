"""Linear solves, spectral condition numbers, round-off indicator.

The production direct path is a banded Cholesky factorization after
reverse Cuthill-McKee reordering (the uniform-mesh systems have small
bandwidth).  Dense Cholesky and Gaussian elimination with and without
pivoting are provided at desk scale for the round-off accumulation
study.  Extreme eigenvalues come from a dense symmetric solve for small
systems and Lanczos (plain for the largest, shift-inverted for the
smallest) beyond that.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.csgraph import reverse_cuthill_mckee
from scipy.sparse.linalg import ArpackNoConvergence, eigsh, splu

from ifelab.errors import (
    EstimationFailureError,
    NotSPDError,
    ScalingError,
    UndefinedIndicatorError,
)

DENSE_EIG_CUTOFF = 2000


@dataclass
class SolveReport:
    u: np.ndarray
    method: str
    residual: float
    iterations: int = None

    def as_json(self) -> dict:
        return {
            "method": self.method,
            "residual": self.residual,
            "iterations": self.iterations,
            "ndof": int(len(self.u)),
        }


@dataclass
class ConditionReport:
    mu_max: float
    mu_min: float
    method: str

    @property
    def kappa(self) -> float:
        return self.mu_max / self.mu_min

    def as_json(self) -> dict:
        return {
            "mu_max": self.mu_max,
            "mu_min": self.mu_min,
            "kappa": self.kappa,
            "method": self.method,
        }


def _relative_residual(K, u, F) -> float:
    nf = np.linalg.norm(F)
    r = np.linalg.norm(K @ u - F)
    return r / nf if nf > 0 else r


def _banded_upper(K: sp.csr_matrix, perm=None):
    """(ab, bandwidth, perm): upper-banded storage of the permuted matrix."""
    K = sp.csr_matrix(K)
    if perm is None:
        perm = reverse_cuthill_mckee(K, symmetric_mode=True)
    Kp = K[perm, :][:, perm].tocoo()
    bw = int(np.abs(Kp.row - Kp.col).max()) if Kp.nnz else 0
    n = K.shape[0]
    ab = np.zeros((bw + 1, n))
    mask = Kp.row <= Kp.col
    ab[bw + Kp.row[mask] - Kp.col[mask], Kp.col[mask]] = Kp.data[mask]
    return ab, bw, np.asarray(perm)


def solve_direct(K, F, allow_indefinite: bool = False) -> SolveReport:
    """Sparse direct solve: banded Cholesky after RCM reordering.

    With allow_indefinite the fallback is a sparse LU (used by the
    diagnostic mode without interface penalties, whose matrix need not
    be SPD); otherwise a breakdown raises NotSPDError with the pivot.
    """
    F = np.asarray(F, float)
    K = sp.csr_matrix(K)
    try:
        ab, bw, perm = _banded_upper(K)
        up = sla.solveh_banded(ab, F[perm], lower=False)
        u = np.empty_like(up)
        u[perm] = up
        method = "cholesky-banded"
    except np.linalg.LinAlgError as exc:
        if not allow_indefinite:
            raise NotSPDError(str(exc), pivot=_pivot_of(exc)) from exc
        u = splu(K.tocsc()).solve(F)
        method = "splu"
    return SolveReport(u=u, method=method, residual=_relative_residual(K, u, F))


def _pivot_of(exc) -> int:
    import re

    m = re.search(r"(\d+)", str(exc))
    return int(m.group(1)) if m else None


def dense_cholesky_solve(K, F) -> SolveReport:
    A = _dense(K)
    try:
        c = sla.cho_factor(A, lower=False)
    except np.linalg.LinAlgError as exc:
        raise NotSPDError(str(exc), pivot=_pivot_of(exc)) from exc
    u = sla.cho_solve(c, np.asarray(F, float))
    return SolveReport(u=u, method="cholesky-dense", residual=_relative_residual(K, u, F))


def dense_ge_pivot_solve(K, F) -> SolveReport:
    A = _dense(K)
    lu, piv = sla.lu_factor(A)
    u = sla.lu_solve((lu, piv), np.asarray(F, float))
    return SolveReport(u=u, method="ge-pivot", residual=_relative_residual(K, u, F))


def dense_ge_nopivot_solve(K, F) -> SolveReport:
    """Gaussian elimination without pivoting (the fragile variant of the
    round-off study)."""
    A = _dense(K).copy()
    b = np.asarray(F, float).copy()
    n = len(b)
    for k in range(n - 1):
        piv = A[k, k]
        if piv == 0.0:
            raise NotSPDError("zero pivot in unpivoted elimination", pivot=k)
        m = A[k + 1 :, k] / piv
        A[k + 1 :, k:] -= np.outer(m, A[k, k:])
        b[k + 1 :] -= m * b[k]
    u = sla.solve_triangular(A, b, lower=False)
    return SolveReport(u=u, method="ge-nopivot", residual=_relative_residual(K, u, F))


def _dense(K) -> np.ndarray:
    return K.toarray() if sp.issparse(K) else np.asarray(K, float)


def extreme_eigs(K, seed: int = 0, dense_cutoff: int = DENSE_EIG_CUTOFF):
    """Largest and smallest eigenvalue of a symmetric (SPD) matrix.

    Dense up to `dense_cutoff` unknowns; Lanczos beyond, with the
    smallest eigenvalue obtained in shift-invert mode through a sparse
    factorization.  The start vector is seeded for reproducibility.
    """
    K = sp.csr_matrix(K)
    n = K.shape[0]
    if n <= dense_cutoff:
        mu = np.linalg.eigvalsh(_dense(K))
        return float(mu[-1]), float(mu[0])
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(n)
    try:
        hi = eigsh(
            K, k=1, which="LA", v0=v0, tol=1e-9, maxiter=5000,
            return_eigenvectors=False,
        )
        lo = eigsh(
            K, k=1, sigma=0.0, which="LM", v0=v0, tol=1e-9, maxiter=5000,
            return_eigenvectors=False,
        )
    except ArpackNoConvergence as exc:
        best = exc.eigenvalues if exc.eigenvalues is not None else []
        raise EstimationFailureError(
            f"Lanczos did not converge: {exc}", best_bounds=list(map(float, best))
        ) from exc
    return float(hi[0]), float(lo[0])


def condition_number(K, seed: int = 0, dense_cutoff: int = DENSE_EIG_CUTOFF):
    mu_max, mu_min = extreme_eigs(K, seed=seed, dense_cutoff=dense_cutoff)
    n = K.shape[0]
    method = "dense" if n <= dense_cutoff else "lanczos"
    return ConditionReport(mu_max=mu_max, mu_min=mu_min, method=method)


def scaled_condition(K, seed: int = 0, dense_cutoff: int = DENSE_EIG_CUTOFF):
    """Condition number of D^-1/2 K D^-1/2 with D = diag(K)."""
    K = sp.csr_matrix(K)
    d = K.diagonal()
    if np.any(d <= 0.0):
        raise ScalingError("diagonal scaling requires positive diagonal entries")
    S = sp.diags(1.0 / np.sqrt(d))
    Ks = (S @ K @ S).tocsr()
    rep = condition_number(Ks, seed=seed, dense_cutoff=dense_cutoff)
    return ConditionReport(
        mu_max=rep.mu_max, mu_min=rep.mu_min, method="scaled-" + rep.method
    )


def roundoff_eta(u_exact, u_computed) -> float:
    """Relative l2 distance between the exact and computed coefficient
    vectors of the same linear system."""
    u_exact = np.asarray(u_exact, float)
    u_computed = np.asarray(u_computed, float)
    nrm = np.linalg.norm(u_exact)
    if nrm == 0.0:
        raise UndefinedIndicatorError("reference solution has zero norm")
    return float(np.linalg.norm(u_computed - u_exact) / nrm)


def cg_solve(K, F, tol: float = 1e-10, maxiter: int = None) -> SolveReport:
    """Diagonally preconditioned conjugate gradients (sanity runs only)."""
    from scipy.sparse.linalg import cg

    K = sp.csr_matrix(K)
    d = K.diagonal()
    M = sp.diags(1.0 / d)
    iters = [0]

    def cb(_):
        iters[0] += 1

    u, info = cg(K, F, rtol=tol, maxiter=maxiter, M=M, callback=cb)
    if info != 0:
        raise EstimationFailureError(f"cg did not converge (info = {info})")
    return SolveReport(
        u=u,
        method="cg-jacobi",
        residual=_relative_residual(K, u, F),
        iterations=iters[0],
    )
