import numpy as np
import pytest

from ifelab.errors import InvalidConfigError
from ifelab.geometry import Circle, Line
from ifelab.localife import (
    InterfaceData,
    build_block,
    cauchy_objective,
    local_condition,
)
from ifelab.polybasis import space_dim
from ifelab.problems import LineFrame, STPoly, line_cauchy_extension

EX1_TRI = np.array([[0.6, 0.0], [0.8, 0.0], [0.6, 0.2]])
EX1_CIRCLE = Circle(0.0, 0.0, np.pi / 4)
# a line through the reference-style triangle, avoiding its vertices
TRI = np.array([[0.0, 0.0], [0.2, 0.0], [0.0, 0.2]])
LINE = Line(0.0, 1.0, -0.07)  # y = 0.07


def tilted_line():
    return Line(0.3, 1.0, -0.08)


def test_beta_ordering_rejected():
    with pytest.raises(InvalidConfigError):
        build_block(TRI, LINE, 1.5, 1, (2.0, 1.0))
    with pytest.raises(InvalidConfigError):
        build_block(TRI, LINE, 1.5, 1, (-1.0, 1.0))


@pytest.mark.parametrize("p", [1, 2, 3])
def test_A_symmetric_spd(p):
    block = build_block(EX1_TRI, EX1_CIRCLE, 1.5, p, (1.0, 5.0))
    A = block.A
    assert np.linalg.norm(A - A.T) <= 1e-12 * np.linalg.norm(A)
    np.linalg.cholesky(A)
    np.linalg.cholesky(block.B)


@pytest.mark.parametrize("p", [1, 2, 3])
def test_cauchy_residual(p):
    block = build_block(EX1_TRI, EX1_CIRCLE, 1.5, p, (1.0, 10.0))
    res = np.linalg.norm(block.A @ block.C - block.B)
    assert res <= 1e-10 * np.linalg.norm(block.B)


def test_equal_beta_gives_identity():
    block = build_block(EX1_TRI, EX1_CIRCLE, 1.5, 2, (3.0, 3.0))
    assert np.allclose(block.B, block.A, atol=1e-12 * np.abs(block.A).max())
    assert np.allclose(block.C, np.eye(block.basis.n), atol=1e-10)


def test_p1_laplacian_term_vanishes():
    # for p = 1 the volume term is zero; A reduces to the interface mass
    # and normal-derivative terms and stays SPD
    block = build_block(TRI, LINE, 1.5, 1, (1.0, 2.0))
    basis = block.basis
    L = basis.laplacian(block.cut_lam.minus.points)
    assert np.allclose(L, 0.0, atol=1e-13)
    np.linalg.cholesky(block.A)


def test_tangential_polynomial_fixed_line():
    # across y = c the function x is tangential: extension is x itself
    line = Line(0.0, 1.0, -0.07)
    block = build_block(TRI, line, 1.5, 2, (1.0, 7.0))
    basis = block.basis
    # coefficients of x in the nodal basis: values at nodes
    alpha = basis.nodes[:, 0].copy()
    ext = block.C @ alpha
    assert np.allclose(ext, alpha, atol=1e-10)


def test_linear_interface_normal_polynomial_scaled():
    # across y = 0.07 the extension of (y - 0.07) is rho (y - 0.07)
    line = Line(0.0, 1.0, -0.07)
    bp, bm = 2.0, 5.0
    block = build_block(TRI, line, 1.5, 2, (bp, bm))
    alpha = block.basis.nodes[:, 1] - 0.07
    ext = block.C @ alpha
    assert np.allclose(ext, (bp / bm) * alpha, atol=1e-10)


@pytest.mark.parametrize("p", [1, 2, 3])
def test_line_exactness_objective(p):
    """Across a linear interface the Cauchy problem is solved exactly:
    the least-squares objective vanishes for any polynomial datum."""
    line = tilted_line()
    rng = np.random.default_rng(7 + p)
    block = build_block(TRI, line, 1.5, p, (1.0, 4.0))
    basis = block.basis
    rho = 0.25
    for _ in range(10):
        z = rng.standard_normal(basis.n)
        z /= np.linalg.norm(z)
        v = block.C @ z
        obj = cauchy_objective(basis, block.cut_lam, block.h_T, rho, z, v)
        assert obj <= 1e-18


@pytest.mark.parametrize("p", [1, 2, 3])
def test_line_extension_matches_taylor_recursion(p):
    """The least-squares extension equals the closed-form Taylor solution."""
    line = tilted_line()
    bp, bm = 1.0, 6.0
    block = build_block(TRI, line, 1.5, p, (bp, bm))
    basis = block.basis
    frame = LineFrame.of(line)
    rng = np.random.default_rng(3)
    zc = np.triu(rng.standard_normal((p + 1, p + 1)))[:, ::-1][:, ::1]
    zc = np.flipud(np.triu(np.flipud(zc)))  # keep total degree <= p
    zpoly = STPoly(frame, zc)
    vc = line_cauchy_extension(zc, bp / bm)
    vpoly = STPoly(frame, vc)
    alpha = np.asarray(zpoly.eval(basis.nodes), float)
    ext = block.C @ alpha
    probe = rng.uniform(0.0, 0.2, size=(12, 2))
    assert np.allclose(basis.eval(probe) @ ext, vpoly.eval(probe), atol=1e-9)


def test_eigenvalue_scaling_with_h():
    """mu_min and mu_max of A scale like h^-2 for a fixed relative cut."""
    mins, maxs, hs = [], [], []
    for h in (0.2, 0.1, 0.05):
        verts = np.array([[0.0, 0.0], [h, 0.0], [0.0, h]])
        line = Line(0.0, 1.0, -0.35 * h)
        block = build_block(verts, line, 1.5, 2, (1.0, 2.0), domain=None)
        mu = np.linalg.eigvalsh(block.A)
        mins.append(mu[0])
        maxs.append(mu[-1])
        hs.append(h)
    for seq in (mins, maxs):
        r1 = seq[1] / seq[0]
        r2 = seq[2] / seq[1]
        assert 3.6 <= r1 <= 4.4
        assert 3.6 <= r2 <= 4.4


def test_spectral_bounds_wider_sweep():
    vals = []
    for h in (0.2, 0.1, 0.05, 0.025):
        verts = np.array([[0.0, 0.0], [h, 0.0], [0.0, h]])
        line = Line(0.2, 1.0, -0.4 * h)
        block = build_block(verts, line, 1.5, 2, (1.0, 3.0), domain=None)
        mu = np.linalg.eigvalsh(block.A)
        vals.append((mu[0] * h**2, mu[-1] * h**2))
    lo = [v[0] for v in vals]
    hi = [v[1] for v in vals]
    assert max(lo) / min(lo) < 1.15
    assert max(hi) / min(hi) < 1.15


def test_beta_sandwich():
    block = build_block(EX1_TRI, EX1_CIRCLE, 1.5, 2, (1.0, 50.0))
    rho = 1.0 / 50.0
    rng = np.random.default_rng(11)
    for _ in range(20):
        v = rng.standard_normal(block.basis.n)
        a = v @ block.A @ v
        b = v @ block.B @ v
        assert rho * a <= b * (1 + 1e-12)
        assert b <= a * (1 + 1e-12)


def test_contrast_stability_of_C():
    norms = []
    for bm in (1.0, 10.0, 1e4):
        block = build_block(EX1_TRI, EX1_CIRCLE, 1.5, 2, (1.0, bm))
        col = np.linalg.norm(block.C, axis=0)
        norms.append(col.max())
    assert max(norms) / min(norms) < 10.0


def test_local_condition_trivial():
    assert local_condition(np.eye(4)) == pytest.approx(1.0)
    assert local_condition(np.diag([1.0, 4.0])) == pytest.approx(4.0)


def test_example1_smallcut_conditioning_sweep():
    kappas = []
    for dr in (1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7):
        ls = Circle(0.0, 0.0, 0.8 - dr)
        block = build_block(EX1_TRI, ls, 1.5, 3, (1.0, 1.0))
        kappas.append(block.kappa_A)
    assert max(kappas) / min(kappas) < 5.0
    assert np.isfinite(kappas[-1])


def test_example1_lambda_one_blows_up():
    from ifelab.localife import local_matrix

    ls = Circle(0.0, 0.0, 0.8 - 1e-7)
    k1 = local_condition(local_matrix(EX1_TRI, ls, 1.0, 3))
    k15 = local_condition(local_matrix(EX1_TRI, ls, 1.5, 3))
    assert k1 >= 10.0 * k15


def test_enrichment_zero_data():
    data = InterfaceData()
    block = build_block(EX1_TRI, EX1_CIRCLE, 1.5, 2, (1.0, 2.0), data=data)
    assert np.allclose(block.enrich, 0.0)
    assert not block.has_enrichment


def test_enrichment_constant_dirichlet_jump():
    """A constant value jump is carried exactly by the constant 1."""
    data = InterfaceData(j_dirichlet=lambda X: np.ones(len(X)))
    block = build_block(TRI, LINE, 1.5, 2, (1.0, 3.0), data=data)
    # coefficients of the constant 1 in the nodal frame are all ones
    assert np.allclose(block.alpha_D, np.ones(block.basis.n), atol=1e-10)


def test_enrichment_constant_neumann_jump():
    """A constant flux jump c gives the ramp (c / beta_minus) n_y (y - d)."""
    c, bm = 2.0, 5.0
    delta = 0.07
    data = InterfaceData(j_neumann=lambda X: np.full(len(X), c))
    block = build_block(TRI, LINE, 1.5, 2, (1.0, bm), data=data)
    basis = block.basis
    # jump normal points from the minus (upper) into the plus (lower) side
    n_y = -1.0
    expect = (c / bm) * n_y * (basis.nodes[:, 1] - delta)
    assert np.allclose(block.alpha_N, expect, atol=1e-10)


def test_enrichment_constant_source_jump():
    """phi_f = c across y = d extends to (c/2)(y - d)^2: its Laplacian is
    c and both interface traces vanish."""
    bp, bm = 1.0, 4.0
    delta = 0.07
    cval = 3.0
    # f_plus - f_minus = c * beta_minus makes phi_f = c after projection
    data = InterfaceData(
        f_plus=lambda X: np.full(len(X), cval * bm),
        f_minus=lambda X: np.zeros(len(X)),
    )
    block = build_block(TRI, LINE, 1.5, 2, (bp, bm), data=data)
    basis = block.basis
    expect = 0.5 * cval * (basis.nodes[:, 1] - delta) ** 2
    assert np.allclose(block.alpha_f, expect, atol=1e-9)


def test_enrichment_source_ignored_for_p1():
    data = InterfaceData(
        f_plus=lambda X: np.ones(len(X)), f_minus=lambda X: np.zeros(len(X))
    )
    block = build_block(TRI, LINE, 1.5, 1, (1.0, 2.0), data=data)
    assert np.allclose(block.alpha_f, 0.0)


def test_enrichment_objective_decreases_under_refinement():
    """On a curved interface the enrichment objectives are O(h^{2(p-1)}):
    small and decreasing, not exactly zero."""
    from ifelab.geometry import build_mesh, classify
    from ifelab.problems import trig_exp_circle_problem

    prob = trig_exp_circle_problem(2.0, 1.0)
    data = prob.interface_data()
    worst, typical = [], []
    for N in (10, 20, 40):
        mesh = build_mesh(N)
        cls = classify(mesh, prob.ls)
        objs = []
        for t in cls.interface_tris:
            block = build_block(
                mesh.tri_vertices(t),
                prob.ls,
                1.5,
                2,
                prob.beta,
                data=data,
                unit_cut=cls.cuts[int(t)],
                with_unit_cut=False,
                with_objectives=True,
            )
            objs.append(block.objectives["min_dirichlet"])
        worst.append(max(objs))
        typical.append(np.median(objs))
    # O(h^2) for p = 2: a factor >= 4 over two refinements, nonzero
    assert worst[2] < worst[0] / 4.0
    assert typical[2] < typical[1] < typical[0]
    assert worst[0] > 0.0


def test_objectives_zero_for_line_interface():
    from ifelab.problems import linear_line_problem

    prob = linear_line_problem(0.07, 1.0, 3.0)
    block = build_block(
        TRI, prob.ls, 1.5, 2, prob.beta, data=prob.interface_data(),
        with_objectives=True,
    )
    assert block.objectives["min_basic"] < 1e-18


def test_blocks_csv(tmp_path):
    from ifelab.localife import blocks_csv

    block = build_block(EX1_TRI, EX1_CIRCLE, 1.5, 2, (1.0, 2.0), with_objectives=True)
    path = tmp_path / "diag.csv"
    blocks_csv([block], path)
    text = path.read_text().splitlines()
    assert text[0].startswith("element,")
    assert len(text) == 2
