import numpy as np
import pytest

from ifelab.assembly import (
    SchemeParams,
    apply_dirichlet,
    assemble,
    assemble_load,
    bilinear_value,
    build_dofs,
    default_params,
    discretize,
    export_matrix,
    export_vector,
    read_matrix,
    read_vector,
)
from ifelab.geometry import Circle, Line, build_mesh, classify
from ifelab.polybasis import PolyBasis
from ifelab.problems import linear_line_problem, trig_exp_circle_problem
from ifelab.quadrature import triangle_rule_on
from ifelab.solve import solve_direct

from oracles import brute_dof_count

BIG_CIRCLE = Circle(0.0, 0.0, 10.0)  # encloses the domain: no cut elements


def _full_problem(prob, p, N, params=None):
    mesh = build_mesh(N)
    disc = discretize(mesh, prob.ls, p, prob.beta, data=prob.interface_data())
    params = params or default_params(p, prob.beta)
    K = assemble(disc, params)
    g = prob.boundary_trace()
    F = assemble_load(
        disc,
        params,
        f_plus=prob.source_plus(),
        f_minus=prob.source_minus(),
        j_dirichlet=prob.j_dirichlet(),
        j_neumann=prob.j_neumann(),
        g_dirichlet=g,
    )
    return disc, params, K, F, g


def test_dof_count_no_interface_p1():
    mesh = build_mesh(6)
    cls = classify(mesh, BIG_CIRCLE)
    dm = build_dofs(mesh, cls, 1)
    assert dm.ndof == 49  # (N + 1)^2 continuous vertices


@pytest.mark.parametrize("p", [1, 2, 3])
def test_dof_count_no_interface_matches_c0(p):
    N = 4
    mesh = build_mesh(N)
    cls = classify(mesh, BIG_CIRCLE)
    dm = build_dofs(mesh, cls, p)
    # C0 count on the uniform criss-cross mesh: vertices + p-1 nodes per
    # edge + interior nodes per triangle
    nv = (N + 1) ** 2
    ne = len(mesh.edges)
    nt = len(mesh.triangles)
    per_tri = (p - 1) * (p - 2) // 2
    assert dm.ndof == nv + (p - 1) * ne + per_tri * nt


@pytest.mark.parametrize("p", [1, 2])
def test_dof_count_against_brute_oracle(p):
    mesh = build_mesh(10)
    cls = classify(mesh, Circle(0.0, 0.0, np.pi / 4))
    dm = build_dofs(mesh, cls, p)
    assert dm.ndof == brute_dof_count(mesh, cls, p)


def test_cut_elements_own_dofs_privately():
    mesh = build_mesh(10)
    cls = classify(mesh, Circle(0.0, 0.0, np.pi / 4))
    dm = build_dofs(mesh, cls, 1)
    iface = set(map(int, cls.interface_tris))
    owned = {}
    for t in iface:
        for d in dm.cell_dofs[t]:
            assert d not in owned, "cut elements may not share dofs"
            owned[int(d)] = t
    for t in range(len(mesh.triangles)):
        if t in iface:
            continue
        assert not (set(map(int, dm.cell_dofs[t])) & set(owned))


def test_shared_edge_dofs():
    mesh = build_mesh(4)
    cls = classify(mesh, BIG_CIRCLE)
    dm = build_dofs(mesh, cls, 3)
    for e, tris in enumerate(mesh.edge_tris):
        if len(tris) != 2:
            continue
        d1 = set(map(int, dm.cell_dofs[tris[0]]))
        d2 = set(map(int, dm.cell_dofs[tris[1]]))
        assert len(d1 & d2) == 4  # p + 1 nodes on the common edge


def test_textbook_p1_stiffness():
    basis = PolyBasis([(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)], 1)
    rule = triangle_rule_on(basis.vertices, 2)
    G = basis.grad(rule.points)
    K = np.einsum("q,qid,qjd->ij", rule.weights, G, G)
    expect = np.array([[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]])
    assert np.allclose(K, expect, atol=1e-13)


def test_stiffness_symmetry():
    prob = trig_exp_circle_problem(2.0, 1.0)
    disc, params, K, F, g = _full_problem(prob, 2, 8)
    d = K - K.T
    assert np.abs(d.toarray()).max() <= 1e-11 * np.abs(K.toarray()).max()


def test_constants_in_kernel_without_boundary():
    # a_h(1, psi) = 0: the extension of the constant is the constant, so
    # all jumps vanish; rows are zero before boundary conditions.  The
    # circle is kept away from the outer ring so no weak-boundary terms
    # (which rightly see the constant) enter.
    prob = trig_exp_circle_problem(2.0, 1.0, r=0.57)
    mesh = build_mesh(8)
    disc = discretize(mesh, prob.ls, 1, prob.beta)
    K = assemble(disc, default_params(1, prob.beta))
    r = K @ np.ones(disc.dofmap.ndof)
    assert np.abs(r).max() < 1e-10 * np.abs(K.toarray()).max()


def test_load_row_sum_is_domain_area():
    mesh = build_mesh(6)
    disc = discretize(mesh, BIG_CIRCLE, 1, (1.0, 1.0))
    params = default_params(1, (1.0, 1.0))
    one = lambda X: np.ones(len(X))
    F = assemble_load(disc, params, f_plus=one, f_minus=one)
    assert F.sum() == pytest.approx(4.0, abs=1e-12)


def test_homogeneous_data_gives_zero_enrichment():
    # J_D = J_N = 0 analytically; the closures evaluate to round-off on
    # the interface points, so the enrichment is zero to solver accuracy
    prob = linear_line_problem(0.03, 1.0, 4.0)
    mesh = build_mesh(8)
    disc = discretize(mesh, prob.ls, 2, prob.beta, data=prob.interface_data())
    worst = max(np.abs(b.enrich).max() for b in disc.blocks.values())
    assert worst < 1e-10


def test_dirichlet_constant_reproduction():
    mesh = build_mesh(6)
    disc = discretize(mesh, BIG_CIRCLE, 1, (1.0, 1.0))
    params = default_params(1, (1.0, 1.0))
    K = assemble(disc, params)
    F = np.zeros(disc.dofmap.ndof)
    con = apply_dirichlet(K, F, disc, g=lambda X: np.ones(len(X)))
    rep = solve_direct(con.K, con.F)
    u = con.expand(rep.u)
    assert np.allclose(u, 1.0, atol=1e-10)


def test_dirichlet_zero_elimination():
    mesh = build_mesh(6)
    disc = discretize(mesh, BIG_CIRCLE, 1, (1.0, 1.0))
    K = assemble(disc, default_params(1, (1.0, 1.0)))
    con = apply_dirichlet(K, np.zeros(disc.dofmap.ndof), disc, g=None)
    u = con.expand(np.zeros(len(con.interior)))
    assert np.allclose(u[con.boundary], 0.0)


def test_dirichlet_boundary_values_example2():
    prob = trig_exp_circle_problem(2.0, 1.0)
    disc, params, K, F, g = _full_problem(prob, 1, 8)
    con = apply_dirichlet(K, F, disc, g=g)
    nodes = disc.dofmap.dof_nodes[con.boundary]
    # the boundary lies outside the circle, where the solution piece is
    # exp(x y) over the exterior coefficient
    expect = np.exp(nodes[:, 0] * nodes[:, 1]) / prob.beta[0]
    assert np.allclose(con.boundary_values, expect, atol=1e-14)


def test_adjoint_consistency_matrix_vs_direct_quadratured():
    prob = trig_exp_circle_problem(3.0, 1.0)
    mesh = build_mesh(6)
    disc = discretize(mesh, prob.ls, 2, prob.beta)
    params = default_params(2, prob.beta)
    K = assemble(disc, params)
    rng = np.random.default_rng(2)
    for _ in range(5):
        u = rng.standard_normal(disc.dofmap.ndof)
        v = rng.standard_normal(disc.dofmap.ndof)
        direct = bilinear_value(disc, params, u, v)
        via_matrix = float(v @ (K @ u))
        assert direct == pytest.approx(via_matrix, rel=1e-10)


def test_penalty_scaling_localized_to_cut_elements():
    prob = trig_exp_circle_problem(2.0, 1.0)
    mesh = build_mesh(8)
    disc = discretize(mesh, prob.ls, 1, prob.beta)
    p1 = default_params(1, prob.beta)
    p2 = default_params(1, prob.beta)
    p2.sigma1 = 4.0 * p1.sigma1
    D = (assemble(disc, p2) - assemble(disc, p1)).tocoo()
    cut_dofs = set()
    for t in disc.blocks:
        cut_dofs.update(map(int, disc.dofmap.cell_dofs[t]))
    mask = np.abs(D.data) > 1e-12
    assert all(int(r) in cut_dofs for r in D.row[mask])
    assert all(int(c) in cut_dofs for c in D.col[mask])


def test_galerkin_reproduction_line_interface():
    from ifelab.problems import line_poly_problem, nodal_ife_vector

    line = Line(0.0, 1.0, -1.0 / 40.0)
    zc = np.array([[0.4, -0.3], [0.8, 0.0]])
    prob = line_poly_problem(line, (1.0, 3.0), zc)
    disc, params, K, F, g = _full_problem(prob, 1, 6)
    con = apply_dirichlet(K, F, disc, g=g)
    rep = solve_direct(con.K, con.F)
    u = con.expand(rep.u)
    u_exact = nodal_ife_vector(disc.dofmap, disc.cls, prob)
    assert np.abs(u - u_exact).max() < 1e-10


def test_no_interface_penalty_mode_drops_terms():
    prob = trig_exp_circle_problem(2.0, 1.0)
    mesh = build_mesh(6)
    disc = discretize(mesh, prob.ls, 1, prob.beta)
    pa = default_params(1, prob.beta, interface_penalties=True)
    pb = default_params(1, prob.beta, interface_penalties=False)
    Ka, Kb = assemble(disc, pa), assemble(disc, pb)
    assert np.abs((Ka - Kb).toarray()).max() > 0.0
    # the diagnostic mode keeps the edge terms: the matrices differ only
    # inside cut-element blocks
    D = (Ka - Kb).tocoo()
    cut_dofs = set()
    for t in disc.blocks:
        cut_dofs.update(map(int, disc.dofmap.cell_dofs[t]))
    mask = np.abs(D.data) > 1e-12
    assert all(int(r) in cut_dofs for r in D.row[mask])


def test_matrixmarket_roundtrip(tmp_path):
    prob = trig_exp_circle_problem(2.0, 1.0)
    disc, params, K, F, g = _full_problem(prob, 1, 4)
    mpath = tmp_path / "K.mtx"
    vpath = tmp_path / "F.txt"
    export_matrix(K, mpath)
    export_vector(F, vpath)
    K2 = read_matrix(mpath)
    F2 = read_vector(vpath)
    assert np.abs((K - K2).toarray()).max() < 1e-12 * np.abs(K.toarray()).max()
    assert np.allclose(F, F2, atol=1e-14)


def test_scheme_params_weights():
    params = SchemeParams(sigma0=1, sigma1=1, gamma=1, avg_mode="harmonic")
    wp, wm = params.iface_weights((1.0, 3.0))
    assert wp == pytest.approx(0.75)
    assert wm == pytest.approx(0.25)
    with pytest.raises(ValueError):
        SchemeParams(sigma0=1, sigma1=1, gamma=1, avg_mode="x").iface_weights((1, 2))


def test_default_params_gamma_modes():
    assert default_params(2, (1.0, 4.0)).gamma == pytest.approx(4.0)
    assert default_params(
        2, (1.0, 4.0), gamma_mode="paper"
    ).gamma == pytest.approx(16.0)
    assert default_params(
        2, (1.0, 4.0), gamma_mode="explicit", gamma_value=7.5
    ).gamma == pytest.approx(7.5)
    assert default_params(3, (1.0, 2.0)).sigma0 == pytest.approx(90.0)
    assert default_params(3, (1.0, 2.0)).sigma1 == pytest.approx(9.0)
