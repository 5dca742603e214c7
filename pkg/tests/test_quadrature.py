import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ifelab.errors import DegenerateRegionError, InvalidConfigError
from ifelab.geometry import Circle, Line, triangle_area
from ifelab.quadrature import (
    arc_rule,
    cut_rules,
    edge_rule,
    split_edge_rule,
    triangle_rule,
    triangle_rule_on,
)

from oracles import monomial_integral_unit_triangle, subdivision_area

REF = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
EX1_TRI = np.array([[0.6, 0.0], [0.8, 0.0], [0.6, 0.2]])
EX1_CIRCLE = Circle(0.0, 0.0, np.pi / 4)


def test_centroid_rule_degree_one():
    rule = triangle_rule(1)
    assert rule.weights.sum() == pytest.approx(0.5, abs=1e-14)
    assert rule.integrate(lambda X: X[:, 0]) == pytest.approx(1.0 / 6.0, abs=1e-13)


def test_degree_two_quadratics():
    rule = triangle_rule(2)
    assert rule.integrate(lambda X: X[:, 0] ** 2) == pytest.approx(1 / 12, abs=1e-13)
    assert rule.integrate(lambda X: X[:, 0] * X[:, 1]) == pytest.approx(
        1 / 24, abs=1e-13
    )


@pytest.mark.parametrize("d", [1, 2, 4, 6, 8, 10])
def test_monomial_exactness_sweep(d):
    rule = triangle_rule(d)
    assert np.all(rule.weights > 0)
    for a in range(d + 1):
        for b in range(d + 1 - a):
            val = rule.integrate(lambda X: X[:, 0] ** a * X[:, 1] ** b)
            exact = monomial_integral_unit_triangle(a, b)
            assert val == pytest.approx(exact, rel=1e-11)


def test_degree_eight_for_p3():
    # products of two degree-3 gradients plus slack: degree 2p + 2 = 8
    rule = triangle_rule(8)
    for a, b in [(8, 0), (4, 4), (0, 8), (5, 3)]:
        exact = monomial_integral_unit_triangle(a, b)
        assert rule.integrate(
            lambda X: X[:, 0] ** a * X[:, 1] ** b
        ) == pytest.approx(exact, rel=1e-11)


def test_invalid_degree():
    with pytest.raises(InvalidConfigError):
        triangle_rule(0)


def test_mapped_rule_measures_area():
    verts = np.array([[0.2, 0.1], [0.7, 0.3], [0.25, 0.6]])
    rule = triangle_rule_on(verts, 4)
    assert rule.weights.sum() == pytest.approx(triangle_area(verts), rel=1e-13)


def test_edge_rule_length():
    rule = edge_rule((0.0, 0.0), (0.3, 0.4), 5)
    assert rule.weights.sum() == pytest.approx(0.5, abs=1e-14)


def test_edge_rule_zero_length():
    with pytest.raises(DegenerateRegionError):
        edge_rule((0.1, 0.1), (0.1, 0.1), 3)


def test_split_edge_rule_concatenates():
    ls = Line(0.0, 1.0, -0.25)
    rule = split_edge_rule((0.0, 0.0), (0.0, 1.0), ls, 4)
    assert rule.weights.sum() == pytest.approx(1.0, abs=1e-13)
    # |y - 0.25| is piecewise linear with a kink at the crossing
    val = rule.integrate(lambda X: np.abs(X[:, 1] - 0.25))
    assert val == pytest.approx(0.25**2 / 2 + 0.75**2 / 2, abs=1e-13)


def test_arc_rule_quarter_circle_length():
    rule = arc_rule(Circle(0.0, 0.0, 1.0), (1.0, 0.0), (0.0, 1.0), 6)
    assert rule.weights.sum() == pytest.approx(np.pi / 2, abs=1e-12)


def test_arc_rule_first_moment():
    rule = arc_rule(Circle(0.0, 0.0, 1.0), (1.0, 0.0), (0.0, 1.0), 8)
    assert rule.integrate(lambda X: X[:, 0]) == pytest.approx(1.0, abs=1e-11)


def test_arc_rule_line_case():
    rule = arc_rule(Line(1.0, 0.0, -0.5), (0.5, 0.0), (0.5, 1.0), 4)
    assert rule.weights.sum() == pytest.approx(1.0, abs=1e-13)
    assert np.allclose(rule.normals, [1.0, 0.0])


def test_arc_normals_unit_and_consistent():
    ls = EX1_CIRCLE
    cut = cut_rules(EX1_TRI, ls, 6)
    n = cut.interface.normals
    assert np.allclose(np.linalg.norm(n, axis=1), 1.0, atol=1e-12)
    g = ls.gradient(cut.interface.points)
    expected = g / np.linalg.norm(g, axis=1, keepdims=True)
    assert np.allclose(n, expected, atol=1e-12)


def test_cut_rules_line_polygon_exact():
    ls = Line(0.0, 1.0, -0.06)  # cuts the reference-triangle strip y < 0.06
    verts = np.array([[0.0, 0.0], [0.2, 0.0], [0.0, 0.2]])
    cut = cut_rules(verts, ls, 4)
    # plus region is the trapezoid below the line
    shoelace = 0.06 * 0.2 - 0.5 * 0.06**2
    assert cut.area_plus == pytest.approx(shoelace, abs=1e-15)
    assert cut.area_plus + cut.area_minus == pytest.approx(0.02, abs=1e-15)


def test_cut_rules_example_triangle_additivity():
    cut = cut_rules(EX1_TRI, EX1_CIRCLE, 6)
    assert cut.area_plus + cut.area_minus == pytest.approx(0.02, abs=1e-10)


def test_cut_minus_area_against_subdivision_oracle():
    cut = cut_rules(EX1_TRI, EX1_CIRCLE, 8)
    oracle = subdivision_area(EX1_TRI, EX1_CIRCLE, "-", depth=12)
    assert cut.area_minus == pytest.approx(oracle, abs=1e-8)


def test_cut_plus_area_against_subdivision_oracle():
    ls = Circle(0.0, 0.0, 0.7)
    verts = np.array([[0.6, 0.0], [0.8, 0.0], [0.6, 0.2]])
    cut = cut_rules(verts, ls, 8)
    oracle = subdivision_area(verts, ls, "+", depth=12)
    assert cut.area_plus == pytest.approx(oracle, abs=1e-8)


def test_cut_polynomial_integral_matches_split_exactness():
    # integrate a quadratic over both subregions: must add up to the
    # integral over the whole triangle (which the straight rule nails)
    ls = EX1_CIRCLE
    f = lambda X: 1.3 + X[:, 0] ** 2 - 0.4 * X[:, 0] * X[:, 1]
    cut = cut_rules(EX1_TRI, ls, 8)
    whole = triangle_rule_on(EX1_TRI, 8).integrate(f)
    assert cut.plus.integrate(f) + cut.minus.integrate(f) == pytest.approx(
        whole, rel=1e-11
    )


def test_refinement_stability_smooth_integrand():
    ls = Circle(0.0, 0.0, np.pi / 4)
    verts = np.array([[0.7, 0.3], [0.8, 0.3], [0.7, 0.4]])  # cut at h = 2/20
    f = lambda X: np.exp(X[:, 0] * X[:, 1])
    v1 = cut_rules(verts, ls, 6).minus.integrate(f)
    v2 = cut_rules(verts, ls, 8).minus.integrate(f)
    assert abs(v1 - v2) < 1e-9


def test_cut_edge_rules_split_on_cut_edges():
    cut = cut_rules(EX1_TRI, EX1_CIRCLE, 4)
    lengths = [r.weights.sum() for r in cut.edge_rules]
    assert lengths[0] == pytest.approx(0.2, abs=1e-13)
    assert lengths[1] == pytest.approx(0.2 * np.sqrt(2.0), abs=1e-13)
    assert lengths[2] == pytest.approx(0.2, abs=1e-13)


@settings(max_examples=20, deadline=None)
@given(delta=st.floats(0.01, 0.19))
def test_line_cut_area_additivity_property(delta):
    ls = Line(0.0, 1.0, -delta)
    verts = np.array([[0.0, 0.0], [0.2, 0.0], [0.0, 0.2]])
    cut = cut_rules(verts, ls, 4)
    assert cut.area_plus + cut.area_minus == pytest.approx(
        triangle_area(verts), rel=1e-12
    )
    assert cut.area_plus == pytest.approx(
        subdivision_area(verts, ls, "+", depth=8), abs=1e-9
    )
