import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uwvf.quadrature import (ASSEMBLY_SAFETY, MAX_ORDER, QuadratureAccuracyWarning, composite_face_rule,
                             face_quadrature_order, map_tetrahedron_rule, map_triangle_rule,
                             oscillatory_face_oracle, subdivide_triangle, tetrahedron_rule, triangle_rule)

REF_TRI = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], float)
REF_TET = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], float)


def test_reference_values():
    pts, w = map_triangle_rule(triangle_rule(1), REF_TRI)
    assert w @ pts[:, 0] == pytest.approx(1 / 6, abs=1e-15)
    pts, w = map_triangle_rule(triangle_rule(5), REF_TRI)
    # 2! 3! / 7! = 1/420
    assert abs(w @ (pts[:, 0] ** 2 * pts[:, 1] ** 3) - 1 / 420) <= 1e-13
    pts, w = map_tetrahedron_rule(tetrahedron_rule(1), REF_TET)
    assert w @ pts[:, 0] == pytest.approx(1 / 24, abs=1e-15)
    pts, w = map_tetrahedron_rule(tetrahedron_rule(3), REF_TET)
    assert abs(w @ np.prod(pts, axis=1) - 1 / 720) <= 1e-13


@pytest.mark.parametrize("order", range(1, MAX_ORDER + 1))
def test_rules_are_symmetric_with_positive_weights(order):
    for rule in (triangle_rule(order), tetrahedron_rule(order)):
        assert np.all(rule.weights > 0)
        assert np.all(rule.bary >= -1e-15)
        assert np.allclose(rule.bary.sum(axis=1), 1)
        # the point set is invariant under reversing the vertex order
        key = lambda b: np.lexsort(np.round(b, 12).T)
        a, r = rule.bary, rule.bary[:, ::-1]
        assert np.allclose(a[key(a)], r[key(r)], atol=1e-12)


@pytest.mark.parametrize("order", [1, 4, 9, 20])
def test_exactness_on_mapped_triangle(order, rng):
    tri = rng.normal(size=(3, 3))
    area = np.linalg.norm(np.cross(tri[1] - tri[0], tri[2] - tri[0])) / 2
    pts, w = map_triangle_rule(triangle_rule(order), tri)
    assert w.sum() == pytest.approx(area, rel=1e-13)
    # a linear function integrates to area times its centroid value
    c = rng.normal(size=3)
    assert w @ (pts @ c) == pytest.approx(area * tri.mean(axis=0) @ c, rel=1e-12, abs=1e-13)


def test_order_formula():
    assert face_quadrature_order(1.0, 1.0, 0.5) == 7
    assert face_quadrature_order(1.0, 1.0, 10.0) == 16
    assert face_quadrature_order(2.0, 4.0, 1.0) == 10
    with pytest.warns(QuadratureAccuracyWarning):
        assert face_quadrature_order(1.0, 1.0, 30.0, warn=True) == 20


def test_composite_rule_splits_and_warns():
    tri = REF_TRI * 3.0
    with pytest.warns(QuadratureAccuracyWarning):
        pts, w = composite_face_rule(tri, 10.0, 1.0)
    assert w.sum() == pytest.approx(4.5, rel=1e-14)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        composite_face_rule(REF_TRI, 1.0, 1.0)


def test_subdivision_preserves_area():
    parts = subdivide_triangle(REF_TRI, 2)
    assert len(parts) == 16
    areas = np.linalg.norm(np.cross(parts[:, 1] - parts[:, 0], parts[:, 2] - parts[:, 0]), axis=1) / 2
    assert np.allclose(areas, 0.5 / 16)


def test_oracle_closed_forms():
    assert oscillatory_face_oracle(0.0, [1, 0, 0], REF_TRI) == pytest.approx(0.5, abs=1e-15)
    # direction normal to the plane z=0 gives a constant phase
    assert oscillatory_face_oracle(7.0, [0, 0, 1], REF_TRI) == pytest.approx(0.5, abs=1e-14)
    # int_0^1 (1 - x) exp(ix) dx = (1 + i - e^i)
    exact = 1 + 1j - np.exp(1j)
    assert abs(oscillatory_face_oracle(1.0, [1, 0, 0], REF_TRI) - exact) <= 1e-13


def test_oracle_complex_wave_vector():
    # exp(-x) over the reference triangle: int_0^1 (1 - x) e^{-x} dx = 1/e
    val = oscillatory_face_oracle(1.0, [1j, 0, 0], REF_TRI)
    assert abs(val - np.exp(-1)) <= 1e-13


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.floats(0.1, 6.0))
def test_composite_matches_oracle(seed, kh):
    rng = np.random.default_rng(seed)
    tri = rng.normal(size=(3, 3))
    e = tri[[1, 2, 0]] - tri
    area2 = np.linalg.norm(np.cross(e[0], e[1]))
    if area2 < 0.1 * max(np.linalg.norm(e, axis=1)) ** 2:
        tri = REF_TRI + rng.normal(size=3)
    h = max(np.linalg.norm(tri[i] - tri[j]) for i, j in ((0, 1), (1, 2), (0, 2)))
    d = rng.normal(size=3)
    d /= np.linalg.norm(d)
    kappa = kh / h
    pts, w = composite_face_rule(tri, kappa, 1.0, ASSEMBLY_SAFETY)
    val = w @ np.exp(1j * kappa * pts @ d)
    assert abs(val - oscillatory_face_oracle(kappa, d, tri)) <= 1e-10 * w.sum()


@settings(max_examples=40, deadline=None)
@given(st.integers(1, MAX_ORDER), st.data())
def test_monomial_exactness_property(order, data):
    a = data.draw(st.integers(0, order))
    b = data.draw(st.integers(0, order - a))
    c = data.draw(st.integers(0, order - a - b))
    pts, w = map_tetrahedron_rule(tetrahedron_rule(order), REF_TET)
    exact = math.factorial(a) * math.factorial(b) * math.factorial(c) / math.factorial(a + b + c + 3)
    assert w @ (pts[:, 0] ** a * pts[:, 1] ** b * pts[:, 2] ** c) == pytest.approx(exact, rel=1e-12)
    pts, w = map_triangle_rule(triangle_rule(order), REF_TRI)
    exact = math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)
    assert w @ (pts[:, 0] ** a * pts[:, 1] ** b) == pytest.approx(exact, rel=1e-12)


def test_invalid_orders():
    with pytest.raises(ValueError):
        triangle_rule(0)
    with pytest.raises(ValueError):
        tetrahedron_rule(MAX_ORDER + 1)
