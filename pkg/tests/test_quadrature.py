from math import factorial

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cutprep.quadrature import facet_rule, gauss_legendre, map_simplex, simplex_rule, tensor_gauss


def simplex_monomial(exps):
    """Exact integral of prod x_i^a_i over the unit reference simplex."""
    num = np.prod([factorial(a) for a in exps])
    return num / factorial(sum(exps) + len(exps))


@pytest.mark.parametrize("dim", [1, 2, 3])
@pytest.mark.parametrize("degree", [0, 1, 2, 3, 4, 5, 6])
def test_simplex_rule_exactness(dim, degree):
    x, w = simplex_rule(dim, degree)
    assert np.all(w > 0)
    for total in range(degree + 1):
        for exps in np.ndindex(*(total + 1,) * dim):
            if sum(exps) != total:
                continue
            got = np.sum(w * np.prod(x ** np.array(exps), axis=1))
            assert got == pytest.approx(simplex_monomial(exps), rel=1e-13, abs=1e-15)


def test_simplex_points_inside():
    for dim in (2, 3):
        x, _ = simplex_rule(dim, 6)
        assert np.all(x > 0) and np.all(x.sum(axis=1) < 1)


@pytest.mark.parametrize("n", [1, 2, 4, 7])
def test_tensor_gauss_exactness(n):
    pts, w = tensor_gauss(n, 2)
    deg = 2 * n - 1
    for a in range(deg + 1):
        for b in range(deg + 1):
            exact = (1 - (-1) ** (a + 1)) / (a + 1) * (1 - (-1) ** (b + 1)) / (b + 1)
            assert np.sum(w * pts[:, 0] ** a * pts[:, 1] ** b) == pytest.approx(exact, abs=1e-13)
    x, _ = gauss_legendre(n)
    np.testing.assert_allclose(pts[:n, 0], x)  # x-index fastest


@given(st.lists(st.floats(-3, 3), min_size=6, max_size=6))
def test_map_simplex_measure(v):
    verts = np.array(v).reshape(3, 2)
    e1, e2 = verts[1] - verts[0], verts[2] - verts[0]
    area = 0.5 * abs(e1[0] * e2[1] - e1[1] * e2[0])
    x, w = map_simplex(simplex_rule(2, 2), verts)
    assert w.sum() == pytest.approx(area, abs=1e-12)
    if area > 1e-6:
        centroid = (w[:, None] * x).sum(0) / w.sum()
        np.testing.assert_allclose(centroid, verts.mean(0), atol=1e-9)


def test_map_simplex_embedded_segment_and_triangle():
    x, w = map_simplex(facet_rule(2, 3), np.array([[0.0, 0.0], [3.0, 4.0]]))
    assert w.sum() == pytest.approx(5.0)
    x, w = map_simplex(facet_rule(3, 3), np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 1]]))
    assert w.sum() == pytest.approx(0.5 * np.sqrt(2))
