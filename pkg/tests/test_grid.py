import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from congestflow.grid import (Grid, div, grad, inner_product, lambda_adjoint, lambda_op,
                              operator_norm)
from oracles import div_matrix, grad_matrix


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid(1, 4, 0.1)
    with pytest.raises(ValueError):
        Grid(3, 3, 0.0)
    with pytest.raises(ValueError):
        Grid(3, 3, -1.0)
    g = Grid(4, 3, 0.5)
    assert g.cell_area == 0.25
    assert g.area == pytest.approx(3.0)
    X, Y = g.centers()
    assert X[0, 0] == 0.25 and Y[0, 2] == 1.25


def test_inner_product_examples():
    g = Grid(2, 2, 0.5)
    one = np.ones((2, 2))
    assert inner_product(g, one, one) == 1.0
    assert inner_product(g, np.zeros((2, 2)), np.arange(4.0).reshape(2, 2)) == 0.0
    g1 = Grid(3, 3, 1.0)
    e = np.zeros((3, 3))
    e[1, 1] = 1.0
    assert inner_product(g1, e, e) == 1.0
    with pytest.raises(ValueError):
        inner_product(g1, e, np.zeros((2, 3)))


def test_grad_examples():
    g = Grid(5, 4, 0.1)
    assert not np.any(grad(g, np.full((5, 4), 3.0)))
    ramp = np.arange(5)[:, None] * 0.1 * np.ones((1, 4))
    G = grad(g, ramp)
    np.testing.assert_allclose(G[0, :-1], 1.0, rtol=1e-12)
    assert np.all(G[0, -1] == 0.0)
    assert np.all(G[1] == 0.0)


def test_grad_matches_loop():
    rng = np.random.default_rng(3)
    g = Grid(5, 5, 0.3)
    u = rng.normal(size=(5, 5))
    G = grad(g, u)
    for i in range(5):
        for j in range(5):
            gx = (u[i + 1, j] - u[i, j]) / 0.3 if i < 4 else 0.0
            gy = (u[i, j + 1] - u[i, j]) / 0.3 if j < 4 else 0.0
            assert G[0, i, j] == pytest.approx(gx, abs=1e-13)
            assert G[1, i, j] == pytest.approx(gy, abs=1e-13)


def test_div_examples():
    g = Grid(4, 3, 0.5)
    assert not np.any(div(g, np.zeros((2, 4, 3))))
    c = 2.0
    phi = np.zeros((2, 4, 3))
    phi[0] = c
    # the last x-row is outside the gradient's range, so it holds zeros by convention
    phi[0, -1] = 0.0
    d = div(g, phi)
    np.testing.assert_allclose(d[0], c / 0.5)
    np.testing.assert_allclose(d[1:-1], 0.0)
    np.testing.assert_allclose(d[-1], -c / 0.5)


def test_div_against_sparse_adjoint():
    rng = np.random.default_rng(4)
    for m, n, h in [(6, 4, 0.2), (3, 7, 1.0), (2, 2, 0.5)]:
        g = Grid(m, n, h)
        phi = rng.normal(size=(2, m, n))
        u = rng.normal(size=(m, n))
        np.testing.assert_allclose(div(g, phi).ravel(), div_matrix(m, n, h) @ phi.ravel(),
                                   atol=1e-12 / h)
        np.testing.assert_allclose(grad(g, u).ravel(), grad_matrix(m, n, h) @ u.ravel(),
                                   atol=1e-12 / h)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 9), st.integers(2, 9), st.floats(0.05, 2.0), st.integers(0, 2**31 - 1))
def test_adjointness_property(m, n, h, seed):
    rng = np.random.default_rng(seed)
    g = Grid(m, n, h)
    u = rng.normal(size=(m, n))
    phi = rng.normal(size=(2, m, n))
    lhs = inner_product(g, -div(g, phi), u)
    rhs = inner_product(g, phi, grad(g, u))
    scale = math.sqrt(inner_product(g, phi, phi) * inner_product(g, u, u))
    assert abs(lhs - rhs) <= 1e-12 * max(scale, 1.0) / h


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 8), st.integers(2, 8), st.floats(0.1, 1.0), st.integers(0, 2**31 - 1))
def test_divergence_has_zero_total(m, n, h, seed):
    g = Grid(m, n, h)
    phi = np.random.default_rng(seed).normal(size=(2, m, n))
    assert abs(float(np.sum(div(g, phi))) * h * h) <= 1e-12 * (1 + np.abs(phi).sum() * h)


def test_div_grad_of_constant_is_zero():
    g = Grid(5, 6, 0.2)
    assert not np.any(div(g, grad(g, np.full((5, 6), 7.0))))


def test_lambda_pair():
    rng = np.random.default_rng(5)
    g = Grid(6, 5, 0.25)
    rho = rng.random((6, 5))
    sigma = rng.normal(size=(2, 6, 5))
    p = rng.normal(size=(6, 5))
    np.testing.assert_array_equal(lambda_op(g, rho, np.zeros((2, 6, 5))), rho)
    np.testing.assert_allclose(lambda_op(g, np.zeros((6, 5)), sigma), -div(g, sigma))
    a_rho, a_sigma = lambda_adjoint(g, p)
    lhs = inner_product(g, lambda_op(g, rho, sigma), p)
    rhs = inner_product(g, rho, a_rho) + inner_product(g, sigma, a_sigma)
    assert abs(lhs - rhs) <= 1e-12 * (abs(lhs) + 1) / g.h


def test_operator_norm_bound_and_stability():
    g16 = Grid(16, 16, 1 / 16)
    est = operator_norm(g16, 200)
    assert est <= math.sqrt(1 + 8 * 256) + 1e-9
    assert est > 0.9 * math.sqrt(1 + 8 * 256)

    g32 = Grid(32, 32, 1 / 32)
    e200 = operator_norm(g32, 200)
    e400 = operator_norm(g32, 400)
    assert abs(e200 - e400) / e400 <= 1e-6


def test_operator_norm_monotone_in_iterations():
    g = Grid(12, 10, 0.1)
    vals = [operator_norm(g, k) for k in (1, 2, 5, 10, 50, 100)]
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))


def test_operator_norm_grows_as_h_shrinks():
    vals = [operator_norm(Grid(k, k, 1 / k), 200) for k in (8, 16, 32)]
    assert vals[0] < vals[1] < vals[2]
    # |Lambda| behaves like 2 sqrt(2) / h
    assert vals[2] * (1 / 32) == pytest.approx(2 * math.sqrt(2), rel=0.01)
