import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from kolmosphere.harmonics import (
    basis_table,
    coupling,
    eval_basis,
    eval_basis_dtheta,
    gauss_legendre,
    laplace_eigenvalue,
)


@pytest.mark.parametrize("n, expected", [(0, 0.0), (2, 6.0), (3, 12.0), (10, 110.0)])
def test_laplace_eigenvalue(n, expected):
    assert laplace_eigenvalue(n) == expected


def test_laplace_eigenvalue_rejects_negative():
    with pytest.raises(ValueError):
        laplace_eigenvalue(-1)


@pytest.mark.parametrize(
    "n, m, expected",
    [(1, 0, math.sqrt(1 / 3)), (2, 2, 0.0), (3, 1, math.sqrt(8 / 35)), (4, 3, 1 / 3)],
)
def test_coupling_values(n, m, expected):
    assert_allclose(coupling(n, m), expected, rtol=1e-15, atol=0)


def test_coupling_rejects_low_degree():
    with pytest.raises(ValueError):
        coupling(1, 2)


@given(st.integers(1, 400), st.integers(1, 400))
def test_coupling_bounds_and_sign_symmetry(a, b):
    m, n = min(a, b), max(a, b)
    c = coupling(n, m)
    assert 0.0 <= c < 0.5
    assert c == coupling(n, -m)


def test_zonal_coupling_exceeds_half():
    # a_n^0 = n / sqrt(4n^2 - 1) approaches 1/2 from above
    c = coupling(np.arange(1, 500), 0)
    assert np.all(c > 0.5)
    assert np.all(np.diff(c) < 0)


def test_coupling_increases_to_half():
    c = coupling(np.arange(5, 5000), 3)
    assert np.all(np.diff(c) > 0)
    assert_allclose(c[-1], 0.5, atol=1e-6)


def test_eval_basis_closed_forms():
    assert_allclose(eval_basis(0, 0, 0.7), 1 / (2 * math.sqrt(math.pi)), rtol=1e-15)
    assert_allclose(eval_basis(2, 0, math.pi / 2), -0.5 * math.sqrt(5 / (4 * math.pi)), rtol=1e-14)
    # Condon-Shortley: Pbar_1^1 = -sqrt(3/(8 pi)) sin(theta)
    assert_allclose(eval_basis(1, 1, 0.3), -math.sqrt(3 / (8 * math.pi)) * math.sin(0.3), rtol=1e-14)


def test_eval_basis_rejects_bad_input():
    with pytest.raises(ValueError):
        eval_basis(2, 3, 0.1)
    with pytest.raises(ValueError):
        eval_basis(2, 1, -0.1)
    with pytest.raises(ValueError):
        eval_basis(2, 1, math.pi + 1e-9)


def test_poles_vanish_for_nonzero_order():
    assert eval_basis(7, 3, 0.0) == 0.0
    assert eval_basis(7, -2, math.pi) == 0.0
    assert eval_basis(7, 0, 0.0) > 0


def test_negative_order_profile():
    th = np.linspace(0.1, 3.0, 7)
    for n, m in [(5, 1), (5, 2), (9, 7)]:
        assert_allclose(eval_basis(n, -m, th), (-1) ** m * eval_basis(n, m, th), rtol=0, atol=1e-15)


@pytest.mark.parametrize("m", [0, 1, 3, -2, 17])
def test_orthonormality_under_quadrature(m):
    rule = gauss_legendre(128)
    P = basis_table(m, 60, rule.theta)
    gram = 2 * math.pi * (P * rule.weights) @ P.T
    assert_allclose(gram, np.eye(gram.shape[0]), rtol=0, atol=1e-11)


@pytest.mark.parametrize("m", [0, 1, 2, 5, 50, 199])
def test_recurrence_identity(m):
    theta = np.linspace(0, math.pi, 64)
    P = basis_table(m, 201, theta)
    n = np.arange(abs(m) + 1, 201)
    a_n = coupling(n, m)[:, None]
    a_n1 = coupling(n + 1, m)[:, None]
    lhs = np.cos(theta) * P[1:-1]
    rhs = a_n * P[:-2] + a_n1 * P[2:]
    assert_allclose(lhs, rhs, rtol=0, atol=1e-11)


def test_large_degree_is_finite_and_normalised():
    rule = gauss_legendre(12002)
    p = eval_basis(12000, 5, rule.theta)
    assert np.all(np.isfinite(p))
    assert_allclose(2 * math.pi * rule.integrate(p**2), 1.0, rtol=1e-9)


def test_derivative_closed_forms():
    assert_allclose(eval_basis_dtheta(1, 0, math.pi / 2), -math.sqrt(3 / (4 * math.pi)), rtol=1e-14)
    assert_allclose(eval_basis_dtheta(0, 0, np.linspace(0, 3, 5)), 0.0, atol=0)


@settings(max_examples=60)
@given(st.integers(1, 40), st.integers(-40, 40), st.floats(0.05, math.pi - 0.05))
def test_derivative_matches_finite_difference(n, m, theta):
    if abs(m) > n:
        m = m % (n + 1)
    h = 1e-6
    fd = (eval_basis(n, m, theta + h) - eval_basis(n, m, theta - h)) / (2 * h)
    assert abs(eval_basis_dtheta(n, m, theta) - fd) <= 1e-6


@pytest.mark.parametrize("n, m", [(3, 1), (4, -1), (5, 0), (6, 2)])
def test_derivative_pole_limits(n, m):
    for pole, near in [(0.0, 1e-7), (math.pi, math.pi - 1e-7)]:
        assert_allclose(eval_basis_dtheta(n, m, pole), eval_basis_dtheta(n, m, near), atol=1e-5)


def test_gauss_legendre_small_rules():
    r1 = gauss_legendre(1)
    assert_allclose(r1.nodes, [0.0], atol=1e-15)
    assert_allclose(r1.weights, [2.0])
    r2 = gauss_legendre(2)
    assert_allclose(r2.nodes, [-1 / math.sqrt(3), 1 / math.sqrt(3)], rtol=1e-14)
    assert_allclose(r2.weights, [1.0, 1.0], rtol=1e-14)
    assert_allclose(gauss_legendre(3).integrate(gauss_legendre(3).nodes ** 4), 0.4, atol=1e-14)


@pytest.mark.parametrize("npts", [1, 5, 64, 301])
def test_gauss_legendre_invariants(npts):
    r = gauss_legendre(npts)
    assert_allclose(r.weights.sum(), 2.0, atol=1e-13)
    assert np.all(np.diff(r.nodes) > 0)
    assert np.all(r.weights > 0)
    for k in range(0, 2 * npts, max(1, npts // 3)):
        exact = 0.0 if k % 2 else 2.0 / (k + 1)
        assert_allclose(r.integrate(r.nodes**k), exact, atol=1e-13)
    with pytest.raises(ValueError):
        r.nodes[0] = 0.0


def test_gauss_legendre_rejects_zero():
    with pytest.raises(ValueError):
        gauss_legendre(0)
