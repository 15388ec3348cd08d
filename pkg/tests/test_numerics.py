import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from gfrag._numerics import (CELL_STENCIL, cell_rule_rows, cell_stencil, gauss_legendre, gregory_end_weights,
                             integrate_gl, lagrange_basis, product_rule_weights)
from gfrag._primitive import S_SPAN, CachedPrimitive


@pytest.mark.parametrize("n", [7, 8, 20, 101])
@pytest.mark.parametrize("degree", range(4))
def test_gregory_rule_exact_to_degree_three(degree, n):
    g = np.array(gregory_end_weights())
    w = np.ones(n + 1)
    w[: g.size] = g
    w[n + 1 - g.size:] = g[::-1]
    nodes = np.arange(n + 1, dtype=float)
    exact = n ** (degree + 1) / (degree + 1)
    assert np.sum(w * nodes ** degree) == pytest.approx(exact, rel=1e-11)


def test_gregory_weights_match_classical_table():
    assert np.allclose(gregory_end_weights(3), [3 / 8, 7 / 6, 23 / 24], rtol=1e-13)


@settings(max_examples=40, deadline=None)
@given(coeffs=st.lists(st.floats(-3, 3), min_size=6, max_size=6), t=st.floats(-2.0, 7.0))
def test_lagrange_basis_reproduces_quintics(coeffs, t):
    nodes = np.arange(6, dtype=float)
    p = np.polynomial.Polynomial(coeffs)
    basis = lagrange_basis(nodes, np.array(t))
    assert basis @ p(nodes) == pytest.approx(p(t), abs=1e-9 * (1 + abs(p(t))))


def test_lagrange_basis_shape_and_cardinality():
    nodes = np.array([0.0, 1.0, 2.5, 4.0])
    b = lagrange_basis(nodes, nodes[:, None] * np.ones((1, 3)))
    assert b.shape == (4, 3, 4)
    assert np.allclose(b[:, 0, :], np.eye(4))


@pytest.mark.parametrize("n", [1, 3, 6, 50])
def test_cell_stencil_bounds(n):
    for i in range(n):
        j0, j1 = cell_stencil(i, n)
        assert 0 <= j0 <= j1 <= n - 1
        if i >= 1:
            assert j0 <= i - 1 and j1 >= i
            assert j1 - j0 + 1 == min(CELL_STENCIL, j1 + 1)
        m0, m1 = cell_stencil(i, n, monotone=True)
        assert (m0, m1) == ((0, 0) if i == 0 else (i - 1, i))


def test_gauss_legendre_unit_interval():
    x, w = gauss_legendre(8)
    assert np.all((x > 0) & (x < 1))
    for k in range(16):
        assert np.sum(w * x ** k) == pytest.approx(1.0 / (k + 1), rel=1e-13)


def test_integrate_gl_broadcasts():
    lo = np.array([0.0, 1.0, -2.0])
    hi = np.array([[1.0], [3.0]])
    got = integrate_gl(np.cos, lo, hi, points=12)
    assert got.shape == (2, 3)
    assert np.allclose(got, np.sin(hi) - np.sin(lo), atol=1e-13)


@pytest.mark.parametrize("k", range(6))
def test_cell_rows_exact_for_polynomials_in_log_x(k):
    # f(x) = (log x)^k is a polynomial in s; a cell is exact when its stencil has more than k nodes
    s0, ds, n = -2.0, 0.1, 30
    rows = cell_rule_rows(s0, ds, n)
    s = s0 + ds * np.arange(n)
    vals = s ** k
    for i in range(1, n):
        j0, j1 = cell_stencil(i, n)
        if j1 - j0 < k:
            continue
        exact, _ = integrate.quad(lambda t: t ** k * np.exp(t), s[i - 1], s[i], epsabs=1e-15, epsrel=1e-13)
        assert rows[i] @ vals == pytest.approx(exact, rel=1e-11, abs=1e-14)
    # the half cell at the left edge uses node 0 alone, exact for constants
    assert rows[0, 0] == pytest.approx(np.exp(s0) - np.exp(s0 - 0.5 * ds), rel=1e-13)


def test_product_rule_integrates_smooth_functions():
    s0, n = np.log(1e-4), 512
    ds = (np.log(50.0) - s0) / (n - 1)
    x = np.exp(s0 + ds * np.arange(n))
    lo = np.exp(s0 - 0.5 * ds)
    w = product_rule_weights(s0, ds, n, right_cap=False)
    for f, F in ((lambda z: np.exp(-z), lambda z: -np.exp(-z)), (lambda z: z ** 2, lambda z: z ** 3 / 3)):
        exact = F(x[-1]) - F(lo)
        assert w @ f(x) == pytest.approx(exact, rel=1e-9)
    # the right cap adds the half cell [x_n, x_n e^{ds/2}]
    capped = product_rule_weights(s0, ds, n, right_cap=True)
    hi = x[-1] * np.exp(0.5 * ds)
    assert capped @ x ** 2 == pytest.approx((hi ** 3 - lo ** 3) / 3, rel=1e-9)


def test_cached_primitive_matches_closed_form():
    g = lambda z: 1.0 / (1.0 + z)  # noqa: E731
    prim = CachedPrimitive(g)
    x = np.array([1e-6, 1e-2, 0.5, 1.0, 3.0, 1e3, 1e8])
    assert np.allclose(prim(x), np.log((1 + x) / 2), rtol=1e-12, atol=1e-13)
    assert prim(np.array(1.0)) == 0.0
    assert prim.limit_at_zero() == pytest.approx(-np.log(2.0), rel=1e-6)
    assert prim.limit_at_infinity() == np.inf


def test_cached_primitive_extrapolates_power_law_tails():
    prim = CachedPrimitive(lambda z: z ** -2.0)
    far = np.exp(S_SPAN + 3.0)
    assert prim(np.array(far)) == pytest.approx(1.0 - 1.0 / far, rel=1e-10)
    assert prim.limit_at_infinity() == pytest.approx(1.0, rel=1e-10)
    assert prim.limit_at_zero() == -np.inf


def test_cached_primitive_table_round_trip():
    g = lambda z: np.sqrt(z) / (1.0 + z)  # noqa: E731
    prim = CachedPrimitive(g)
    again = CachedPrimitive(g, prim.table())
    x = np.geomspace(1e-20, 1e20, 97)
    assert np.array_equal(prim(x), again(x))


def test_cached_primitive_rejects_malformed_table():
    prim = CachedPrimitive(lambda z: 1.0 / z)
    tab = prim.table()
    tab["cum"] = tab["cum"][:-1]
    with pytest.raises(ValueError):
        CachedPrimitive(lambda z: 1.0 / z, tab)
