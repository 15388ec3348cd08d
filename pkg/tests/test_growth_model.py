import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from gfrag.growth_model import (InconclusiveClassification, Regime, affine_rate, classify_regime, constant_rate,
                                from_callable, linear_rate, power_rate, primitive, tabulated_rate)


@pytest.mark.parametrize("rate, regime, varpi, c_tilde", [
    (constant_rate(), Regime.PARTLY_SINGULAR, np.inf, 1.0),
    (linear_rate(), Regime.FULLY_SINGULAR, 1.0, 1.0),
    (affine_rate(), Regime.PARTLY_SINGULAR, np.inf, 1.0),
    (power_rate(1.0, 0.5), Regime.PARTLY_SINGULAR, np.inf, 0.5),   # sup sqrt(x)/(1+x) at x = 1
    (linear_rate(3.0), Regime.FULLY_SINGULAR, 3.0, 3.0),
])
def test_regime_and_constants(rate, regime, varpi, c_tilde):
    rep = classify_regime(rate)
    assert rep.regime is regime
    assert rep.varpi == pytest.approx(varpi, rel=1e-8)
    assert rep.c_tilde == pytest.approx(c_tilde, rel=1e-8)
    assert rep.sublinear_c == rep.c_tilde


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_superlinear_rates_fit_neither_regime(p):
    # int^inf dx / x^p converges, so characteristics blow up in finite time
    assert classify_regime(power_rate(1.0, p)).regime is Regime.NEITHER


def test_tabulated_rates_are_not_classified():
    r = tabulated_rate([0.1, 1.0, 10.0], [1.0, 1.0, 1.0])
    assert r(np.array([0.5]))[0] == pytest.approx(1.0)
    with pytest.raises(InconclusiveClassification):
        classify_regime(r)


@pytest.mark.parametrize("bad", [0.0, -1.0, np.inf, np.nan])
def test_rate_coefficients_must_be_positive(bad):
    with pytest.raises(ValueError):
        constant_rate(bad)


def test_numeric_primitive_matches_closed_form():
    closed = affine_rate()
    numeric = from_callable(lambda x: 1.0 + x, "one-plus-x")
    xs = np.geomspace(1e-5, 1e5, 41)
    assert np.allclose(numeric.R(xs), closed.R(xs), rtol=1e-10, atol=1e-12)
    assert numeric.R_zero() == pytest.approx(np.log(2.0), rel=1e-9)
    assert np.isinf(from_callable(lambda x: x, "x").R_zero())


def test_primitive_table_round_trip():
    r = from_callable(lambda x: 1.0 + x ** 0.5, "sqrt")
    xs = np.geomspace(1e-3, 1e3, 17)
    ref = r.R(xs)
    fresh = from_callable(lambda x: 1.0 + x ** 0.5, "sqrt")
    fresh.use_primitive_table(r._numeric().table())
    assert np.array_equal(fresh.R(xs), ref)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.2, 5.0), st.floats(0.0, 0.95), st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
def test_power_primitive_is_an_antiderivative(k, p, a, b):
    r = power_rate(k, p)
    exact, _ = integrate.quad(lambda x: 1.0 / (k * x ** p), a, b, epsabs=0.0, epsrel=1e-12, limit=200)
    assert primitive(r, a, b) == pytest.approx(exact, rel=1e-9, abs=1e-12)
    assert r.time_from_zero(b) == pytest.approx(b ** (1 - p) / (k * (1 - p)), rel=1e-9)
