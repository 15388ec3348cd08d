import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from conftest import make_transport, random_mixture
from gfrag.characteristics import CharacteristicFlow
from gfrag.fragmentation import linear_absorption, zero_rate
from gfrag.growth_model import classify_regime, constant_rate, linear_rate
from gfrag.transport import CompatibilityError, ParameterError, TransportOperator
from gfrag.weighted_space import GridFunction, build_grid, norm, power_space, shifted_space

GRID = build_grid(1e-4, 50.0, 512)


def op(r, space, a=None):
    return TransportOperator(CharacteristicFlow(r, classify_regime(r)), GRID, space, a)


def smooth(x):
    return x ** 2 * np.exp(-x)


@pytest.fixture(scope="module")
def lin():
    return op(linear_rate(), power_space(2.0))


@pytest.fixture(scope="module")
def const_abs():
    return op(constant_rate(), shifted_space(2.0), linear_absorption())


def test_partly_singular_rate_refuses_power_weight():
    with pytest.raises(CompatibilityError):
        op(constant_rate(), power_space(2.0))


def test_lambda_below_generation_bound_is_rejected(lin):
    f = GridFunction.from_callable(GRID, smooth)
    assert lin.lambda_bound == pytest.approx(2.0)
    with pytest.raises(ParameterError):
        lin.resolvent_T(1.5, f)


def test_dilation_semigroup_is_exact(lin):
    # r = x: U0(t) f (y) = e^{-t} f(y e^{-t})
    f = GridFunction.from_callable(GRID, smooth)
    y = GRID.nodes
    for t in (0.1, 0.5, 1.3):
        got = lin.apply_U0(t, f).values
        assert np.max(np.abs(got - np.exp(-t) * smooth(y * np.exp(-t)))) <= 1e-7


def test_shift_with_absorption_is_exact(const_abs):
    # r = 1, a = x: U(t) f (y) = f(y - t) exp(-(y^2 - (y - t)^2) / 2) for y > t, 0 below the front
    f = GridFunction.from_callable(GRID, smooth)
    y = GRID.nodes
    t = 0.7
    X = y - t
    exact = np.where(X > 0, smooth(np.maximum(X, 0)) * np.exp(-(y ** 2 - X ** 2) / 2), 0.0)
    got = const_abs.apply_U(t, f).values
    assert np.max(np.abs(got - exact)) <= 1e-7
    assert np.all(got[y < t] == 0.0)


def test_semigroup_property(const_abs):
    # U(0.4) f has a second-derivative jump at the front y = 0.4; resampling it costs
    # O(h^3) next to the jump, so the pointwise check is made away from it
    f = GridFunction.from_callable(GRID, smooth)
    a = const_abs.apply_U(0.3, const_abs.apply_U(0.4, f)).values
    b = const_abs.apply_U(0.7, f).values
    assert norm(a - b, const_abs.space, GRID) <= 1e-7 * norm(b, const_abs.space, GRID)
    away = GRID.nodes > 1.0
    assert np.max(np.abs(a - b)[away]) <= 1e-9


def test_resolvent_is_laplace_transform(lin):
    # (lam - T0)^{-1} f (y) = int_0^inf e^{-(lam + 1) t} f(y e^{-t}) dt for r = x
    lam = 3.0
    u = lin.resolvent_T(lam, GridFunction.from_callable(GRID, smooth), absorb=False).values
    for i in (100, 300, 450):
        y = GRID.nodes[i]
        exact, _ = integrate.quad(lambda t: np.exp(-(lam + 1) * t) * smooth(y * np.exp(-t)), 0, np.inf,
                                  epsabs=0.0, epsrel=1e-12, limit=200)
        assert u[i] == pytest.approx(exact, rel=1e-8)


def test_generator_on_exponential(lin):
    # -(x e^{-x})' = (x - 1) e^{-x}
    x = GRID.nodes
    got = lin.generator_action(np.exp(-x), absorb=False)
    inner = (x > 1e-3) & (x < 30)
    assert np.max(np.abs(got - (x - 1) * np.exp(-x))[inner]) <= 1e-6


@pytest.mark.parametrize("t", [0.25, 1.0])
def test_operator_norm_closed_forms(t):
    assert op(constant_rate(), shifted_space(2.0)).operator_norm_U0(t).value == pytest.approx((1 + t) ** 2, rel=1e-6)
    assert op(linear_rate(), power_space(2.0)).operator_norm_U0(t).value == pytest.approx(np.exp(2 * t), rel=1e-9)


@pytest.mark.parametrize("name", ["constant", "affine", "singular_both_ends"])
def test_a_priori_estimates_hold(name, rng):
    T = make_transport(name)
    f = random_mixture(T.grid, rng)
    for lam in (T.lambda_bound, 3 * T.lambda_bound):
        assert T.oracle_pointwise(lam, f).passed
        assert T.oracle_smoothing(lam, f).passed


def test_primitive_tables_for_closed_forms(const_abs):
    assert const_abs.primitive_tables() == {}


def test_absorption_only_drops_mass(const_abs):
    free = op(constant_rate(), shifted_space(2.0), zero_rate())
    f = GridFunction.from_callable(GRID, smooth, nonnegative=True)
    assert np.all(const_abs.apply_U(0.5, f).values <= free.apply_U0(0.5, f).values + 1e-15)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=8, max_size=8), st.sampled_from([0.1, 0.5, 2.0]))
def test_transport_preserves_nonnegativity(amps, t):
    T = op(constant_rate(), shifted_space(2.0), linear_absorption())
    s = np.log(GRID.nodes)
    centers = np.linspace(np.log(1e-3), np.log(20.0), 8)
    v = sum(a * np.exp(-0.5 * ((s - c) / 0.2) ** 2) for a, c in zip(amps, centers))
    f = GridFunction(GRID, v, True)
    u = T.apply_U(t, f)
    assert u.nonnegative and np.all(u.values >= 0)
    assert np.all(T.resolvent_T(T.lambda_bound + 1.0, f).values >= -1e-12 * np.max(v + 1e-300))
