import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from gfrag.characteristics import CharacteristicFlow, RegimeError, is_below_front
from gfrag.growth_model import classify_regime, constant_rate, from_callable, linear_rate, power_rate


def flow(r):
    return CharacteristicFlow(r, classify_regime(r))


def test_neither_regime_has_no_flow():
    r = power_rate(1.0, 2.0)
    with pytest.raises(RegimeError):
        CharacteristicFlow(r, classify_regime(r))


def test_front_only_in_partly_singular_regime():
    with pytest.raises(RegimeError):
        flow(linear_rate()).front(1.0)
    with pytest.raises(ValueError):
        flow(constant_rate()).front(0.0)


def test_below_front_is_flagged():
    c = flow(constant_rate())
    X = c.backward(np.array([0.5, 2.0]), np.array([1.0, 1.0]))
    assert list(is_below_front(X)) == [True, False]
    assert np.isnan(c.jacobian(0.5, 1.0))
    assert c.jacobian(2.0, 1.0) == pytest.approx(1.0)


def test_negative_time_rejected():
    with pytest.raises(ValueError):
        flow(linear_rate()).forward(1.0, -0.1)


def test_sqrt_growth_closed_forms():
    # r = sqrt(x): x(t)^{1/2} = y^{1/2} + t/2, front (t/2)^2
    f = flow(power_rate(1.0, 0.5))
    y, t = np.array([0.3, 4.0, 90.0]), np.array([0.2, 1.0, 3.0])
    assert np.allclose(f.forward(y, t), (np.sqrt(y) + t / 2) ** 2, rtol=1e-11)
    assert np.allclose(f.front(t), (t / 2) ** 2, rtol=1e-11)
    assert f.travel_time(1.0, 4.0) == pytest.approx(2.0, rel=1e-12)


def test_numeric_primitive_flow_matches_closed_form():
    closed = flow(linear_rate(2.0))
    numeric = flow(from_callable(lambda x: 2.0 * x, "2x"))
    x = np.geomspace(1e-3, 1e3, 9)
    assert np.allclose(numeric.forward(x, 0.7), closed.forward(x, 0.7), rtol=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 3.0), st.floats(0.0, 0.9), st.floats(1e-2, 1e2), st.floats(0.0, 2.0), st.floats(0.0, 2.0))
def test_flow_group_property(k, p, x, s, t):
    f = flow(power_rate(k, p))
    y = f.forward(x, s + t)
    assert f.forward(f.forward(x, s), t) == pytest.approx(y, rel=1e-9)
    assert f.backward(y, s + t) == pytest.approx(x, rel=1e-9)
    back = f.backward(x, t)
    assume(not np.isnan(back))
    assert f.forward(back, t) == pytest.approx(x, rel=1e-9)
    # dX/dy = r(X) / r(y) by a centred difference
    h = 1e-6 * x
    fd = (f.backward(x + h, t) - f.backward(x - h, t)) / (2 * h)
    assume(not np.isnan(fd))
    assert f.jacobian(x, t) == pytest.approx(fd, rel=1e-5)
