import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import bump, make_transport
from gfrag.evolution_spectral import (NO_THEOREM_BANNER, CFLError, EvolutionEngine, FitFailure, GenerationError,
                                      StagnationError, window_cutoff)
from gfrag.fragmentation import linear_absorption, uniform_binary
from gfrag.weighted_space import GridFunction, shifted_space


@pytest.fixture(scope="module")
def lin_eigen(engines):
    return engines("linear").perron_eigenpair()


@pytest.fixture(scope="module")
def const_eigen(engines):
    return engines("constant").perron_eigenpair()


def test_time_zero_is_identity(engines):
    eng = engines("constant")
    f = bump(eng.grid, 1.0)
    for path in ("duhamel", "stepper"):
        assert np.array_equal(eng.apply_V(0.0, f, path).values, f.values)
    with pytest.raises(ValueError):
        eng.apply_V(-1.0, f)
    with pytest.raises(ValueError):
        eng.evolve(f, [1.0, 0.5])


def test_pure_transport_matches_transport_semigroup(transport_only):
    eng = EvolutionEngine(transport_only, uniform_binary())
    f = bump(eng.grid, 1.0, 0.3)
    # one Duhamel chunk is exactly the transport step; longer times compose chunks, and each
    # composition resamples across the front y = t, which costs ~1e-6 in norm here
    assert np.allclose(eng.apply_V(0.2, f).values, transport_only.apply_U(0.2, f).values, rtol=0, atol=1e-14)
    diff = eng.apply_V(0.8, f).values - transport_only.apply_U(0.8, f).values
    assert eng._norm(diff) <= 1e-5 * eng._norm(f.values)
    assert eng.resolvent_A(3.0, f).values == pytest.approx(transport_only.resolvent_T(3.0, f).values)


def test_exponential_is_an_eigenfunction(engines):
    # r = x, a = x, b = 2/y: V(t) e^{-x} = e^t e^{-x}
    eng = engines("linear")
    x = eng.grid.nodes
    f = GridFunction(eng.grid, np.exp(-x), True)
    for t, u in zip([0.5, 1.0, 2.0], eng.evolve(f, [0.5, 1.0, 2.0])):
        assert eng._norm(u.values - np.exp(t) * f.values) <= 1e-2 * eng._norm(np.exp(t) * f.values)


def test_resolvent_on_eigenfunction(engines):
    eng = engines("linear")
    x = eng.grid.nodes
    f = GridFunction(eng.grid, np.exp(-x), True)
    lam = eng.lambda0
    u = eng.resolvent_A(lam, f)
    assert eng._norm(u.values - f.values / (lam - 1.0)) <= 1e-4 * eng._norm(f.values)


def test_resolvent_is_laplace_transform_of_semigroup(engines):
    # int_0^T e^{-lam t} V(t) f dt + e^{-lam T} (lam - A)^{-1} V(T) f = (lam - A)^{-1} f
    eng = engines("constant")
    lam = eng.lambda0
    f = bump(eng.grid, 1.0, 0.3)
    ts = np.linspace(0.0, 4.0, 65)
    states = np.array([u.values for u in eng.evolve(f, ts)])
    from scipy import integrate

    lap = integrate.simpson(np.exp(-lam * ts)[:, None] * states, x=ts, axis=0)
    tail = np.exp(-lam * ts[-1]) * eng.resolvent_A(lam, GridFunction(eng.grid, states[-1])).values
    ref = eng.resolvent_A(lam, f).values
    assert eng._norm(lap + tail - ref) <= 1e-2 * eng._norm(ref)


def test_eigenpair_reports(lin_eigen, const_eigen):
    for ep in (lin_eigen, const_eigen):
        assert ep.accepted and ep.converged and ep.positive_f and ep.positive_e
        assert ep.residual_primal <= ep.residual_tol
        q = ep.f_vec.grid.weights
        assert np.sum(q * ep.e_vec.values * ep.f_vec.values) == pytest.approx(1.0, rel=1e-12)
    d = const_eigen.to_dict(include_vectors=True)
    assert {"lambda_star", "residual_primal", "f_vec", "e_vec", "x"} <= d.keys()


def test_projection_is_linear(engines, const_eigen):
    eng = engines("constant")
    f2 = GridFunction(eng.grid, 2.0 * const_eigen.f_vec.values)
    assert eng._norm(const_eigen.projection(f2).values - f2.values) <= 1e-10 * eng._norm(f2.values)


def test_eigen_consistency_under_evolution(engines, const_eigen):
    eng = engines("constant")
    f = const_eigen.f_vec
    for t, u in zip([0.5, 2.0], eng.evolve(f, [0.5, 2.0])):
        target = np.exp(const_eigen.lambda_star * t) * f.values
        assert eng._norm(u.values - target) <= 1e-2 * eng._norm(target)


def test_pure_transport_has_no_perron_pair(transport_only):
    eng = EvolutionEngine(transport_only, uniform_binary())
    try:
        ep = eng.perron_eigenpair(max_iter=500)
    except StagnationError:
        return
    assert not ep.accepted


def test_positivity_check_inputs(engines):
    eng = engines("linear")
    rep = eng.positivity_improving_check(eng.lambda0, GridFunction.zeros(eng.grid))
    assert not rep.valid and not rep.passed
    rep = eng.positivity_improving_check(eng.lambda0, bump(eng.grid, 1.0, 0.05))
    assert rep.valid and rep.passed and rep.min_log10 > -400


def test_gap_proxy_windows(engines, const_eigen):
    eng = engines("constant")
    outside = eng.gap_proxy((60.0, 80.0), eigen=const_eigen)
    assert not outside.valid and outside.proxy == 0.0
    proxies = [eng.gap_proxy(w, eigen=const_eigen).proxy for w in [(0.25, 4.0), (0.5, 2.0), (0.8, 1.25)]]
    assert all(p > 0 for p in proxies)
    assert proxies[0] >= proxies[1] >= proxies[2]


def test_window_cutoff_shape():
    x = np.geomspace(0.1, 10, 201)
    p = window_cutoff(x, (0.5, 2.0))
    assert np.all((p >= 0) & (p <= 1))
    assert p[x < 0.5].max() == 0.0 and p[x > 2.0].max() == 0.0
    assert p[np.argmin(np.abs(x - 1.0))] == 1.0


def test_aeg_on_the_eigenvector_is_flat(engines, const_eigen):
    eng = engines("constant")
    rep = eng.aeg_diagnose(const_eigen, bump(eng.grid, 1.0), np.arange(0, 4.01, 0.25))
    assert rep.epsilon_fit > 0 and rep.conserved_drift <= 1e-2
    ts = np.linspace(0.0, 2.0, 5)
    curve = [eng._norm(np.exp(-const_eigen.lambda_star * t) * u.values - const_eigen.f_vec.values)
             for t, u in zip(ts, eng.evolve(const_eigen.f_vec, ts))]
    assert max(curve) <= 1e-3 * eng._norm(const_eigen.f_vec.values)


def test_aeg_preconditions(engines, const_eigen):
    eng = engines("constant")
    with pytest.raises(FitFailure):
        eng.aeg_diagnose(const_eigen, bump(eng.grid, 1.0), [0.0, 0.25, 0.5])
    with pytest.raises(ValueError):
        eng.aeg_diagnose(const_eigen, GridFunction.zeros(eng.grid), [0.0, 1.0])


def test_desch_failure_needs_override():
    T = make_transport("constant")
    T1 = type(T)(T.flow, T.grid, shifted_space(1.0), linear_absorption())
    with pytest.raises(GenerationError):
        EvolutionEngine(T1, uniform_binary())
    eng = EvolutionEngine(T1, uniform_binary(), override=True)
    assert eng.banner == NO_THEOREM_BANNER


def test_stepper_time_step_is_bounded_by_fragmentation_rate():
    with pytest.raises(CFLError):
        EvolutionEngine(make_transport("constant"), uniform_binary(), dt=0.1)   # max a = 50


@settings(max_examples=10, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=3, max_size=3).filter(lambda v: sum(v) > 0.1),
       st.sampled_from(["duhamel", "stepper"]))
def test_evolution_preserves_nonnegativity(engines, amps, path):
    eng = engines("constant")
    v = sum(a * bump(eng.grid, c, 0.2).values for a, c in zip(amps, (0.05, 1.0, 5.0)))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        u = eng.apply_V(0.5, GridFunction(eng.grid, v, True), path)
    assert np.all(u.values >= 0)
