"""Acceptance criteria 1-12 at their stated tolerances.

Each test is one criterion; the terminal summary (see ``conftest.py``) prints
one PASS/FAIL line per criterion.  Run directly with
``python tests/test_acceptance.py``.
"""
from __future__ import annotations

import io
import sys
from pathlib import Path

import numpy as np
import pytest

from conftest import BUILTIN, bump, make_transport, random_mixture
from dense_oracle import perron_eigenvalue
from gfrag.characteristics import CharacteristicFlow
from gfrag.cli_io import AEGConfig, run
from gfrag.evolution_spectral import EvolutionEngine
from gfrag.fragmentation import (PowerLaw, homogeneous_kernel, linear_absorption, tabulated_kernel_from_triples,
                                 uniform_binary, zero_rate)
from gfrag.growth_model import affine_rate, classify_regime, constant_rate, linear_rate
from gfrag.thresholds import desch_condition, ratio_curve, threshold_alpha_tilde
from gfrag.transport import TransportOperator
from gfrag.weighted_space import (GridFunction, SpaceKind, build_grid, norm, power_space, shifted_space,
                                  weighted_moment)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _l1_normalised(v, grid):
    return v / np.sum(grid.weights * np.abs(v))


# 1 ---------------------------------------------------------------------------------------
def test_criterion_01_exact_eigenpair(engines):
    eng = engines("linear")
    ep = eng.perron_eigenpair()
    g = eng.grid
    x = g.nodes
    assert ep.accepted
    assert abs(ep.lambda_star - 1.0) <= 1e-3
    f = _l1_normalised(ep.f_vec.values, g)
    f_exact = _l1_normalised(np.exp(-x), g)
    assert np.sum(g.weights * np.abs(f - f_exact)) <= 1e-2
    bulk = x <= g.x_max / 2
    ratio = ep.e_vec.values[bulk] / x[bulk]
    c = np.median(ratio)
    assert np.max(np.abs(ratio / c - 1.0)) <= 1e-2


# 2 ---------------------------------------------------------------------------------------
@pytest.mark.parametrize("path", ["duhamel", "stepper"])
def test_criterion_02_mass_moment_law(engines, path):
    eng = engines("linear")
    f = bump(eng.grid, 1.0, 0.3)
    times = np.linspace(0.0, 2.0, 9)
    states = eng.evolve(f, times, path)
    m0 = weighted_moment(f, lambda x: x)
    for t, u in zip(times, states):
        m = weighted_moment(u, lambda x: x)
        assert abs(m - m0 * np.exp(t)) <= 1e-2 * m0 * np.exp(t), (path, t)


# 3 ---------------------------------------------------------------------------------------
def test_criterion_03_threshold_exactness():
    from scipy import integrate

    k = uniform_binary()
    h = homogeneous_kernel(lambda z: 2.0 * np.ones_like(z), "two")
    rng = np.random.default_rng(3)
    for y, al in zip(rng.uniform(0.01, 100.0, 20), rng.uniform(0.5, 6.0, 20)):
        exact = 2.0 / (al + 1.0)
        assert abs(k.n_alpha(y, al) / y ** al - exact) <= 1e-8
        assert abs(h.n_alpha(y, al) / y ** al - exact) <= 1e-8
        q, _ = integrate.quad(lambda x: x ** al * float(k(np.array([x]), np.array([y]))[0]), 0.0, y,
                              epsabs=0.0, epsrel=1e-12)
        assert abs(q / y ** al - exact) <= 1e-8
    a = linear_absorption()
    assert abs(threshold_alpha_tilde(k, a, SpaceKind.POWER) - 1.0) <= 1e-3
    d2 = desch_condition(k, a, shifted_space(2.0))
    assert abs(d2.L - 2.0 / 3.0) <= 1e-3 and d2.satisfied
    d1 = desch_condition(k, a, shifted_space(1.0))
    assert d1.L >= 1.0 and not d1.satisfied


# 4 ---------------------------------------------------------------------------------------
@pytest.mark.parametrize("name", ["constant", "affine", "singular_both_ends"])
def test_criterion_04_a_priori_oracles(name, rng):
    T = make_transport(name)
    base = T.lambda_bound
    for lam in (base, 2.0 * base, 10.0 * base):
        for _ in range(3):
            f = random_mixture(T.grid, rng, 1e-3, 10.0)
            p = T.oracle_pointwise(lam, f)
            s = T.oracle_smoothing(lam, f)
            assert p.slack <= 1e-6 and p.passed, (name, lam, p.slack)
            assert s.slack <= 1e-6 and s.passed, (name, lam, s.slack)


# 5 ---------------------------------------------------------------------------------------
def _flow(r):
    return CharacteristicFlow(r, classify_regime(r))


def test_criterion_05_characteristic_closed_forms(rng):
    pts = np.exp(rng.uniform(np.log(1e-3), np.log(1e3), 100))
    ts = rng.uniform(0.0, 3.0, 100)

    def close(a, b):
        return np.max(np.abs(a - b) / np.abs(b)) <= 1e-9

    c = _flow(constant_rate())
    ok = pts > ts + 1e-8
    assert close(c.backward(pts[ok], ts[ok]), pts[ok] - ts[ok])
    assert np.all(np.isnan(c.backward(pts[~ok], ts[~ok])))
    assert close(c.forward(pts, ts), pts + ts)
    assert close(c.front(ts + 1e-3), ts + 1e-3)

    lin = _flow(linear_rate())
    assert close(lin.backward(pts, ts), pts * np.exp(-ts))
    assert close(lin.forward(pts, ts), pts * np.exp(ts))

    aff = _flow(affine_rate())
    ok = (1 + pts) * np.exp(-ts) - 1 > 1e-8
    assert close(aff.backward(pts[ok], ts[ok]), (1 + pts[ok]) * np.exp(-ts[ok]) - 1)
    assert close(aff.forward(pts, ts), (1 + pts) * np.exp(ts) - 1)
    assert close(aff.front(ts + 1e-3), np.expm1(ts + 1e-3))

    s = rng.uniform(0.0, 1.5, 100)
    for fl in (c, lin, aff):
        y = fl.forward(pts, ts)
        assert close(fl.forward(fl.forward(pts, s), ts), fl.forward(pts, s + ts))
        assert close(fl.backward(y, ts), pts)


# 6 ---------------------------------------------------------------------------------------
def _random_near_zero(grid, rng, cells: int = 20):
    v = np.zeros(grid.n)
    m = rng.integers(1, cells + 1)
    v[:m] = rng.uniform(0.0, 1.0, m)
    v[rng.integers(0, m)] += 0.1
    return GridFunction(grid, v, True)


@pytest.mark.parametrize("t", [0.25, 1.0])
@pytest.mark.parametrize("alpha", [1.0, 2.0])
def test_criterion_06_transport_norms(t, alpha, rng):
    grid = build_grid(1e-4, 50.0, 512)
    T1 = TransportOperator(_flow(constant_rate()), grid, shifted_space(alpha), zero_rate())
    Tx = TransportOperator(_flow(linear_rate()), grid, power_space(alpha), zero_rate())
    fs = [_random_near_zero(grid, rng) if i % 2 == 0 else random_mixture(grid, rng, 1e-4, 1.0)
          for i in range(100)]
    emp1 = max(T1.transported_norm(t, f) / norm(f, T1.space) for f in fs)
    empx = max(Tx.transported_norm(t, f) / norm(f, Tx.space) for f in fs)
    assert abs(emp1 - (1.0 + t) ** alpha) <= 1e-3
    assert abs(empx - np.exp(alpha * t)) <= 1e-3


# 7 ---------------------------------------------------------------------------------------
@pytest.mark.parametrize("name", BUILTIN)
def test_criterion_07_resolvent_algebra(engines, name, rng):
    eng = engines(name)
    T = eng.transport
    f = random_mixture(eng.grid, rng)
    lo = eng.lambda0
    lams = (lo, lo + 1.5)
    # transport part: (lam - T) R_T f = f with T applied by finite differences
    for lam in lams:
        u = T.resolvent_T(lam, f)
        res = lam * u.values - T.generator_action(u.values) - f.values
        assert eng._norm(res) / eng._norm(f.values) <= 1e-6
    ua, ub = (T.resolvent_T(l, f) for l in lams)
    lhs = ua.values - ub.values
    rhs = (lams[1] - lams[0]) * T.resolvent_T(lams[0], ub).values
    assert eng._norm(lhs - rhs) / eng._norm(lhs) <= 1e-6
    # full generator
    for lam in lams:
        u = eng.resolvent_A(lam, f)
        assert eng.resolvent_residual(lam, u, f) <= 1e-6
    ua, ub = (eng.resolvent_A(l, f) for l in lams)
    lhs = ua.values - ub.values
    rhs = (lams[1] - lams[0]) * eng.resolvent_A(lams[0], ub).values
    assert eng._norm(lhs - rhs) / eng._norm(lhs) <= 1e-6


# 8 ---------------------------------------------------------------------------------------
@pytest.mark.parametrize("name", BUILTIN)
def test_criterion_08_cross_validation(engines, name):
    eng = engines(name)
    res = eng.apply_V(1.0, bump(eng.grid, 1.0, 0.3), cross_check=True)
    assert res.cross_check <= 5e-3


# 9 ---------------------------------------------------------------------------------------
def test_criterion_09_positivity_improving(engines, transport_only):
    eng = engines("constant")
    for c in (0.05, 1.0, 5.0):
        rep = eng.positivity_improving_check(eng.lambda0, bump(eng.grid, c, 0.05))
        assert rep.valid and rep.passed and np.isfinite(rep.min_log10), c
    control = EvolutionEngine(transport_only, uniform_binary())
    rep = control.positivity_improving_check(3.0, bump(control.grid, 1.0, 0.05))
    assert rep.valid and not rep.passed and rep.min_value == 0.0


# 10 --------------------------------------------------------------------------------------
def test_criterion_10_aeg_and_gap(engines):
    eng = engines("constant")
    ep = eng.perron_eigenpair()
    assert ep.accepted
    gap = eng.gap_proxy((0.5, 2.0), eigen=ep)
    rep = eng.aeg_diagnose(ep, bump(eng.grid, 1.0, 0.1), AEGConfig().samples(), gap=gap)
    assert rep.epsilon_fit > 0
    tail = np.array([v for _, v in rep.decay_curve[rep.transient_index:]])
    assert np.all(np.diff(tail) < 0)
    assert rep.conserved_drift <= 1e-2
    assert gap.valid and gap.proxy > 0
    assert abs(ep.lambda_star - perron_eigenvalue(256)) <= 1e-3


# 11 --------------------------------------------------------------------------------------
def _tabulated_uniform():
    xs = np.geomspace(1e-3, 1e3, 61)
    rows = [(x, y, 2.0 / y if x < y else 0.0) for x in xs for y in xs]
    return tabulated_kernel_from_triples(rows)


@pytest.mark.parametrize("kernel", [uniform_binary(), PowerLaw(nu=-0.5), _tabulated_uniform()],
                         ids=["uniform_binary", "power_law", "tabulated"])
@pytest.mark.parametrize("kind", [SpaceKind.POWER, SpaceKind.SHIFTED])
def test_criterion_11_alpha_monotony_convexity(kernel, kind):
    alphas = np.linspace(1.0, 4.0, 13)
    for y in (0.05, 1.0, 20.0):
        curve = ratio_curve(kernel, y, alphas, kind)
        assert np.all(np.diff(curve) <= 1e-12), (y, curve)
        assert np.all(np.diff(curve, 2) >= -1e-8), (y, np.diff(curve, 2))


# 12 --------------------------------------------------------------------------------------
COMMANDS = ["validate", "characteristics", "transport", "resolvent", "simulate", "threshold", "eigen", "aeg"]


def test_criterion_12_determinism(tmp_path, monkeypatch):
    monkeypatch.setenv("GFRAG_CACHE_DIR", str(tmp_path / "cache"))
    cfg = str(CONFIGS / "main_result.ini")
    outputs = []
    for rep in range(2):
        out = tmp_path / f"run{rep}"
        for cmd in COMMANDS:
            code = run([cmd, "--config", cfg, "--out", str(out), "--seed", "3"], io.StringIO(), io.StringIO())
            assert code == 0, cmd
        outputs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert outputs[0].keys() == outputs[1].keys() and len(outputs[0]) >= len(COMMANDS)
    for name in outputs[0]:
        assert outputs[0][name] == outputs[1][name], name


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
