"""Shared scenarios for the test suite.

Every scenario uses the reference log grid on ``[1e-4, 50]`` with 512 cells
and the uniform binary kernel ``b(x, y) = 2 / y``.
"""
from __future__ import annotations

import numpy as np
import pytest

from gfrag.characteristics import CharacteristicFlow
from gfrag.evolution_spectral import EvolutionEngine
from gfrag.fragmentation import linear_absorption, uniform_binary, x_plus_inverse, zero_rate
from gfrag.growth_model import affine_rate, classify_regime, constant_rate, linear_rate
from gfrag.transport import TransportOperator
from gfrag.weighted_space import GridFunction, build_grid, power_space, shifted_space

X_MIN, X_MAX, N_REF = 1e-4, 50.0, 512

SCENARIOS = {
    # name: (growth, absorption, space)
    "linear": (linear_rate, linear_absorption, lambda: power_space(2.0)),
    "constant": (constant_rate, linear_absorption, lambda: shifted_space(2.0)),
    "affine": (affine_rate, linear_absorption, lambda: shifted_space(2.0)),
    "singular_both_ends": (linear_rate, x_plus_inverse, lambda: power_space(2.0)),
}

BUILTIN = ("linear", "constant", "affine")


def make_transport(name: str, n: int = N_REF, absorption=None) -> TransportOperator:
    r_fn, a_fn, sp_fn = SCENARIOS[name]
    r = r_fn()
    grid = build_grid(X_MIN, X_MAX, n)
    a = a_fn() if absorption is None else absorption
    return TransportOperator(CharacteristicFlow(r, classify_regime(r)), grid, sp_fn(), a)


def make_engine(name: str, n: int = N_REF, **kwargs) -> EvolutionEngine:
    return EvolutionEngine(make_transport(name, n), uniform_binary(), **kwargs)


def bump(grid, center: float, width: float = 0.1) -> GridFunction:
    """Gaussian bump in ``log x``."""
    s = np.log(grid.nodes)
    return GridFunction(grid, np.exp(-0.5 * ((s - np.log(center)) / width) ** 2), True)


def random_mixture(grid, rng: np.random.Generator, lo: float = 1e-2, hi: float = 10.0) -> GridFunction:
    """Nonnegative mixture of four log-normal bumps with centres in ``[lo, hi]``."""
    s = np.log(grid.nodes)
    centers = rng.uniform(np.log(lo), np.log(hi), 4)
    widths = rng.uniform(0.3, 0.8, 4)
    amps = rng.uniform(0.2, 1.0, 4)
    v = sum(A * np.exp(-0.5 * ((s - c) / w) ** 2) for A, c, w in zip(amps, centers, widths))
    return GridFunction(grid, v, True)


@pytest.fixture(scope="session")
def engines():
    """Lazily built engines keyed by scenario name."""
    cache: dict = {}

    def get(name: str) -> EvolutionEngine:
        if name not in cache:
            cache[name] = make_engine(name)
        return cache[name]

    return get


@pytest.fixture(scope="session")
def transport_only():
    """``r = 1`` in ``X_{0,2}`` with no absorption (and hence no fragmentation)."""
    return make_transport("constant", absorption=zero_rate())


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion (all parametrizations must pass)."""
    import re

    status: dict = {}
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            m = re.search(r"test_acceptance\.py::test_criterion_(\d+)_(\w+?)(\[|$)", getattr(rep, "nodeid", ""))
            if not m or getattr(rep, "when", "call") not in ("call", "setup"):
                continue
            key = (int(m.group(1)), m.group(2))
            ok = outcome == "passed"
            status[key] = status.get(key, True) and ok
    if not status:
        return
    terminalreporter.section("acceptance criteria")
    for (num, label), ok in sorted(status.items()):
        terminalreporter.write_line(f"criterion {num:2d} {label.replace('_', ' ')}: {'PASS' if ok else 'FAIL'}")
