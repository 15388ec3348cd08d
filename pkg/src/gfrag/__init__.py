"""Numerics for linear growth-fragmentation semigroups in weighted L1 spaces.

Modules
-------
weighted_space
    Moment spaces, the truncated log grid and grid functions.
growth_model
    Growth rates, their primitives and the regime classification.
characteristics
    Characteristic curves of the transport part.
transport
    Transport semigroup, its resolvent and a priori estimates.
fragmentation
    Absorption rates, fragmentation kernels and the operator ``B``.
thresholds
    Desch smallness test, moment thresholds and sublevel thinness.
evolution_spectral
    Full semigroup, resolvent, Perron eigenpair and growth diagnostics.
cli_io
    Scenario files, command-line interface and report emission.
"""
from .evolution_spectral import EvolutionEngine, build_engine
from .fragmentation import uniform_binary
from .growth_model import classify_regime
from .transport import TransportOperator
from .weighted_space import GridFunction, build_grid, power_space, shifted_space

__all__ = [
    "EvolutionEngine",
    "GridFunction",
    "TransportOperator",
    "build_engine",
    "build_grid",
    "classify_regime",
    "power_space",
    "shifted_space",
    "uniform_binary",
]

__version__ = "0.1.0"
