"""Weighted L1 moment spaces, the truncated log grid and grid functions.

The two spaces are ``X_alpha`` with weight ``x**alpha`` and ``X_{0,alpha}``
with weight ``(1 + x)**alpha``.  Functions on ``(0, inf)`` are sampled on a
grid covering ``[x_min, x_max]`` and treated as zero outside it.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._numerics import product_rule_weights


class DomainError(ValueError):
    """Raised when grid or space parameters violate their preconditions."""


class SpaceKind(str, enum.Enum):
    """Which weight defines the moment space."""

    POWER = "PowerWeight"      # x ** alpha
    SHIFTED = "ShiftedWeight"  # (1 + x) ** alpha


class Spacing(str, enum.Enum):
    LOG_UNIFORM = "LogUniform"
    CUSTOM = "Custom"


class Quadrature(str, enum.Enum):
    TRAPEZOID_LOG = "trapezoid-log"
    MIDPOINT = "midpoint"


@dataclass(frozen=True)
class WeightedSpace:
    """A weighted L1 space on the half line.

    Parameters
    ----------
    kind : SpaceKind
        ``POWER`` for weight ``x**alpha``, ``SHIFTED`` for ``(1+x)**alpha``.
    alpha : float
        Positive exponent.
    """

    kind: SpaceKind
    alpha: float

    def __post_init__(self):
        object.__setattr__(self, "kind", SpaceKind(self.kind))
        if not (np.isfinite(self.alpha) and self.alpha > 0):
            raise DomainError(f"alpha must be positive, got {self.alpha}")

    def weight(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind is SpaceKind.POWER:
            return x ** self.alpha
        return (1.0 + x) ** self.alpha

    @property
    def label(self) -> str:
        if self.kind is SpaceKind.POWER:
            return f"X_{self.alpha:g}"
        return f"X_0,{self.alpha:g}"

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "alpha": float(self.alpha)}


def power_space(alpha: float) -> WeightedSpace:
    return WeightedSpace(SpaceKind.POWER, alpha)


def shifted_space(alpha: float) -> WeightedSpace:
    return WeightedSpace(SpaceKind.SHIFTED, alpha)


@dataclass(frozen=True, eq=False)
class Grid:
    """Cell-centred grid on ``[x_min, x_max]``.

    Attributes
    ----------
    nodes : ndarray
        Strictly increasing node positions, one per cell.
    edges : ndarray
        ``n + 1`` cell boundaries.
    spacing : Spacing
    """

    nodes: np.ndarray
    edges: np.ndarray
    spacing: Spacing = Spacing.LOG_UNIFORM
    quadrature: Quadrature = Quadrature.TRAPEZOID_LOG
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        edges = np.asarray(self.edges, dtype=float)
        if edges.size != nodes.size + 1:
            raise DomainError("edges must have one more entry than nodes")
        if not (edges[0] > 0 and np.all(np.diff(edges) > 0)):
            raise DomainError("edges must be positive and strictly increasing")
        if not np.all((nodes > edges[:-1]) & (nodes < edges[1:])):
            raise DomainError("every node must lie strictly inside its cell")
        nodes.setflags(write=False)
        edges.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "spacing", Spacing(self.spacing))
        object.__setattr__(self, "quadrature", Quadrature(self.quadrature))
        w = self._quadrature_weights()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    # -- geometry -----------------------------------------------------------
    @property
    def n(self) -> int:
        return int(self.nodes.size)

    @property
    def x_min(self) -> float:
        return float(self.edges[0])

    @property
    def x_max(self) -> float:
        return float(self.edges[-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def log_step(self) -> float:
        """Spacing in ``s = log x`` (LogUniform grids only)."""
        self._require_log()
        return float(np.log(self.edges[1] / self.edges[0]))

    @property
    def s(self) -> np.ndarray:
        return np.log(self.nodes)

    def _require_log(self):
        if self.spacing is not Spacing.LOG_UNIFORM:
            raise DomainError("operation requires a LogUniform grid")

    def _quadrature_weights(self) -> np.ndarray:
        if self.quadrature is Quadrature.MIDPOINT or self.spacing is not Spacing.LOG_UNIFORM:
            return np.diff(self.edges).copy()
        ds = float(np.log(self.edges[1] / self.edges[0]))
        return product_rule_weights(float(np.log(self.nodes[0])), ds, self.n, right_cap=False)

    def params(self) -> dict:
        return {
            "x_min": self.x_min,
            "x_max": self.x_max,
            "n": self.n,
            "spacing": self.spacing.value,
            "quadrature": self.quadrature.value,
        }

    def fingerprint(self) -> str:
        import hashlib

        h = hashlib.sha256()
        h.update(self.edges.tobytes())
        h.update(self.quadrature.value.encode())
        return h.hexdigest()[:16]

    def with_quadrature(self, quadrature: Quadrature) -> "Grid":
        return Grid(self.nodes, self.edges, self.spacing, quadrature)


def build_grid(x_min: float, x_max: float, n: int, spacing=Spacing.LOG_UNIFORM,
               quadrature=Quadrature.TRAPEZOID_LOG, edges=None) -> Grid:
    """Build a grid on ``[x_min, x_max]`` with ``n`` cells.

    LogUniform grids have geometrically spaced edges and place each node at
    the geometric mean of its cell edges.  ``Custom`` grids take ``edges``
    explicitly and use cell midpoints.

    Raises
    ------
    DomainError
        If ``x_min <= 0``, ``x_max <= x_min`` or ``n < 8``.
    """
    if not (np.isfinite(x_min) and x_min > 0):
        raise DomainError(f"x_min must be positive, got {x_min}")
    if not (np.isfinite(x_max) and x_max > x_min):
        raise DomainError(f"x_max must exceed x_min, got {x_max} <= {x_min}")
    if int(n) != n or n < 8:
        raise DomainError(f"need at least 8 cells, got {n}")
    n = int(n)
    spacing = Spacing(spacing)
    if spacing is Spacing.LOG_UNIFORM:
        e = np.exp(np.linspace(np.log(x_min), np.log(x_max), n + 1))
        e[0], e[-1] = x_min, x_max
        nodes = np.sqrt(e[:-1] * e[1:])
    else:
        if edges is None:
            raise DomainError("Custom spacing requires explicit edges")
        e = np.asarray(edges, dtype=float)
        if e.size != n + 1 or e[0] != x_min or e[-1] != x_max:
            raise DomainError("custom edges inconsistent with x_min, x_max, n")
        nodes = 0.5 * (e[:-1] + e[1:])
    return Grid(nodes, e, spacing, quadrature)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Node values of a function on a grid.

    Parameters
    ----------
    grid : Grid
    values : ndarray
        One finite value per node.
    nonnegative : bool
        Tag asserting every value is ``>= 0``; checked on construction.
    """

    grid: Grid
    values: np.ndarray
    nonnegative: bool = False

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n,):
            raise DomainError(f"expected {self.grid.n} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DomainError("grid function values must be finite")
        if self.nonnegative and np.any(v < 0):
            raise DomainError("values tagged nonnegative contain negative entries")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_callable(cls, grid: Grid, func: Callable, nonnegative: bool = False) -> "GridFunction":
        return cls(grid, np.asarray(func(grid.nodes), dtype=float) * np.ones(grid.n), nonnegative)

    @classmethod
    def zeros(cls, grid: Grid) -> "GridFunction":
        return cls(grid, np.zeros(grid.n), True)

    def with_values(self, values, nonnegative: bool = False) -> "GridFunction":
        return GridFunction(self.grid, values, nonnegative)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


def _values(f) -> np.ndarray:
    return np.asarray(f.values if isinstance(f, GridFunction) else f, dtype=float)


def norm(f, space: WeightedSpace, grid: Grid | None = None) -> float:
    """Quadrature approximation of ``int |f(x)| weight(x) dx``.

    ``f`` is a :class:`GridFunction` or a raw array paired with ``grid``.
    """
    grid = f.grid if isinstance(f, GridFunction) else grid
    v = _values(f)
    return float(np.sum(grid.weights * np.abs(v) * space.weight(grid.nodes)))


def weighted_moment(f, w, grid: Grid | None = None) -> float:
    """Signed quadrature of ``int f(x) w(x) dx``; ``w`` is callable or an array."""
    grid = f.grid if isinstance(f, GridFunction) else grid
    wv = w(grid.nodes) if callable(w) else w
    wv = np.asarray(wv, dtype=float) * np.ones(grid.n)
    if not np.all(np.isfinite(wv)):
        raise ValueError("moment weight is not finite at every node")
    return float(np.sum(grid.weights * _values(f) * wv))


def pairing(e, f, grid: Grid | None = None) -> float:
    """Duality pairing ``<e, f> = int e f dx``."""
    grid = f.grid if isinstance(f, GridFunction) else grid
    return float(np.sum(grid.weights * _values(e) * _values(f)))


def tail_weight(func: Callable, grid: Grid, space: WeightedSpace, upper: float = np.inf) -> float:
    """Weighted mass of ``func`` outside ``[x_min, x_max]`` relative to the total.

    Used to refuse initial data whose truncation error is not negligible.
    """
    from scipy import integrate

    def integrand(x):
        return abs(float(func(np.array([x]))[0])) * float(space.weight(x))

    lo, _ = integrate.quad(integrand, 0.0, grid.x_min, limit=200)
    hi = 0.0
    if np.isinf(upper):
        hi, _ = integrate.quad(integrand, grid.x_max, np.inf, limit=400)
    inside = norm(GridFunction.from_callable(grid, func), space)
    total = lo + hi + inside
    return float((lo + hi) / total) if total > 0 else 0.0
