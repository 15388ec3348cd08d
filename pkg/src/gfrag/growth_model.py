"""Growth rates r(x): builtin families, primitives and regime classification.

The primitive ``R(x) = int_1^x dt / r(t)`` drives the characteristic flow.
Two structural regimes matter:

* ``PartlySingular``: ``int_0^1 1/r`` finite and ``int_1^inf 1/r`` infinite.
  Characteristics leave the origin in finite time, so a front exists.
* ``FullySingular``: both integrals infinite.  No front exists.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

from ._primitive import CachedPrimitive
from ._rates import geometric_limit

DEFAULT_PROBE = (1e-6, 1e6, 2001)
DIVERGENCE_THRESHOLD = 1e6


class Regime(str, enum.Enum):
    PARTLY_SINGULAR = "PartlySingular"
    FULLY_SINGULAR = "FullySingular"
    NEITHER = "Neither"


class InconclusiveClassification(RuntimeError):
    """The numeric evidence does not settle convergence of an improper integral."""


@dataclass(frozen=True, eq=False)
class GrowthRate:
    """A strictly positive growth rate with optional closed-form primitive.

    Parameters
    ----------
    eval : callable
        Vectorised ``r(x)``.
    name : str
        Label used in reports.
    primitive_hint : callable, optional
        Closed form of ``int_1^x dt / r(t)``.
    zero_mass : float, optional
        Closed form of ``int_0^1 dt / r(t)`` (``inf`` when divergent).
    power : (k, p), optional
        Set when ``r(x) = k * x**p``; enables closed-form absorption integrals.
    spec : dict
        Serialisable description (used for hashing and reports).
    """

    eval: Callable
    name: str
    primitive_hint: Callable | None = None
    zero_mass: float | None = None
    power: tuple[float, float] | None = None
    spec: dict = field(default_factory=dict)
    tabulated: bool = False
    _cache: dict = field(default_factory=dict, repr=False)

    def __call__(self, x):
        return np.asarray(self.eval(np.asarray(x, dtype=float)), dtype=float) * np.ones(np.shape(x))

    # -- primitives ---------------------------------------------------------
    def _numeric(self) -> CachedPrimitive:
        if "prim" not in self._cache:
            self._cache["prim"] = CachedPrimitive(lambda x: 1.0 / self(x))
        return self._cache["prim"]

    def use_primitive_table(self, table: dict) -> None:
        """Install a stored table for the numeric primitive (see :meth:`CachedPrimitive.table`)."""
        self._cache["prim"] = CachedPrimitive(lambda x: 1.0 / self(x), table)

    def R(self, x) -> np.ndarray:
        """``int_1^x dt / r(t)`` (vectorised)."""
        x = np.asarray(x, dtype=float)
        if self.primitive_hint is not None:
            return np.asarray(self.primitive_hint(x), dtype=float) * np.ones(x.shape)
        return self._numeric()(x)

    def R_zero(self) -> float:
        """``int_0^1 dt / r(t)``, ``inf`` when the integral diverges."""
        if self.zero_mass is not None:
            return float(self.zero_mass)
        lim = self._numeric().limit_at_zero()
        return float(-lim) if np.isfinite(lim) else np.inf

    def time_from_zero(self, x) -> np.ndarray:
        """``int_0^x dt / r(t)``: the time a characteristic needs to reach ``x``."""
        return self.R_zero() + self.R(x)

    def fingerprint(self) -> str:
        import hashlib
        import json

        return hashlib.sha256(json.dumps(self.spec, sort_keys=True, default=str).encode()).hexdigest()[:16]


def primitive(r: GrowthRate, base: float, x) -> np.ndarray:
    """``int_base^x dt / r(t)``; ``base = 0`` means the limit from the origin."""
    x = np.asarray(x, dtype=float)
    if base == 0:
        return r.time_from_zero(x)
    return r.R(x) - r.R(np.asarray(base, dtype=float))


# -- builtin families --------------------------------------------------------

def constant_rate(c: float = 1.0) -> GrowthRate:
    c = float(c)
    _positive(c)
    return GrowthRate(lambda x: c + 0.0 * x, f"constant({c:g})",
                      primitive_hint=lambda x: (x - 1.0) / c, zero_mass=1.0 / c,
                      power=(c, 0.0), spec={"family": "constant", "c": c})


def linear_rate(k: float = 1.0) -> GrowthRate:
    k = float(k)
    _positive(k)
    return GrowthRate(lambda x: k * x, f"linear({k:g})",
                      primitive_hint=lambda x: np.log(x) / k, zero_mass=np.inf,
                      power=(k, 1.0), spec={"family": "linear", "k": k})


def affine_rate(k: float = 1.0) -> GrowthRate:
    k = float(k)
    _positive(k)
    return GrowthRate(lambda x: k * (1.0 + x), f"affine({k:g})",
                      primitive_hint=lambda x: (np.log1p(x) - np.log(2.0)) / k,
                      zero_mass=np.log(2.0) / k, spec={"family": "affine", "k": k})


def power_rate(k: float, p: float) -> GrowthRate:
    k, p = float(k), float(p)
    _positive(k)
    if abs(p - 1.0) < 1e-14:
        return linear_rate(k)
    e = 1.0 - p
    zero = 1.0 / (k * e) if e > 0 else np.inf
    return GrowthRate(lambda x: k * x ** p, f"power({k:g},{p:g})",
                      primitive_hint=lambda x: (x ** e - 1.0) / (k * e), zero_mass=zero,
                      power=(k, p), spec={"family": "power", "k": k, "p": p})


def tabulated_rate(xs, rs) -> GrowthRate:
    """Rate interpolated log-linearly (piecewise power law) through ``(x, r)`` pairs.

    The end segments are extended as power laws.  Regime classification of a
    tabulated rate is refused because it depends on that extrapolation.
    """
    xs = np.asarray(xs, dtype=float)
    rs = np.asarray(rs, dtype=float)
    order = np.argsort(xs)
    xs, rs = xs[order], rs[order]
    if xs.size < 2 or np.any(xs <= 0) or np.any(rs <= 0) or np.any(np.diff(xs) <= 0):
        raise ValueError("tabulated rate needs >= 2 distinct positive x with positive r")
    lx, lr = np.log(xs), np.log(rs)
    slopes = np.diff(lr) / np.diff(lx)

    def seg(x):
        i = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, xs.size - 2)
        return i

    def r_eval(x):
        x = np.asarray(x, dtype=float)
        i = seg(x)
        return rs[i] * (x / xs[i]) ** slopes[i]

    def seg_integral(i, a, b):
        # int_a^b dt / (rs[i] (t/xs[i])^p)
        p = slopes[i]
        e = 1.0 - p
        c = xs[i] ** p / rs[i]
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(np.abs(e) < 1e-14, c * np.log(b / a), c * (b ** e - a ** e) / np.where(np.abs(e) < 1e-14, 1.0, e))

    # cumulative primitive at table nodes, anchored at x = 1
    cum = np.zeros(xs.size)
    for j in range(1, xs.size):
        cum[j] = cum[j - 1] + float(seg_integral(j - 1, xs[j - 1], xs[j]))
    one = float(seg_integral(int(seg(np.array(1.0))), xs[int(seg(np.array(1.0)))], 1.0))
    cum_at_one = cum[int(seg(np.array(1.0)))] + one

    def prim(x):
        x = np.asarray(x, dtype=float)
        i = seg(x)
        return cum[i] + seg_integral(i, xs[i], x) - cum_at_one

    p0 = slopes[0]
    zero = (float(cum_at_one + xs[0] ** (1 - p0) * xs[0] ** p0 / rs[0] / (1 - p0)) if p0 < 1 else np.inf)
    return GrowthRate(r_eval, "tabulated", primitive_hint=prim, zero_mass=zero,
                      spec={"family": "tabulated", "x": xs.tolist(), "r": rs.tolist()}, tabulated=True)


def from_callable(func: Callable, name: str = "callable", primitive_hint=None) -> GrowthRate:
    """Wrap an arbitrary positive rate; primitives fall back to cached quadrature."""
    return GrowthRate(func, name, primitive_hint=primitive_hint, spec={"family": "callable", "name": name})


def _positive(v):
    if not (np.isfinite(v) and v > 0):
        raise ValueError(f"rate coefficient must be positive, got {v}")


# -- classification ----------------------------------------------------------

@dataclass(frozen=True)
class IntegralEvidence:
    """Outcome of a numeric convergence test of an improper integral."""

    value: float           # extrapolated value, inf when divergent
    convergent: bool
    running: float         # integral over the probe range
    increment_ratio: float
    label: str = "numeric evidence"

    def to_dict(self):
        return {"value": _num(self.value), "convergent": self.convergent,
                "running": _num(self.running), "increment_ratio": _num(self.increment_ratio),
                "label": self.label}


@dataclass(frozen=True)
class SupEvidence:
    value: float
    argmax: float
    at_boundary: bool

    def to_dict(self):
        return {"value": _num(self.value), "argmax": _num(self.argmax), "at_boundary": self.at_boundary}


@dataclass(frozen=True)
class RegimeReport:
    regime: Regime
    varpi: float
    c_tilde: float
    c_hat: float
    sublinear_c: float
    probe_range: tuple[float, float]
    integral_near_zero: IntegralEvidence
    integral_near_infinity: IntegralEvidence
    divergence_threshold: float
    sup_details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "regime": self.regime.value,
            "varpi": _num(self.varpi),
            "c_tilde": _num(self.c_tilde),
            "c_hat": _num(self.c_hat),
            "sublinear_c": _num(self.sublinear_c),
            "probe_range": list(self.probe_range),
            "integral_near_zero": self.integral_near_zero.to_dict(),
            "integral_near_infinity": self.integral_near_infinity.to_dict(),
            "divergence_threshold": self.divergence_threshold,
            "sup_details": {k: v.to_dict() for k, v in self.sup_details.items()},
        }


def _num(v):
    v = float(v)
    if np.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def improper_integral(g: Callable, a: float, b: float, towards: str,
                      threshold: float = DIVERGENCE_THRESHOLD) -> IntegralEvidence:
    """Convergence test for ``int g`` over ``(0, 1]`` or ``[1, inf)``.

    The integral is accumulated decade by decade from 1 towards ``a``
    (``towards="zero"``) or ``b`` (``towards="infinity"``).  Divergence is
    declared when the running value passes ``threshold`` or the per-decade
    increments stop shrinking; convergence when they shrink geometrically
    and the extrapolated total stays below ``threshold``.
    """
    from ._numerics import integrate_gl

    if towards == "zero":
        ends = 10.0 ** -np.arange(0, int(np.floor(-np.log10(a))) + 1)
    else:
        ends = 10.0 ** np.arange(0, int(np.floor(np.log10(b))) + 1)
    s_ends = np.log(ends)

    def gs(s):
        x = np.exp(s)
        return g(x) * x

    # each decade split in 64 GL panels for accuracy on smooth integrands
    lo = np.minimum(s_ends[:-1], s_ends[1:])
    hi = np.maximum(s_ends[:-1], s_ends[1:])
    sub = np.linspace(0.0, 1.0, 65)
    plo = lo[:, None] + (hi - lo)[:, None] * sub[:-1]
    phi = lo[:, None] + (hi - lo)[:, None] * sub[1:]
    decade = integrate_gl(gs, plo, phi, points=10).sum(axis=1)
    running = np.concatenate([[0.0], np.cumsum(decade)])
    if running[-1] > threshold or not np.all(np.isfinite(running)):
        return IntegralEvidence(np.inf, False, float(running[-1]), np.inf)
    inc = decade[-3:]
    if inc.size >= 3 and np.all(inc > 0):
        ratios = inc[1:] / inc[:-1]
        spread = abs(ratios[1] - ratios[0]) / max(abs(ratios[1]), 1e-300)
        if spread > 0.2 and ratios[-1] > 0.5:
            raise InconclusiveClassification(
                f"increments toward {towards} neither shrink steadily nor exceed the threshold")
    lim, rho = geometric_limit(running)
    if not np.isfinite(lim) or lim > threshold:
        return IntegralEvidence(np.inf, False, float(running[-1]), float(rho))
    return IntegralEvidence(float(lim), True, float(running[-1]), float(rho))


def sampled_sup(func: Callable, lo: float, hi: float, samples: int,
                open_lo: bool = True, open_hi: bool = True) -> SupEvidence:
    """Supremum of ``func`` on ``[lo, hi]`` by log sampling plus golden-section refinement.

    When the maximum sits at a probe boundary the sequence of values towards
    that boundary is extrapolated geometrically; steadily growing values give
    ``inf``.
    """
    s = np.linspace(np.log(lo), np.log(hi), samples)
    v = func(np.exp(s))
    i = int(np.argmax(v))
    if 0 < i < samples - 1:
        try:
            res = optimize.minimize_scalar(lambda t: -float(func(np.exp(np.array([t])))[0]),
                                           bracket=(s[i - 1], s[i], s[i + 1]), method="golden")
            if s[i - 1] <= res.x <= s[i + 1] and -res.fun >= v[i]:
                return SupEvidence(float(-res.fun), float(np.exp(res.x)), False)
        except (ValueError, RuntimeError):
            pass
        return SupEvidence(float(v[i]), float(np.exp(s[i])), False)
    if (i == 0 and not open_lo) or (i == samples - 1 and not open_hi):
        return SupEvidence(float(v[i]), float(np.exp(s[i])), False)
    # boundary maximum: look at decade-spaced values approaching the boundary
    edge = s[0] if i == 0 else s[-1]
    step = np.log(10.0) * (1 if i == 0 else -1)
    seq = func(np.exp(edge + step * np.arange(3, -1, -1)))
    lim, _ = geometric_limit(seq)
    if not np.isfinite(lim):
        return SupEvidence(np.inf, float(np.exp(edge)), True)
    return SupEvidence(float(max(lim, v[i])), float(np.exp(edge)), True)


def classify_regime(r: GrowthRate, probe=DEFAULT_PROBE,
                    divergence_threshold: float = DIVERGENCE_THRESHOLD) -> RegimeReport:
    """Classify ``r`` into the partly/fully singular regimes and compute its constants.

    Raises
    ------
    InconclusiveClassification
        For tabulated rates, or when the integral tests are inconclusive.
    """
    lo, hi, samples = probe
    if r.tabulated:
        raise InconclusiveClassification(
            "tabulated growth rates are not classified: the answer depends on extrapolation "
            "beyond the table; declare the regime explicitly")
    xs = np.exp(np.linspace(np.log(lo), np.log(hi), int(samples)))
    rv = r(xs)
    if not (np.all(np.isfinite(rv)) and np.all(rv > 0)):
        raise ValueError("growth rate must be finite and strictly positive on the probe range")
    inv = lambda x: 1.0 / r(x)  # noqa: E731
    near0 = improper_integral(inv, lo, hi, "zero", divergence_threshold)
    nearinf = improper_integral(inv, lo, hi, "infinity", divergence_threshold)
    if near0.convergent and not nearinf.convergent:
        regime = Regime.PARTLY_SINGULAR
    elif not near0.convergent and not nearinf.convergent:
        regime = Regime.FULLY_SINGULAR
    else:
        regime = Regime.NEITHER
    sups = {
        "varpi": sampled_sup(lambda z: r(z) / z, lo, hi, int(samples)),
        "c_tilde": sampled_sup(lambda z: r(z) / (1.0 + z), lo, hi, int(samples)),
        "c_hat": sampled_sup(lambda z: r(z) / z, 1.0, hi, int(samples), open_lo=False),
    }
    c_tilde = sups["c_tilde"].value
    return RegimeReport(
        regime=regime,
        varpi=sups["varpi"].value,
        c_tilde=c_tilde,
        c_hat=sups["c_hat"].value,
        # inf{C : r <= C (1 + z)} is the same supremum as c_tilde
        sublinear_c=c_tilde,
        probe_range=(float(lo), float(hi)),
        integral_near_zero=near0,
        integral_near_infinity=nearinf,
        divergence_threshold=divergence_threshold,
        sup_details=sups,
    )


def declared_report(r: GrowthRate, regime: Regime, grid_probe=(1e-6, 1e6, 2001)) -> RegimeReport:
    """Regime report for a user-declared regime (used for tabulated rates).

    Constants are still measured on the probe range; integral evidence is
    marked as declared.
    """
    lo, hi, samples = grid_probe
    declared = IntegralEvidence(np.nan, regime is Regime.PARTLY_SINGULAR, np.nan, np.nan, "declared")
    declared_inf = IntegralEvidence(np.inf, False, np.nan, np.nan, "declared")
    sups = {
        "varpi": sampled_sup(lambda z: r(z) / z, lo, hi, int(samples)),
        "c_tilde": sampled_sup(lambda z: r(z) / (1.0 + z), lo, hi, int(samples)),
        "c_hat": sampled_sup(lambda z: r(z) / z, 1.0, hi, int(samples), open_lo=False),
    }
    return RegimeReport(Regime(regime), sups["varpi"].value, sups["c_tilde"].value,
                        sups["c_hat"].value, sups["c_tilde"].value, (float(lo), float(hi)),
                        declared, declared_inf, DIVERGENCE_THRESHOLD, sups)
