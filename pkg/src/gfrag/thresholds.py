"""Moment-ratio analysis behind the generation and compactness hypotheses.

The fragmentation operator is a small perturbation of the transport
generator when the filtered upper limit

``L = lim_{c -> inf} sup_{a(y) >= c} ratio(y)``

is below 1, where ``ratio = n_{1,alpha}(y) / (1+y)**alpha`` in ``X_{0,alpha}``
and ``n_alpha(y) / y**alpha`` in ``X_alpha``.  Upper limits cannot be computed
from samples, so every estimate here carries the probe range it used and an
independent tail extrapolation.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, optimize

from .fragmentation import AbsorptionRate, Kernel, corroborate_flags
from .growth_model import GrowthRate, Regime, _num
from .weighted_space import SpaceKind, WeightedSpace

DEFAULT_SCHEDULE = (1.0, 10.0, 100.0, 1e3, 1e4)
DEFAULT_PROBE = (1e-6, 1e6, 481)
DEFAULT_MARGIN = 1e-3
ALPHA_TOL = 1e-3
ALPHA_MAX = 64.0


class EmptyFiltrationWarning(UserWarning):
    """The largest cutoff leaves no probe point with ``a(y) >= c``."""


class BracketError(ValueError):
    """Ratio limits are not monotone in ``alpha``; the kernel data are invalid."""


def _probe_points(probe) -> np.ndarray:
    lo, hi, m = probe
    return np.exp(np.linspace(np.log(lo), np.log(hi), int(m)))


# -- filtered upper limit -------------------------------------------------------

@dataclass(frozen=True)
class FilteredLimsup:
    """Estimate of ``lim_c sup_{a >= c} g`` with its provenance."""

    L: float
    sup_curve: tuple[tuple[float, float], ...]
    empty: bool
    extrapolated: bool
    probe_range: tuple[float, float]


def _aitken(v: Sequence[float]) -> tuple[float, bool]:
    """Limit of the last three values when their differences shrink geometrically."""
    if len(v) < 3:
        return float(v[-1]), False
    v1, v2, v3 = v[-3:]
    d1, d2 = v2 - v1, v3 - v2
    if d1 == 0.0 or d2 == 0.0 or abs(d2) >= abs(d1) or np.sign(d1) != np.sign(d2):
        return float(v3), False
    return float(v3 - d2 * d2 / (d2 - d1)), True


def filtered_limsup(g: Callable, a: AbsorptionRate, schedule=DEFAULT_SCHEDULE,
                    probe=DEFAULT_PROBE) -> FilteredLimsup:
    """Estimate ``lim_{c -> inf} sup {g(y) : a(y) >= c}`` on a log probe.

    Parameters
    ----------
    g : callable
        Vectorised function of ``y``.
    a : AbsorptionRate
    schedule : sequence of float
        Increasing cutoffs ``c``.
    probe : (lo, hi, samples)

    Returns
    -------
    FilteredLimsup
        ``L`` is the value at the largest cutoff with a nonempty set,
        extrapolated over the last three cutoffs when the sequence contracts.
        The supremum curve is non-increasing by construction since every
        supremum is taken over a subset of the same samples.
    """
    c = np.asarray(schedule, dtype=float)
    if c.size == 0 or np.any(np.diff(c) <= 0):
        raise ValueError("cutoff schedule must be nonempty and increasing")
    ys = _probe_points(probe)
    av = a(ys)
    gv = np.asarray(g(ys), dtype=float) * np.ones(ys.shape)
    curve = []
    empty = False
    for cc in c:
        mask = av >= cc
        if not np.any(mask):
            empty = True
            break
        curve.append((float(cc), float(np.max(gv[mask]))))
    if empty:
        warnings.warn(f"cutoff {cc:g} leaves no probe point with a(y) >= c; "
                      "the filtration is empty on the probe range", EmptyFiltrationWarning, stacklevel=2)
    if not curve:
        return FilteredLimsup(float("nan"), (), True, False, (float(probe[0]), float(probe[1])))
    L, extrap = _aitken([v for _, v in curve])
    # the limit of a non-increasing sequence cannot exceed its last term
    L = min(L, curve[-1][1])
    return FilteredLimsup(float(L), tuple(curve), empty, extrap, (float(probe[0]), float(probe[1])))


def tail_limit(g: Callable, probe=DEFAULT_PROBE) -> tuple[float, float]:
    """Fit ``g(y) = L + m / (1 + y)`` on the top probe decade; returns ``(L, rms residual)``."""
    hi = probe[1]
    ys = np.exp(np.linspace(np.log(hi / 10.0), np.log(hi), 21))
    gv = np.asarray(g(ys), dtype=float) * np.ones(ys.shape)
    A = np.stack([np.ones_like(ys), 1.0 / (1.0 + ys)], axis=1)
    coef, *_ = np.linalg.lstsq(A, gv, rcond=None)
    res = float(np.sqrt(np.mean((A @ coef - gv) ** 2)))
    return float(coef[0]), res


# -- Desch condition ------------------------------------------------------------

def ratio_function(k: Kernel, space: WeightedSpace) -> Callable:
    """Moment ratio whose filtered upper limit is the Desch quantity of ``space``."""
    alpha = space.alpha
    if space.kind is SpaceKind.POWER:
        return lambda y: np.asarray(k.n_alpha(y, alpha), dtype=float) / np.asarray(y) ** alpha
    return lambda y: np.asarray(k.n_one_alpha(y, alpha), dtype=float) / (1.0 + np.asarray(y)) ** alpha


@dataclass(frozen=True)
class DeschReport:
    """Outcome of the Desch smallness test in one space.

    ``satisfied`` means ``L < 1 - margin`` and the test is neither
    unsatisfiable nor inconclusive.
    """

    space: WeightedSpace
    L: float
    satisfied: bool
    c_schedule: tuple[float, ...]
    sup_curve: tuple[tuple[float, float], ...]
    margin: float = DEFAULT_MARGIN
    tail_estimate: float = float("nan")
    tail_residual: float = float("nan")
    extrapolated: bool = False
    inconclusive: bool = False
    unsatisfiable: bool = False
    bounded_absorption: bool = False
    facts: tuple[str, ...] = ()
    probe_range: tuple[float, float] = (DEFAULT_PROBE[0], DEFAULT_PROBE[1])

    def to_dict(self) -> dict:
        return {
            "space": self.space.to_dict(),
            "L": _num(self.L),
            "satisfied": self.satisfied,
            "margin": self.margin,
            "c_schedule": list(self.c_schedule),
            "sup_curve": [[c, _num(v)] for c, v in self.sup_curve],
            "tail_estimate": _num(self.tail_estimate),
            "tail_residual": _num(self.tail_residual),
            "extrapolated": self.extrapolated,
            "inconclusive": self.inconclusive,
            "unsatisfiable": self.unsatisfiable,
            "bounded_absorption": self.bounded_absorption,
            "facts": list(self.facts),
            "probe_range": list(self.probe_range),
        }


def default_schedule(a: AbsorptionRate, probe=DEFAULT_PROBE) -> tuple[float, ...]:
    """Geometric cutoffs ``1, 10, ..., 1e4`` clipped to ``sup a`` on the probe."""
    sup_a = float(np.max(a(_probe_points(probe))))
    kept = tuple(c for c in DEFAULT_SCHEDULE if c <= sup_a)
    return kept


def _a_unbounded_at_zero(a: AbsorptionRate, probe) -> bool:
    ev = corroborate_flags(a, (probe[0], probe[1]))["unbounded_at_zero"]
    return bool(a.unbounded_at_zero or ev["sampled_growth"])


def _a_bounded(a: AbsorptionRate, probe) -> bool:
    ev = corroborate_flags(a, (probe[0], probe[1]))
    return not (a.unbounded_at_zero or a.unbounded_at_infinity
                or ev["unbounded_at_zero"]["sampled_growth"]
                or ev["unbounded_at_infinity"]["sampled_growth"])


def desch_condition(k: Kernel, a: AbsorptionRate, space: WeightedSpace, margin: float = DEFAULT_MARGIN,
                    schedule=None, probe=DEFAULT_PROBE) -> DeschReport:
    """Estimate the Desch quantity ``L`` for ``k`` and ``a`` in ``space``.

    Besides the estimate, two structural facts are applied in the shifted
    space: for ``alpha <= 1`` the upper limit is at least 1, and when ``a``
    is unbounded at zero the condition cannot hold.  A bounded ``a`` makes
    ``B`` bounded, so the filtration is empty and ``L = 0``.
    """
    rng = (float(probe[0]), float(probe[1]))
    if _a_bounded(a, probe):
        return DeschReport(space, 0.0, True, (), (), margin, bounded_absorption=True,
                           facts=("a is bounded, so B is bounded and no smallness is needed",),
                           probe_range=rng)
    sched = tuple(schedule) if schedule is not None else default_schedule(a, probe)
    g = ratio_function(k, space)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EmptyFiltrationWarning)
        est = filtered_limsup(g, a, sched, probe)
    L = est.L
    facts = []
    unsatisfiable = False
    if space.kind is SpaceKind.SHIFTED:
        if space.alpha <= 1.0:
            facts.append("shifted weight with alpha <= 1: the ratio upper limit is at least 1")
            L = max(L, 1.0)
        if _a_unbounded_at_zero(a, probe):
            facts.append("a is unbounded at zero: the shifted-weight condition cannot hold")
            unsatisfiable = True
    tail, resid = (float("nan"), float("nan"))
    if a.unbounded_at_infinity:
        tail, resid = tail_limit(g, probe)
    inconclusive = bool(L >= 1.0 - margin and np.isfinite(tail) and tail < 1.0 - margin and not unsatisfiable
                        and not (space.kind is SpaceKind.SHIFTED and space.alpha <= 1.0))
    satisfied = bool(L < 1.0 - margin and not unsatisfiable and not inconclusive)
    return DeschReport(space, float(L), satisfied, sched, est.sup_curve, margin, tail, resid,
                       est.extrapolated, inconclusive, unsatisfiable, False, tuple(facts), rng)


# -- thresholds -----------------------------------------------------------------

@dataclass(frozen=True)
class ThresholdReport:
    alpha_tilde: float
    eta: float
    alpha_probes: tuple[tuple[float, float], ...]
    space_kind: SpaceKind = SpaceKind.POWER
    eta_interval: tuple[float, float] = (float("nan"), float("nan"))
    tolerance: float = ALPHA_TOL

    def to_dict(self) -> dict:
        return {
            "alpha_tilde": _num(self.alpha_tilde),
            "eta": _num(self.eta),
            "eta_interval": [_num(v) for v in self.eta_interval],
            "alpha_probes": [[a, _num(v)] for a, v in self.alpha_probes],
            "space_kind": SpaceKind(self.space_kind).value,
            "tolerance": self.tolerance,
        }


def _L_of_alpha(k, a, kind, probe, margin):
    def L(alpha):
        return desch_condition(k, a, WeightedSpace(kind, alpha), margin, probe=probe).L
    return L


def threshold_alpha_tilde(k: Kernel, a: AbsorptionRate, space_kind=SpaceKind.POWER,
                          tol: float = ALPHA_TOL, probe=DEFAULT_PROBE, margin: float = DEFAULT_MARGIN,
                          return_probes: bool = False):
    """Smallest ``alpha`` at which the Desch quantity drops below 1.

    Bisection on ``L(alpha) - 1`` over ``[1, alpha_hi]``; conservative kernels
    have ``L(1) = 1`` so the threshold is at least 1.  Returns ``inf`` when
    ``L`` stays at or above 1 up to ``ALPHA_MAX`` and a fit of ``L`` against
    ``1 / alpha`` does not dip below 1 either.

    Raises
    ------
    BracketError
        When the sampled ``L(alpha)`` increases, which no valid kernel allows.
    """
    kind = SpaceKind(space_kind)
    L = _L_of_alpha(k, a, kind, probe, margin)
    probes = []
    alphas = [1.0, 1.5, 2.0, 4.0, 8.0, 16.0, 32.0, ALPHA_MAX]
    hi = None
    for al in alphas:
        v = L(al)
        if probes and v > probes[-1][1] + 1e-6 * max(1.0, abs(probes[-1][1])):
            raise BracketError(f"L(alpha) increases between alpha={probes[-1][0]:g} and {al:g}")
        probes.append((al, float(v)))
        if v < 1.0:
            hi = al
            break
    if hi is None:
        inv = np.array([1.0 / p[0] for p in probes[-3:]])
        vals = np.array([p[1] for p in probes[-3:]])
        slope, intercept = np.polyfit(inv, vals, 1)
        result = float("inf") if intercept >= 1.0 else float("nan")
        if not np.isfinite(result):
            # extrapolation dips below 1 beyond the probes: report the last probe as a lower bound
            result = ALPHA_MAX
        return (result, tuple(probes)) if return_probes else result
    lo = probes[-2][0] if len(probes) > 1 else 1.0
    if hi == 1.0:
        res = 1.0
    else:
        while hi - lo > tol / 4:
            mid = 0.5 * (lo + hi)
            v = L(mid)
            probes.append((mid, float(v)))
            if v < 1.0:
                hi = mid
            else:
                lo = mid
        res = hi
    # thresholds within tolerance of 1 are reported as exactly 1 (L(1) = 1 by conservation)
    if res - 1.0 <= tol:
        res = 1.0 if res - 1.0 <= tol / 2 else res
    probes = tuple(sorted(probes))
    return (float(res), probes) if return_probes else float(res)


def eta_estimate(k: Kernel, probe=(1e2, 1e6, 41)) -> tuple[float, tuple[float, float]]:
    """Polynomial growth exponent of ``n_0`` at infinity, floored at 1.

    Returns ``(eta, (low, high))``: the least-squares slope of ``log n_0``
    against ``log(1 + y)`` on the tail probe, and the slopes on its lower and
    upper halves as an uncertainty interval.  Infinite ``n_0`` or a slope
    that keeps growing from one half to the next gives ``inf``.
    """
    ys = _probe_points(probe)
    n0 = np.asarray(k.n_zero(ys), dtype=float) * np.ones(ys.shape)
    if not np.all(np.isfinite(n0)):
        return float("inf"), (float("inf"), float("inf"))
    lx = np.log1p(ys)
    ln = np.log(n0)
    slope = float(np.polyfit(lx, ln, 1)[0])
    h = ys.size // 2
    s_lo = float(np.polyfit(lx[:h + 1], ln[:h + 1], 1)[0])
    s_hi = float(np.polyfit(lx[h:], ln[h:], 1)[0])
    if s_hi > 2.0 * max(s_lo, 0.5) and s_hi - s_lo > 1.0:
        return float("inf"), (s_lo, float("inf"))
    return max(1.0, slope), (max(1.0, min(s_lo, s_hi)), max(1.0, s_lo, s_hi))


def threshold_report(k: Kernel, a: AbsorptionRate, space_kind=SpaceKind.POWER, tol: float = ALPHA_TOL,
                     probe=DEFAULT_PROBE, margin: float = DEFAULT_MARGIN) -> ThresholdReport:
    at, probes = threshold_alpha_tilde(k, a, space_kind, tol=tol, probe=probe, margin=margin, return_probes=True)
    eta, interval = eta_estimate(k)
    return ThresholdReport(at, eta, probes, SpaceKind(space_kind), interval, tol)


def ratio_curve(k: Kernel, y: float, alphas: Sequence[float], kind=SpaceKind.POWER) -> np.ndarray:
    """``alpha -> ratio(y)`` at a fixed mass ``y`` (monotony and convexity probes)."""
    return np.array([float(ratio_function(k, WeightedSpace(kind, al))(np.array([y]))[0]) for al in alphas])


# -- sublevel sets ----------------------------------------------------------------

@dataclass(frozen=True)
class SublevelVerdict:
    c: float
    verdict: str  # "finite" | "infinite" | "inconclusive"
    value: float
    detail: str

    def to_dict(self):
        return {"c": self.c, "verdict": self.verdict, "value": _num(self.value), "detail": self.detail}


def _edge_state(mask: np.ndarray) -> str:
    if np.all(mask):
        return "inside"
    if not np.any(mask):
        return "outside"
    return "mixed"


def thin_sublevel_check(a: AbsorptionRate, r: GrowthRate, regime: Regime, c_list: Sequence[float],
                        probe=(1e-6, 1e6, 1201)) -> list[SublevelVerdict]:
    """Finiteness of ``int 1_{a < c} / r`` over ``[1, inf)`` or ``(0, inf)``.

    The partly singular regime needs the integral over ``[1, inf)``, the
    fully singular one over ``(0, inf)``.  The sublevel set is located on a
    log probe.  When it still fills the outermost probe decade the tail
    integral is that of ``1 / r``, which diverges in both regimes; when it
    avoids that decade the tail contributes nothing; a decade only partly
    covered gives an inconclusive verdict.
    """
    regime = Regime(regime)
    if regime is Regime.NEITHER:
        raise ValueError("sublevel thinness is defined for the two singular regimes only")
    lo, hi, m = probe
    start = 1.0 if regime is Regime.PARTLY_SINGULAR else lo
    out = []
    for c in c_list:
        if not c > 0:
            raise ValueError("cutoffs must be positive")
        s = np.linspace(np.log(start), np.log(hi), int(m))
        xs = np.exp(s)
        mask = a(xs) < c
        per_dec = max(2, int(round((m - 1) / ((np.log(hi) - np.log(start)) / np.log(10.0)))))
        tails = [("infinity", _edge_state(mask[-per_dec:]))]
        if regime is Regime.FULLY_SINGULAR:
            tails.append(("zero", _edge_state(mask[:per_dec])))
        bad = [side for side, st in tails if st == "inside"]
        mixed = [side for side, st in tails if st == "mixed"]
        # integral over the located set, refined at sign changes of a - c
        val = 0.0
        if np.any(mask):
            edges = np.nonzero(np.diff(mask.astype(int)))[0]
            cuts = [s[0]]
            for e in edges:
                f = lambda t: float(a(np.exp(np.array([t])))[0] - c)  # noqa: E731
                try:
                    cuts.append(optimize.brentq(f, s[e], s[e + 1], xtol=1e-14))
                except ValueError:
                    cuts.append(0.5 * (s[e] + s[e + 1]))
            cuts.append(s[-1])
            for j in range(len(cuts) - 1):
                mid = 0.5 * (cuts[j] + cuts[j + 1])
                if a(np.exp(np.array([mid])))[0] < c:
                    v, _ = integrate.quad(lambda t: float(np.exp(t) / r(np.exp(np.array([t])))[0]),
                                          cuts[j], cuts[j + 1], limit=400)
                    val += v
        if bad:
            out.append(SublevelVerdict(float(c), "infinite", float("inf"),
                                       f"sublevel set fills the probe edge towards {', '.join(bad)}; "
                                       "1/r is not integrable there"))
        elif mixed:
            out.append(SublevelVerdict(float(c), "inconclusive", val,
                                       f"sublevel set partly covers the probe edge towards {', '.join(mixed)}"))
        else:
            out.append(SublevelVerdict(float(c), "finite", val, "sublevel set stays inside the probe range"))
    return out
