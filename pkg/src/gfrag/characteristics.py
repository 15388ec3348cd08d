"""Characteristic curves of the growth flow ``dx/dt = r(x)``.

With ``R(x) = int_1^x dt / r(t)``:

* the forward image ``y(x, t)`` solves ``R(y) - R(x) = t``;
* the backward foot ``X(y, t)`` solves ``R(y) - R(X) = t``;
* in the partly singular regime the front ``y0(t)`` solves
  ``int_0^{y0} dt / r = t``; points below the front have no foot.

Feet that do not exist are returned as ``BELOW_FRONT`` (NaN), a value rather
than an error, because the transport formulas read them as "the solution is
zero here".
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .growth_model import GrowthRate, Regime, RegimeReport

BELOW_FRONT = float("nan")
BLOW_UP_BOUND = 1e300


class RegimeError(ValueError):
    """Operation not defined in the active regime."""


class SolverError(RuntimeError):
    """Root bracketing failed or the forward flow blew up."""


def is_below_front(X) -> np.ndarray:
    return np.isnan(np.asarray(X, dtype=float))


@dataclass(frozen=True, eq=False)
class CharacteristicFlow:
    """Characteristic flow of a growth rate in a classified regime.

    Parameters
    ----------
    r : GrowthRate
    regime : RegimeReport
    tol_x : float
        Relative tolerance on roots (default ``1e-12``).
    max_iter : int
    """

    r: GrowthRate
    regime: RegimeReport
    tol_x: float = 1e-12
    max_iter: int = 200

    def __post_init__(self):
        if self.regime.regime is Regime.NEITHER:
            raise RegimeError("growth rate fits neither singular regime; no flow is built")

    @property
    def partly_singular(self) -> bool:
        return self.regime.regime is Regime.PARTLY_SINGULAR

    # -- root finding --------------------------------------------------------
    def _solve(self, target: np.ndarray, s_start: np.ndarray, direction: int) -> np.ndarray:
        """Solve ``R(exp(s)) = target`` for ``s`` starting from a known side.

        ``direction = -1`` searches below ``s_start`` (which satisfies
        ``R >= target``); ``+1`` searches above.  Brackets grow geometrically
        and the bracketed root is polished by safeguarded Newton steps using
        ``dR/ds = x / r(x)``.
        """
        R = self.r.R
        lo = s_start.copy()
        hi = s_start.copy()
        step = np.ones_like(s_start)
        moving = np.ones(s_start.shape, dtype=bool)
        for _ in range(2000):
            if not np.any(moving):
                break
            if direction < 0:
                lo[moving] = s_start[moving] - step[moving]
                ok = R(np.exp(lo)) <= target
            else:
                hi[moving] = s_start[moving] + step[moving]
                if np.any(hi[moving] > np.log(BLOW_UP_BOUND)):
                    raise SolverError("forward characteristic exceeds the blow-up bound")
                ok = R(np.exp(hi)) >= target
            moving &= ~ok
            step[moving] *= 2.0
        else:  # pragma: no cover - guarded by monotonicity of R
            raise SolverError("could not bracket characteristic root")
        if direction < 0:
            hi = np.where(step == 1.0, s_start, s_start - step / 2.0)
        else:
            lo = np.where(step == 1.0, s_start, s_start + step / 2.0)
        s = 0.5 * (lo + hi)
        tol = self.tol_x * 1e-2
        active = np.ones(s.shape, dtype=bool)
        for _ in range(self.max_iter):
            if not np.any(active):
                break
            sa = s[active]
            x = np.exp(sa)
            f = R(x) - target[active]
            df = x / self.r(x)
            lo_a, hi_a = lo[active], hi[active]
            lo_a = np.where(f < 0, sa, lo_a)
            hi_a = np.where(f > 0, sa, hi_a)
            newton = sa - f / df
            bad = ~((newton > lo_a) & (newton < hi_a)) | ~np.isfinite(newton)
            new = np.where(bad, 0.5 * (lo_a + hi_a), newton)
            done = (np.abs(new - sa) <= tol) | (f == 0) | ((hi_a - lo_a) <= tol)
            s[active] = new
            lo[active], hi[active] = lo_a, hi_a
            idx = np.nonzero(active)[0]
            active[idx[done]] = False
        return s

    # -- public operations ---------------------------------------------------
    def backward(self, y, t):
        """Foot ``X(y, t)``; ``BELOW_FRONT`` where ``int_0^y 1/r <= t``."""
        y, t = np.broadcast_arrays(np.asarray(y, dtype=float), np.asarray(t, dtype=float))
        if np.any(t < 0):
            raise ValueError("time must be nonnegative")
        out = np.array(y, dtype=float, copy=True)
        move = t > 0
        if self.partly_singular:
            below = move & (self.r.time_from_zero(y) <= t)
            out[below] = BELOW_FRONT
            move &= ~below
        if np.any(move):
            target = self.r.R(y[move]) - t[move]
            out[move] = np.exp(self._solve(target, np.log(y[move]), -1))
        return out if out.ndim else float(out)

    def forward(self, x, t):
        """Forward image ``y(x, t) >= x``."""
        x, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
        if np.any(t < 0):
            raise ValueError("time must be nonnegative")
        out = np.array(x, dtype=float, copy=True)
        move = t > 0
        if np.any(move):
            target = self.r.R(x[move]) + t[move]
            out[move] = np.exp(self._solve(target, np.log(x[move]), +1))
        return out if out.ndim else float(out)

    def front(self, t):
        """Front ``y0(t)`` with ``int_0^{y0} 1/r = t`` (partly singular regime only)."""
        if not self.partly_singular:
            raise RegimeError("the front exists only in the partly singular regime")
        t = np.asarray(t, dtype=float)
        if np.any(t <= 0):
            raise ValueError("front needs t > 0")
        target = t - self.r.R_zero()
        s0 = np.zeros(t.shape)
        above = target >= self.r.R(np.ones(t.shape))
        out = np.empty(t.shape)
        if np.any(above):
            out[above] = np.exp(self._solve(target[above], s0[above], +1))
        if np.any(~above):
            out[~above] = np.exp(self._solve(target[~above], s0[~above], -1))
        return out if out.ndim else float(out)

    def jacobian(self, y, t):
        """``dX/dy = r(X(y, t)) / r(y)``; NaN below the front."""
        X = np.asarray(self.backward(y, t), dtype=float)
        y = np.broadcast_to(np.asarray(y, dtype=float), X.shape)
        out = np.full(X.shape, np.nan)
        ok = ~np.isnan(X)
        out[ok] = self.r(X[ok]) / self.r(y[ok])
        return out if out.ndim else float(out)

    def travel_time(self, x0, x1):
        """``int_{x0}^{x1} dt / r``."""
        return self.r.R(np.asarray(x1, dtype=float)) - self.r.R(np.asarray(x0, dtype=float))
