"""Closed-form helpers shared by growth and absorption rates."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PowerSum:
    """``x -> sum_i c_i * x**q_i`` with nonnegative coefficients."""

    terms: tuple[tuple[float, float], ...]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for c, q in self.terms:
            out = out + c * x ** q
        return out

    def divided_primitive(self, k: float, p: float):
        """Antiderivative from 1 of ``self(x) / (k x**p)``."""
        parts = [(c / k, q - p + 1.0) for c, q in self.terms]

        def prim(x):
            x = np.asarray(x, dtype=float)
            out = np.zeros(x.shape)
            for c, e in parts:
                if abs(e) < 1e-14:
                    out = out + c * np.log(x)
                else:
                    out = out + c * (x ** e - 1.0) / e
            return out

        return prim


def geometric_limit(values: np.ndarray) -> tuple[float, float]:
    """Extrapolate a sequence with geometrically shrinking increments.

    Returns ``(limit, ratio)`` where ``ratio`` is the last increment ratio.
    ``limit`` is ``inf`` (in the direction of growth) when increments do not
    shrink.
    """
    v = np.asarray(values, dtype=float)
    d = np.diff(v)
    if d.size < 2 or d[-1] == 0.0:
        return float(v[-1]), 0.0
    if d[-2] == 0.0:
        return float(v[-1]), np.inf
    rho = d[-1] / d[-2]
    if rho >= 1.0 - 1e-9:
        return float(np.sign(d[-1]) * np.inf), float(rho)
    if rho <= 0.0:
        return float(v[-1]), float(rho)
    return float(v[-1] + d[-1] * rho / (1.0 - rho)), float(rho)
