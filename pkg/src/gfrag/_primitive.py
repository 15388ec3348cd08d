"""Cached antiderivatives of positive rate functions on the half line.

``CachedPrimitive(g)`` tabulates ``G(x) = int_1^x g`` on a fine uniform grid
in ``s = log x`` using Gauss-Legendre panels, anchored at ``x = 1`` and
accumulated outward so that values near the anchor carry no roundoff from
distant panels.  Queries between table points add one more Gauss-Legendre
panel.  Queries beyond the table extrapolate the integrand as a power law.
"""
from __future__ import annotations

import numpy as np

from ._numerics import gauss_legendre

S_SPAN = 32.0         # table covers s in [-S_SPAN, S_SPAN]
PANELS_PER_UNIT = 32  # panel width 1/32 in s
GL_POINTS = 10


class CachedPrimitive:
    """Tabulated antiderivative ``G(x) = int_1^x g(t) dt``.

    Parameters
    ----------
    g : callable
        Nonnegative integrand, vectorised over numpy arrays.
    """

    def __init__(self, g, table: dict | None = None):
        self.g = g
        if table is not None:
            self._restore(table)
            return
        m = int(round(2 * S_SPAN * PANELS_PER_UNIT))
        self.edges_s = np.linspace(-S_SPAN, S_SPAN, m + 1)
        mid = m // 2  # index of s = 0
        xg, wg = gauss_legendre(GL_POINTS)
        h = self.edges_s[1] - self.edges_s[0]
        pts = self.edges_s[:-1, None] + h * xg
        vals = self._gs(pts)
        panel = h * (vals @ wg)
        cum = np.zeros(m + 1)
        cum[mid + 1:] = np.cumsum(panel[mid:])
        cum[:mid] = -np.cumsum(panel[:mid][::-1])[::-1]
        self.cum = cum
        self.h = h
        # power-law exponents of g at both table ends for extrapolation
        lo = self.edges_s[:2]
        hi = self.edges_s[-2:]
        glo = self.g(np.exp(lo))
        ghi = self.g(np.exp(hi))
        with np.errstate(divide="ignore", invalid="ignore"):
            self.k_lo = float(np.diff(np.log(glo))[0] / h) if np.all(glo > 0) else 0.0
            self.k_hi = float(np.diff(np.log(ghi))[0] / h) if np.all(ghi > 0) else 0.0

    def table(self) -> dict:
        """Arrays that reproduce this primitive exactly via ``CachedPrimitive(g, table)``."""
        return {"edges_s": self.edges_s.copy(), "cum": self.cum.copy(),
                "tails": np.array([self.h, self.k_lo, self.k_hi])}

    def _restore(self, table: dict):
        edges = np.asarray(table["edges_s"], dtype=float)
        cum = np.asarray(table["cum"], dtype=float)
        tails = np.asarray(table["tails"], dtype=float)
        if edges.shape != cum.shape or tails.shape != (3,) or not np.all(np.isfinite(cum)):
            raise ValueError("primitive table is malformed")
        self.edges_s, self.cum = edges, cum
        self.h, self.k_lo, self.k_hi = (float(v) for v in tails)

    def _gs(self, s):
        x = np.exp(s)
        return self.g(x) * x

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        shape = x.shape
        s = np.log(x).ravel()
        out = np.empty_like(s)
        inside = (s >= -S_SPAN) & (s <= S_SPAN)
        if np.any(inside):
            si = s[inside]
            idx = np.clip(((si + S_SPAN) / self.h).astype(int), 0, self.cum.size - 2)
            base = self.edges_s[idx]
            xg, wg = gauss_legendre(GL_POINTS)
            span = si - base
            pts = base[:, None] + span[:, None] * xg
            out[inside] = self.cum[idx] + span * (self._gs(pts) @ wg)
        below = s < -S_SPAN
        if np.any(below):
            out[below] = self.cum[0] - self._tail(s[below], -S_SPAN, -S_SPAN, self.k_lo)
        above = s > S_SPAN
        if np.any(above):
            out[above] = self.cum[-1] + self._tail(S_SPAN, s[above], S_SPAN, self.k_hi)
        return out.reshape(shape)

    def _tail(self, s0, s1, ref, k):
        """``int_{s0}^{s1}`` of ``g(e^s) e^s`` extrapolated as a power law from ``ref``."""
        gref = float(self._gs(np.array(ref)))
        e = k + 1.0
        s0 = np.asarray(s0, dtype=float)
        s1 = np.asarray(s1, dtype=float)
        if abs(e) < 1e-12:
            return gref * (s1 - s0)
        return gref * (np.exp(e * (s1 - ref)) - np.exp(e * (s0 - ref))) / e

    def limit_at_zero(self) -> float:
        """``G(0+)`` if the extrapolated integral converges, else ``-inf``."""
        if self.k_lo + 1.0 <= 0:
            return -np.inf
        gref = float(self._gs(np.array(-S_SPAN)))
        return float(self.cum[0] - gref / (self.k_lo + 1.0))

    def limit_at_infinity(self) -> float:
        if self.k_hi + 1.0 >= 0:
            return np.inf
        gref = float(self._gs(np.array(S_SPAN)))
        return float(self.cum[-1] - gref / (self.k_hi + 1.0))
