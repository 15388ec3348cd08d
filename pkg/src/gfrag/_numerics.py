"""Low-level quadrature and interpolation helpers on uniform index grids.

Everything here works in index units (node spacing 1); callers rescale by
the physical spacing.  The log grid of :mod:`gfrag.weighted_space` is uniform
in ``s = log x`` so these helpers apply directly in that coordinate.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import bernoulli

#: Lagrange stencil used per cell by the product-integration rule
CELL_STENCIL = 6
#: stencil nodes to the right of the cell (1 keeps the rule nearly causal)
CELL_LEAD = 1
#: number of end-correction weights in the Gregory rule (exact to degree 3)
GREGORY_ORDER = 4
#: number of nodes used to extrapolate over a half-cell end cap
CAP_POINTS = 6


@lru_cache(maxsize=None)
def gregory_end_weights(m: int = GREGORY_ORDER) -> tuple[float, ...]:
    """Left-end weights of the Gregory-corrected trapezoid rule.

    The rule ``sum_i w_i g(i)`` over nodes ``0..N`` (``N >= 2m - 1``) uses
    these ``m`` weights at each end (mirrored on the right) and 1 in the
    interior.  The corrections ``w_i - 1`` reproduce the left-end
    Euler-Maclaurin terms of every monomial of degree ``< m``, so the rule is
    exact to degree ``m - 1`` independently of ``N``.
    """
    mat = np.vander(np.arange(m, dtype=float), m, increasing=True).T
    rhs = np.zeros(m)
    rhs[0] = -0.5
    for k in range(1, m, 2):
        rhs[k] = bernoulli(k + 1)[-1] / (k + 1)
    corr = np.linalg.solve(mat, rhs)
    return tuple(float(1.0 + c) for c in corr)


def lagrange_basis(nodes: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Lagrange basis polynomials on ``nodes`` evaluated at points ``t``.

    Returns an array of shape ``t.shape + (len(nodes),)``.
    """
    nodes = np.asarray(nodes, dtype=float)
    t = np.asarray(t, dtype=float)
    out = np.ones(t.shape + (nodes.size,))
    for i, xi in enumerate(nodes):
        for j, xj in enumerate(nodes):
            if i != j:
                out[..., i] *= (t - xj) / (xi - xj)
    return out


@lru_cache(maxsize=None)
def _cap_weights(p: int) -> tuple[float, ...]:
    """Weights of ``int_{-1/2}^{0}`` of the interpolant through nodes ``0..p-1``."""
    gx, gw = np.polynomial.legendre.leggauss(16)
    t = -0.25 + 0.25 * gx
    basis = lagrange_basis(np.arange(p, dtype=float), t)
    return tuple(float(v) for v in 0.25 * gw @ basis)


@lru_cache(maxsize=None)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on ``[0, 1]``."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def integrate_gl(func, lo: np.ndarray, hi: np.ndarray, points: int = 8) -> np.ndarray:
    """Vectorised Gauss-Legendre integral of ``func`` over ``[lo, hi]``.

    ``func`` must accept an array and act elementwise.  ``lo`` and ``hi``
    broadcast together; the result has their broadcast shape.
    """
    lo, hi = np.broadcast_arrays(np.asarray(lo, dtype=float), np.asarray(hi, dtype=float))
    x, w = gauss_legendre(points)
    span = hi - lo
    pts = lo[..., None] + span[..., None] * x
    return span * (func(pts) @ w)


def cell_stencil(i: int, n: int, monotone: bool = False) -> tuple[int, int]:
    """First and last node of the interpolation stencil for cell ``i``.

    Cell ``i >= 1`` spans ``[s_{i-1}, s_i]``; cell 0 is the half cell between
    the first edge and the first node and uses node 0 alone.  ``monotone``
    selects the two cell end nodes (linear interpolation, nonnegative basis)
    instead of the high-order stencil.
    """
    if i == 0:
        return 0, 0
    if monotone:
        return i - 1, i
    j1 = min(n - 1, i + CELL_LEAD)
    j0 = max(0, j1 - CELL_STENCIL + 1)
    return j0, j1


def cell_rule_rows(s0: float, ds: float, n: int) -> np.ndarray:
    """Per-cell node weights of the interpolatory rule for ``int f(x) dx``.

    Row ``i`` holds the weights of ``int f(e^s) e^s ds`` over cell ``i``
    (see :func:`cell_stencil`) with ``f`` replaced by its Lagrange
    interpolant and ``e^s`` kept exact.
    """
    xg, wg = gauss_legendre(12)
    rows = np.zeros((n, n))
    for i in range(n):
        j0, j1 = cell_stencil(i, n)
        length = 0.5 * ds if i == 0 else ds
        right = s0 + i * ds
        sig = right - length + length * xg
        nodes = np.arange(j0, j1 + 1, dtype=float)
        basis = lagrange_basis(nodes, (sig - s0) / ds)
        rows[i, j0:j1 + 1] = (length * wg * np.exp(sig)) @ basis
    return rows


def product_rule_weights(s0: float, ds: float, n: int, right_cap: bool = True) -> np.ndarray:
    """Node weights of the cell-wise interpolatory rule for ``int f(x) dx``.

    The rule integrates ``f(e^s) e^s`` over ``[s0 - ds/2, s_{n-1}]`` (plus a
    half-cell cap at the right end) using :func:`cell_rule_rows`.  It is the
    rule implicit in the resolvent product integration, so pairings built on
    these weights are consistent with transposed resolvents.
    """
    w = cell_rule_rows(s0, ds, n).sum(axis=0)
    if right_cap:
        p = min(CAP_POINTS, n)
        cap = np.array(_cap_weights(p))[::-1] * ds
        # cap integrand f(e^s) e^s sampled at the last p nodes
        w[n - p:] += cap * np.exp(s0 + ds * np.arange(n - p, n))
    return w
