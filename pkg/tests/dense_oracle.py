"""Independent dense discretization of the constant-growth scenario.

``A u = -u' - x u + 2 int_x^L u(y) dy`` (``r = 1``, ``a = x``, ``b = 2 / y``)
on a uniform grid over ``[0, L]`` with ``u(0) = 0``.  Derivatives use
fourth-order differences and the tail integrals composite Simpson rules.
Nothing here is shared with the package.
"""
from __future__ import annotations

import numpy as np
from scipy import linalg

CENTRED = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0          # offsets -2..2
LEFT = np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0           # offsets -1..3
RIGHT = -LEFT[::-1]                                              # offsets -3..1
END = np.array([3.0, -16.0, 36.0, -48.0, 25.0]) / 12.0          # offsets -4..0


def _simpson_tail_weights(m: int, h: float) -> np.ndarray:
    """Weights over ``m + 1`` equispaced samples for the integral across them.

    Even interval counts use Simpson's rule; odd counts start with the
    three-interval 3/8 rule.  A single interval falls back to the trapezoid.
    """
    w = np.zeros(m + 1)
    if m == 0:
        return w
    if m == 1:
        return np.array([0.5, 0.5]) * h
    start = 0
    if m % 2 == 1:
        w[:4] += np.array([3.0, 9.0, 9.0, 3.0]) * h / 8.0
        start = 3
    for j in range(start, m, 2):
        w[j:j + 3] += np.array([1.0, 4.0, 1.0]) * h / 3.0
    return w


def assemble(n: int = 256, length: float = 12.0) -> tuple[np.ndarray, np.ndarray]:
    """Dense matrix of ``A`` on the interior nodes ``x_1 .. x_n`` and the nodes."""
    h = length / n
    x = h * np.arange(n + 1)          # x_0 = 0 carries the boundary value 0
    D = np.zeros((n + 1, n + 1))
    for i in range(1, n + 1):
        if i == 1:
            D[i, 0:5] = LEFT
        elif i <= n - 2:
            D[i, i - 2:i + 3] = CENTRED
        elif i == n - 1:
            D[i, i - 3:i + 2] = RIGHT
        else:
            D[i, i - 4:i + 1] = END
    D /= h
    K = np.zeros((n + 1, n + 1))
    for i in range(1, n + 1):
        K[i, i:] = 2.0 * _simpson_tail_weights(n - i, h)
    A = -D - np.diag(x) + K
    return A[1:, 1:], x[1:]


def perron_eigenvalue(n: int = 256, length: float = 12.0) -> float:
    """Rightmost real eigenvalue whose eigenvector has one sign."""
    A, _ = assemble(n, length)
    vals, vecs = linalg.eig(A)
    order = np.argsort(-vals.real)
    for k in order:
        if abs(vals[k].imag) > 1e-8:
            continue
        v = vecs[:, k].real
        v = v / v[np.argmax(np.abs(v))]
        if np.all(v > -1e-8):
            return float(vals[k].real)
    raise RuntimeError("no positive eigenvector found")
