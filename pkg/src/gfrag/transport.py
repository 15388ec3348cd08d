"""Transport semigroups, their resolvents and the two a priori estimates.

For the transport equation ``u_t + (r u)_x + a u = 0`` the solution along
characteristics is

``(U(t) f)(y) = r(X) f(X) / r(y) * exp(-int_X^y a / r)``, ``X = X(y, t)``,

and ``U0`` is the same formula with ``a = 0``.  Its resolvent is

``((lam - T)^{-1} f)(y) = (1 / r(y)) int_0^y exp(-int_x^y (lam + a) / r) f(x) dx``.
"""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import sparse

from ._numerics import cell_stencil, gauss_legendre, lagrange_basis
from ._primitive import CachedPrimitive
from .characteristics import CharacteristicFlow, is_below_front
from .fragmentation import AbsorptionRate, absorption_primitive, zero_rate
from .growth_model import Regime, sampled_sup
from .weighted_space import Grid, GridFunction, SpaceKind, WeightedSpace, norm

INTERP_POINTS = 6      # Lagrange stencil for off-node evaluation of f(X)
FD_ORDER = 6


class CompatibilityError(ValueError):
    """Space kind and growth regime do not admit a transport semigroup."""


class ParameterError(ValueError):
    """A spectral parameter lies below the admissible bound."""


@dataclass(frozen=True)
class OracleReport:
    """Worst-case slack of an a priori estimate (``<= 0`` means it holds)."""

    slack: float
    lam: float
    bound: float
    worst_x: float
    tolerance: float
    passed: bool

    def to_dict(self):
        return {"slack": self.slack, "lambda": self.lam, "lambda_bound": self.bound,
                "worst_x": self.worst_x, "tolerance": self.tolerance, "passed": self.passed}


@dataclass(frozen=True)
class NormReport:
    value: float
    argmax: float
    at_boundary: bool
    lower_bound: bool
    probe_range: tuple[float, float]

    def to_dict(self):
        return {"value": self.value, "argmax": self.argmax, "at_boundary": self.at_boundary,
                "lower_bound": self.lower_bound, "probe_range": list(self.probe_range)}


@dataclass(eq=False)
class TransportOperator:
    """Transport part of the generator on a log grid.

    Parameters
    ----------
    flow : CharacteristicFlow
    grid : Grid
        Must be LogUniform.
    space : WeightedSpace
    a : AbsorptionRate, optional
        Absorption; ``None`` means pure transport.
    psi_table : dict, optional
        Stored table of the numeric absorption primitive (see
        :meth:`primitive_tables`); skips rebuilding it.
    """

    flow: CharacteristicFlow
    grid: Grid
    space: WeightedSpace
    a: AbsorptionRate | None = None
    psi_table: dict | None = field(default=None, repr=False)
    _cache: OrderedDict = field(default_factory=OrderedDict, repr=False)

    def __post_init__(self):
        if self.a is None:
            self.a = zero_rate()
        rep = self.flow.regime
        if rep.regime is Regime.PARTLY_SINGULAR and self.space.kind is SpaceKind.POWER:
            raise CompatibilityError("the partly singular regime admits no transport semigroup in X_alpha; "
                                     "use the shifted weight (1+x)^alpha")
        c = self.growth_constant
        if not np.isfinite(c):
            raise CompatibilityError(f"growth constant for {self.space.label} is infinite")
        self.grid._require_log()
        self._psi = absorption_primitive(self.flow.r, self.a, self.psi_table)

    # -- constants -----------------------------------------------------------
    @property
    def growth_constant(self) -> float:
        """``varpi`` in ``X_alpha``, ``C`` (= ``C~``) in ``X_{0,alpha}``."""
        rep = self.flow.regime
        return rep.varpi if self.space.kind is SpaceKind.POWER else rep.sublinear_c

    @property
    def lambda_bound(self) -> float:
        """Generation bound ``alpha * C`` of the transport semigroup."""
        return self.space.alpha * self.growth_constant

    @property
    def r(self):
        return self.flow.r

    def psi(self, x):
        """``int_1^x a / r``."""
        return np.asarray(self._psi(np.asarray(x, dtype=float)), dtype=float)

    def primitive_tables(self) -> dict:
        """Numeric primitive tables in use, keyed ``"R"`` and ``"psi"`` (closed forms omitted)."""
        out = {}
        if isinstance(self._psi, CachedPrimitive):
            out["psi"] = self._psi.table()
        if self.r.primitive_hint is None:
            out["R"] = self.r._numeric().table()
        return out

    def _cached(self, key, build):
        if key in self._cache:
            self._cache.move_to_end(key)
            return self._cache[key]
        val = build()
        self._cache[key] = val
        if len(self._cache) > 64:
            self._cache.popitem(last=False)
        return val

    # -- semigroups ----------------------------------------------------------
    def interpolation_rows(self, X: np.ndarray):
        """Sparse rows evaluating node data at positions ``X`` (zero outside the grid)."""
        g = self.grid
        n = g.n
        ds = g.log_step
        X = np.asarray(X, dtype=float)
        inside = ~np.isnan(X)
        inside[inside] &= X[inside] >= g.x_min
        rows, cols, vals = [], [], []
        idx = np.nonzero(inside)[0]
        if idx.size:
            xi = (np.log(X[idx]) - np.log(g.nodes[0])) / ds
            j0 = np.clip(np.floor(xi).astype(int) - (INTERP_POINTS // 2 - 1), 0, n - INTERP_POINTS)
            local = xi - j0
            basis = lagrange_basis(np.arange(INTERP_POINTS, dtype=float), local)
            for l in range(INTERP_POINTS):
                rows.append(idx)
                cols.append(j0 + l)
                vals.append(basis[:, l])
        if rows:
            rows = np.concatenate(rows)
            cols = np.concatenate(cols)
            vals = np.concatenate(vals)
        return sparse.csr_matrix((vals, (rows, cols)), shape=(X.size, n))

    def transport_matrix(self, t: float, absorb: bool = True) -> sparse.csr_matrix:
        """Sparse matrix of ``f -> U(t) f`` (or ``U0`` when ``absorb`` is False) on nodes."""
        if t < 0:
            raise ValueError("time must be nonnegative")

        def build():
            y = self.grid.nodes
            if t == 0:
                return sparse.identity(self.grid.n, format="csr")
            X = np.asarray(self.flow.backward(y, np.full(y.shape, float(t))), dtype=float)
            interp = self.interpolation_rows(X)
            factor = np.zeros(y.shape)
            ok = ~is_below_front(X)
            factor[ok] = self.r(X[ok]) / self.r(y[ok])
            if absorb and not self.a.is_zero:
                factor[ok] *= np.exp(-(self.psi(y[ok]) - self.psi(X[ok])))
            return sparse.diags(factor) @ interp

        return self._cached(("U", float(t), bool(absorb)), build)

    def _apply(self, t, f: GridFunction, absorb: bool) -> GridFunction:
        vals = self.transport_matrix(t, absorb) @ f.values
        nonneg = bool(f.nonnegative or np.all(f.values >= 0))
        if nonneg:
            # high-order interpolation may undershoot next to a support edge
            vals = np.maximum(vals, 0.0)
        return GridFunction(self.grid, vals, nonneg)

    def apply_U0(self, t: float, f: GridFunction) -> GridFunction:
        """``U0(t) f`` at every node (zero below the front / outside the grid)."""
        return self._apply(t, f, absorb=False)

    def apply_U(self, t: float, f: GridFunction) -> GridFunction:
        """``U(t) f``: ``U0(t) f`` damped by ``exp(-int_X^y a/r)``."""
        return self._apply(t, f, absorb=True)

    def transported_norm(self, t: float, f: GridFunction, absorb: bool = False) -> float:
        """``||U0(t) f||`` by change of variables, ``int |f(x)| w(y(x, t)) dx``.

        Exact in the sense of mass transport: it does not resample ``f`` on the
        grid, so it stays accurate for data concentrated near ``x_min`` whose
        image is too narrow to resolve.  Mass carried beyond ``x_max`` is
        dropped, consistent with the truncated domain.
        """
        x = self.grid.nodes
        y = np.asarray(self.flow.forward(x, np.full(x.shape, float(t))), dtype=float)
        w = np.where(y <= self.grid.x_max, self.space.weight(np.minimum(y, self.grid.x_max)), 0.0)
        if absorb and not self.a.is_zero:
            w = w * np.exp(-(self.psi(y) - self.psi(x)))
        return float(np.sum(self.grid.weights * np.abs(f.values) * w))

    def operator_norm_U0(self, t: float, probe=(1e-6, 1e6, 4001)) -> NormReport:
        """``sup_x w(y(x, t)) / w(x)`` over the probe range.

        When the supremum sits at a probe boundary the value is extrapolated
        and flagged as a lower bound.
        """
        lo, hi, m = probe
        if t == 0:
            return NormReport(1.0, lo, False, False, (lo, hi))
        w = self.space.weight

        def ratio(x):
            x = np.asarray(x, dtype=float)
            y = np.asarray(self.flow.forward(x, np.full(x.shape, float(t))), dtype=float)
            return w(y) / w(x)

        ev = sampled_sup(ratio, lo, hi, int(m))
        return NormReport(float(ev.value), ev.argmax, ev.at_boundary, ev.at_boundary, (lo, hi))

    # -- resolvent -----------------------------------------------------------
    def _check_lambda(self, lam: float, bound: float | None = None):
        b = self.lambda_bound if bound is None else bound
        if not lam >= b * (1.0 - 1e-12) - 1e-300:
            raise ParameterError(f"lambda = {lam:g} lies below the admissible bound {b:g}")

    def _cell_panels(self, phase: Callable):
        """Graded Gauss-Legendre points per cell for the resolvent product integration."""
        g = self.grid
        n = g.n
        ds = g.log_step
        # cell i spans [s_{i-1}, s_i]; cell 0 is the half cell [edge_0, s_0]
        right = g.s
        length = np.full(n, ds)
        length[0] = 0.5 * ds
        phase_nodes = phase(g.nodes)
        jump = phase_nodes - phase(np.exp(right - length))
        levels = int(np.clip(np.ceil(np.log2(max(np.max(jump), 1e-3) / 0.25)), 0, 48))
        xg, wg = gauss_legendre(8)
        # panels in tau = s_i - sigma: [0, 2^-levels], [2^-levels, 2^-(levels-1)], ..., [1/2, 1]
        cuts = np.concatenate([[0.0], 2.0 ** -np.arange(levels, -1, -1)])
        tau = (cuts[:-1, None] + np.diff(cuts)[:, None] * xg).ravel()
        wt = (np.diff(cuts)[:, None] * wg).ravel()
        return right, length, tau, wt, phase_nodes

    def _phase_parts(self, phase: Callable, monotone: bool = False):
        """Cell coefficients ``C`` (sparse) for a nondecreasing phase, and the phase at nodes.

        ``C[i, j]`` integrates ``exp(-(phase(s_i) - phase(sigma))) x`` against
        the Lagrange basis of node ``j`` over cell ``i``; ``monotone`` uses
        linear interpolation so that every coefficient is nonnegative.
        """
        g = self.grid
        n = g.n
        ds = g.log_step
        right, length, tau, wt, phase_nodes = self._cell_panels(phase)
        sigma = right[:, None] - length[:, None] * tau[None, :]
        xs = np.exp(sigma)
        theta = phase_nodes[:, None] - phase(xs)
        kern = length[:, None] * wt[None, :] * np.exp(-theta) * xs
        rows, cols, vals = [], [], []
        for i in range(n):
            j0, j1 = cell_stencil(i, n, monotone)
            nodes = np.arange(j0, j1 + 1, dtype=float)
            loc = (sigma[i] - g.s[0]) / ds
            basis = lagrange_basis(nodes, loc)
            c = kern[i] @ basis
            rows.extend([i] * c.size)
            cols.extend(range(j0, j1 + 1))
            vals.extend(c.tolist())
        C = sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
        return C, phase_nodes

    def _resolvent_parts(self, lam: float, absorb: bool):
        """:meth:`_phase_parts` for the phase ``Phi = lam R + psi``."""
        return self._phase_parts(lambda y: self.phase(lam, y, absorb))

    @staticmethod
    def _propagate(C, phase_nodes) -> np.ndarray:
        n = phase_nodes.size
        tri = np.tri(n, dtype=bool)
        diff = phase_nodes[:, None] - phase_nodes[None, :]
        D = np.where(tri, np.exp(-np.where(tri, diff, 0.0)), 0.0)
        return np.asarray((C.T @ D.T).T)

    def resolvent_matrix(self, lam: float, absorb: bool = True) -> np.ndarray:
        """Dense matrix of ``f -> (lam - T)^{-1} f`` on node values.

        The inner integral is done cell by cell against a nearly causal
        Lagrange interpolant of ``f`` in ``log x``, with the exponential
        factor evaluated exactly from the primitives on graded Gauss-Legendre
        points; cell contributions are propagated with ``exp(-(Phi_m - Phi_i))``.
        """
        lam = float(lam)

        def build():
            C, Phi = self._resolvent_parts(lam, absorb)
            return self._propagate(C, Phi) / self.r(self.grid.nodes)[:, None]

        return self._cached(("R", lam, bool(absorb)), build)

    def phase(self, lam: float, x, absorb: bool = True) -> np.ndarray:
        """``Phi(x) = lam R(x) + psi(x)``, the exponent of the transport resolvent."""
        x = np.asarray(x, dtype=float)
        out = float(lam) * self.r.R(x)
        if absorb and not self.a.is_zero:
            out = out + self.psi(x)
        return out

    def scaled_resolvent_matrix(self, lam: float, level: float, absorb: bool = True) -> np.ndarray:
        """Resolvent acting on the rescaled unknown ``exp(Phihat) u``.

        ``Phihat = max(Phi - level, 0)``.  With ``v = exp(Phihat) u`` the
        transport resolvent keeps only the bounded phase
        ``chi = min(Phi - level, 0)``: above the level it is a plain
        cumulative integral of the rescaled data, below it the ordinary
        resolvent.  No entry is exponentially large, so the matrix stays
        representable where ``u`` itself underflows.  Cells use linear
        interpolation, which makes every entry nonnegative: the sign pattern
        of the result then reflects reachability only, never interpolation
        ringing.
        """
        lam = float(lam)
        self._check_lambda(lam)

        def build():
            C, chi = self._phase_parts(lambda y: np.minimum(self.phase(lam, y, absorb) - level, 0.0),
                                       monotone=True)
            return self._propagate(C, chi) / self.r(self.grid.nodes)[:, None]

        return self._cached(("Rs", lam, float(level), bool(absorb)), build)

    def resolvent_T(self, lam: float, f: GridFunction, absorb: bool = True, check: bool = True) -> GridFunction:
        """``(lam - T)^{-1} f`` (``T0`` when ``absorb`` is False)."""
        if check:
            self._check_lambda(lam)
        vals = self.resolvent_matrix(lam, absorb) @ f.values
        return GridFunction(self.grid, vals)

    # -- generator action ----------------------------------------------------
    def generator_action(self, u, absorb: bool = True) -> np.ndarray:
        """``T u = -(r u)' - a u`` by sixth-order differences in ``log x``."""
        g = self.grid
        u = np.asarray(u.values if isinstance(u, GridFunction) else u, dtype=float)
        v = self.r(g.nodes) * u
        dv = log_derivative(v, g.log_step)
        out = -dv / g.nodes
        if absorb:
            out = out - self.a(g.nodes) * u
        return out

    # -- a priori estimates --------------------------------------------------
    def oracle_pointwise(self, lam: float, f: GridFunction, tol: float = 1e-6) -> OracleReport:
        """Slack of ``|(lam - T0)^{-1} f|(y) w(y) r(y) <= ||f||``."""
        self._check_lambda(lam)
        nf = norm(f, self.space)
        if nf == 0:
            return OracleReport(-1.0, lam, self.lambda_bound, float("nan"), tol, True)
        u = self.resolvent_T(lam, f, absorb=False)
        x = self.grid.nodes
        scaled = np.abs(u.values) * self.space.weight(x) * self.r(x) / nf
        i = int(np.argmax(scaled))
        slack = float(scaled[i] - 1.0)
        return OracleReport(slack, lam, self.lambda_bound, float(x[i]), tol, slack <= tol)

    def oracle_smoothing(self, lam: float, f: GridFunction, tol: float = 1e-6) -> OracleReport:
        """Slack of ``int |(lam - T)^{-1} f| a w <= ||f||``."""
        self._check_lambda(lam)
        nf = norm(f, self.space)
        if nf == 0 or self.a.is_zero:
            return OracleReport(-1.0, lam, self.lambda_bound, float("nan"), tol, True)
        u = self.resolvent_T(lam, f, absorb=True)
        x = self.grid.nodes
        lhs = float(np.sum(self.grid.weights * np.abs(u.values) * self.a(x) * self.space.weight(x)))
        slack = lhs / nf - 1.0
        return OracleReport(float(slack), lam, self.lambda_bound, float("nan"), tol, slack <= tol)


def log_derivative(v: np.ndarray, ds: float) -> np.ndarray:
    """``dv/ds`` on a uniform grid with sixth-order (one-sided near ends) differences."""
    n = v.size
    m = FD_ORDER + 1
    out = np.empty(n)
    half = FD_ORDER // 2
    coeff_cache = {}
    for i in range(n):
        j0 = min(max(i - half, 0), n - m)
        off = i - j0
        if off not in coeff_cache:
            coeff_cache[off] = _fd_weights(np.arange(m) - off)
        out[i] = coeff_cache[off] @ v[j0:j0 + m]
    return out / ds


def _fd_weights(offsets: np.ndarray) -> np.ndarray:
    """First-derivative weights at 0 for the given integer offsets."""
    m = offsets.size
    A = np.vander(offsets.astype(float), m, increasing=True).T
    rhs = np.zeros(m)
    rhs[1] = 1.0
    return np.linalg.solve(A, rhs)
