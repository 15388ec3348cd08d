"""The growth-fragmentation semigroup, its resolvent and its Perron eigenpair.

The generator is ``A = T + B``: transport with absorption plus the
fragmentation gain operator.  Two independent evaluations of ``V(t)`` are
provided:

* a Dyson-Phillips (Duhamel) series over the exact transport flow,
  ``V_0(t) = U(t)`` and ``V_{n+1}(t) f = int_0^t U(t - s) B V_n(s) f ds``,
  with a lag quadrature that stops each node's integral exactly where its
  characteristic leaves the grid;
* a Strang-split stepper that remaps cumulative mass along characteristics
  (exact, mass conserving transport) and applies ``exp(dt (B - a))`` in
  between.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import interpolate, linalg

from ._numerics import gauss_legendre, gregory_end_weights, lagrange_basis
from .fragmentation import Kernel, fragmentation_matrix
from .growth_model import _num
from .thresholds import DeschReport, desch_condition
from .transport import ParameterError, TransportOperator
from .weighted_space import GridFunction, norm

DESCH_TARGET = 0.9          # contraction level defining lambda_desch
CONTRACTION_MARGIN = 1e-3
NO_THEOREM_BANNER = "no theorem applies: the Desch condition fails and the run was forced by override"


class GenerationError(ValueError):
    """The Desch condition fails and no override was given."""


class ContractionError(ParameterError):
    """``||B (lam - T)^{-1}||`` is not below ``1 - margin``."""


class StagnationError(RuntimeError):
    """Power iteration did not meet its Cauchy criterion within the budget."""


class FitFailure(RuntimeError):
    """Too few post-transient samples for the decay-rate fit."""


class CFLError(ValueError):
    """Stepper time step exceeds ``1 / max a``."""


class SeriesTruncationWarning(UserWarning):
    """A series hit its term budget before reaching the cutoff."""


# -- quadrature in the lag variable -----------------------------------------------

def _interp_weights(count: int, lo: float, hi: float) -> np.ndarray:
    """``int_lo^hi`` of the Lagrange interpolant through integer nodes ``0..count-1``."""
    x, w = gauss_legendre(max(8, count))
    t = lo + (hi - lo) * x
    return (hi - lo) * (w @ lagrange_basis(np.arange(count, dtype=float), t))


def lag_weights(extent: float) -> np.ndarray:
    """Weights on lags ``0, 1, ..., m`` (unit spacing) for ``int_0^extent``.

    ``m = floor(extent)``.  Up to 8 samples an interpolatory rule through all
    of them is used; beyond that the Gregory rule on ``[0, m]`` plus the
    interpolant through the last six samples over ``[m, extent]``.
    """
    m = int(np.floor(extent + 1e-12))
    frac = max(extent - m, 0.0)
    if m == 0:
        return np.array([extent])
    if m + 1 <= 8:
        return _interp_weights(m + 1, 0.0, extent)
    g = np.array(gregory_end_weights())
    w = np.ones(m + 1)
    w[: g.size] = g
    w[m + 1 - g.size:] = g[::-1]
    if frac > 0:
        w[m - 5:] += _interp_weights(6, 5.0, 5.0 + frac)
    return w


# -- reports ---------------------------------------------------------------------

@dataclass(frozen=True)
class EigenReport:
    lambda_star: float
    f_vec: GridFunction
    e_vec: GridFunction
    residual_primal: float
    residual_dual: float
    iterations: int
    lambda0: float
    converged: bool
    accepted: bool
    residual_tol: float
    positive_f: bool
    positive_e: bool
    notes: tuple[str, ...] = ()

    def projection(self, f: GridFunction) -> GridFunction:
        """``P f = <e, f> f_vec``."""
        c = float(np.sum(f.grid.weights * self.e_vec.values * f.values))
        return GridFunction(f.grid, c * self.f_vec.values)

    def to_dict(self, include_vectors: bool = False) -> dict:
        d = {
            "lambda_star": self.lambda_star,
            "lambda0": self.lambda0,
            "residual_primal": _num(self.residual_primal),
            "residual_dual": _num(self.residual_dual),
            "residual_tol": self.residual_tol,
            "iterations": self.iterations,
            "converged": self.converged,
            "accepted": self.accepted,
            "positive_f": self.positive_f,
            "positive_e": self.positive_e,
            "notes": list(self.notes),
        }
        if include_vectors:
            d["x"] = self.f_vec.grid.nodes.tolist()
            d["f_vec"] = self.f_vec.values.tolist()
            d["e_vec"] = self.e_vec.values.tolist()
        return d


@dataclass(frozen=True)
class PositivityReport:
    min_value: float
    min_log10: float
    passed: bool
    valid: bool
    lam: float
    detail: str = ""

    def to_dict(self):
        return {"min_value": self.min_value, "min_log10": _num(self.min_log10), "passed": self.passed,
                "valid": self.valid, "lambda": self.lam, "detail": self.detail}


@dataclass(frozen=True)
class GapReport:
    s_full: float
    s_hat: float
    proxy: float
    valid: bool
    window: tuple[float, float]
    bound: float
    detail: str = ""

    def to_dict(self):
        return {"s_full": _num(self.s_full), "s_hat": _num(self.s_hat), "proxy": _num(self.proxy),
                "valid": self.valid, "window": list(self.window), "bound": self.bound, "detail": self.detail}


@dataclass(frozen=True)
class AEGReport:
    epsilon_fit: float
    decay_curve: tuple[tuple[float, float], ...]
    conserved_drift: float
    gap_proxy: GapReport | None
    transient_index: int
    lambda_star: float
    fit_residual: float

    def to_dict(self):
        return {
            "epsilon_fit": _num(self.epsilon_fit),
            "decay_curve": [[t, v] for t, v in self.decay_curve],
            "conserved_drift": self.conserved_drift,
            "gap_proxy": None if self.gap_proxy is None else self.gap_proxy.to_dict(),
            "transient_index": self.transient_index,
            "lambda_star": self.lambda_star,
            "fit_residual": self.fit_residual,
        }


@dataclass(frozen=True)
class VResult:
    value: GridFunction
    cross_check: float | None
    terms: int


# -- engine ----------------------------------------------------------------------

@dataclass(eq=False)
class EvolutionEngine:
    """Discrete ``A = T + B`` on the transport operator's grid and space.

    Parameters
    ----------
    transport : TransportOperator
        Carries the flow, grid, space and absorption ``a``.
    kernel : Kernel
    override : bool
        Build even when the Desch condition fails (reports then carry
        :data:`NO_THEOREM_BANNER`).
    max_terms : int
        Duhamel series budget (default 30).
    cutoff : float
        Relative term-norm cutoff for both series (default ``1e-12``).
    chunk : float
        Longest time interval handled by one Duhamel sweep; longer times are
        composed with the semigroup property.
    lags : int
        Lag samples per sweep.
    dt : float, optional
        Stepper time step; default ``min(1 / max a, 0.02)``.
    b_matrix : ndarray, optional
        Replacement fragmentation matrix (used for truncated comparisons).
    """

    transport: TransportOperator
    kernel: Kernel
    override: bool = False
    max_terms: int = 30
    cutoff: float = 1e-12
    chunk: float = 0.25
    lags: int = 16
    dt: float | None = None
    b_matrix: np.ndarray | None = None
    desch: DeschReport | None = None
    banner: str | None = field(default=None, init=False)
    _store: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        if self.desch is None:
            self.desch = desch_condition(self.kernel, self.transport.a, self.transport.space)
        if not self.desch.satisfied:
            if not self.override:
                raise GenerationError(
                    f"Desch condition fails in {self.transport.space.label} (L = {self.desch.L:.6g}); "
                    "pass override=True to simulate anyway")
            self.banner = NO_THEOREM_BANNER
        if self.b_matrix is None:
            self.b_matrix = fragmentation_matrix(self.grid, self.kernel, self.transport.a)
        a_max = float(np.max(self.transport.a(self.grid.nodes)))
        if self.dt is None:
            self.dt = min(1.0 / a_max, 0.02) if a_max > 0 else 0.02
        elif a_max > 0 and self.dt * a_max > 1.0 + 1e-12:
            raise CFLError(f"dt = {self.dt:g} exceeds 1 / max a = {1.0 / a_max:g}")

    # -- basic handles -----------------------------------------------------------
    @property
    def grid(self):
        return self.transport.grid

    @property
    def space(self):
        return self.transport.space

    @property
    def B(self) -> np.ndarray:
        return self.b_matrix

    def _wvec(self) -> np.ndarray:
        return self.grid.weights * self.space.weight(self.grid.nodes)

    def _norm(self, v) -> float:
        return float(np.sum(self._wvec() * np.abs(v)))

    def apply_A(self, u) -> np.ndarray:
        """Discrete generator ``T u + B u`` (finite differences for ``T``)."""
        u = np.asarray(u.values if isinstance(u, GridFunction) else u, dtype=float)
        return self.transport.generator_action(u, absorb=True) + self.B @ u

    # -- contraction -------------------------------------------------------------
    def _probe_bumps(self) -> np.ndarray:
        g = self.grid
        s = g.s
        ds = g.log_step
        centers = s[::4]
        bumps = np.exp(-0.5 * ((s[:, None] - centers[None, :]) / (3.0 * ds)) ** 2)
        return bumps / np.maximum(g.nodes[:, None], 1e-300)

    def contraction_norm(self, lam: float) -> float:
        """Action norm of ``B (lam - T)^{-1}`` on positive bumps of width ``3 ds``.

        For a positive operator on a weighted L1 space the norm is attained
        on nonnegative data, so smooth narrow bumps at every fourth node
        sample it without the oscillations single-node spikes would cause.
        """
        key = ("knorm", float(lam))
        if key not in self._store:
            R = self.transport.resolvent_matrix(lam, absorb=True)
            G = self._probe_bumps()
            KG = self.B @ (R @ G)
            w = self._wvec()
            self._store[key] = float(np.max((w @ np.abs(KG)) / (w @ np.abs(G))))
        return self._store[key]

    def lambda_desch(self, target: float = DESCH_TARGET) -> float:
        """Smallest ``lam >= alpha C`` with ``contraction_norm(lam) <= target`` (to 1e-3 relative)."""
        key = ("ldesch", target)
        if key in self._store:
            return self._store[key]
        lo = self.transport.lambda_bound
        if self.contraction_norm(lo) <= target:
            self._store[key] = lo
            return lo
        step = max(1.0, lo)
        hi = lo + step
        while self.contraction_norm(hi) > target:
            lo, step = hi, 2.0 * step
            hi = lo + step
            if step > 1e8:
                raise ContractionError("no contraction region found for B (lam - T)^-1")
        while hi - lo > 1e-3 * max(1.0, hi):
            mid = 0.5 * (lo + hi)
            if self.contraction_norm(mid) <= target:
                hi = mid
            else:
                lo = mid
        self._store[key] = hi
        return hi

    @property
    def lambda0(self) -> float:
        """Default spectral shift ``lambda_desch + 1``."""
        return self.lambda_desch() + 1.0

    # -- resolvent ---------------------------------------------------------------
    def resolvent_A(self, lam: float, f: GridFunction, margin: float = CONTRACTION_MARGIN,
                    max_terms: int = 5000) -> GridFunction:
        """``(lam - A)^{-1} f`` as ``R_T sum_n (B R_T)^n f`` (Neumann series).

        Raises
        ------
        ContractionError
            When the estimated ``||B R_T(lam)||`` is not below ``1 - margin``.
        """
        self.transport._check_lambda(lam)
        if self.transport.a.is_zero or not np.any(self.B):
            return self.transport.resolvent_T(lam, f, absorb=True)
        q = self.contraction_norm(lam)
        if q >= 1.0 - margin:
            raise ContractionError(f"||B (lam - T)^-1|| ~ {q:.4g} >= 1 - margin at lam = {lam:g}")
        R = self.transport.resolvent_matrix(lam, absorb=True)
        term = R @ f.values
        total = term.copy()
        scale = max(self._norm(total), 1e-300)
        for _ in range(max_terms):
            term = R @ (self.B @ term)
            total += term
            if self._norm(term) <= self.cutoff * scale:
                break
        else:
            warnings.warn("Neumann series reached its term budget", SeriesTruncationWarning, stacklevel=2)
        return GridFunction(self.grid, total)

    def resolvent_residual(self, lam: float, u: GridFunction, f: GridFunction) -> float:
        """``||(lam - A) u - f|| / ||f||`` with the finite-difference generator."""
        res = lam * u.values - self.apply_A(u.values) - f.values
        return self._norm(res) / max(self._norm(f.values), 1e-300)

    def _dense_resolvent(self, lam: float, B: np.ndarray | None = None):
        """LU factors of ``I - B R_T`` for repeated solves with ``(lam - A)^{-1}``."""
        B = self.B if B is None else B
        R = self.transport.resolvent_matrix(lam, absorb=True)
        lu = linalg.lu_factor(np.eye(self.grid.n) - B @ R)
        return R, lu

    # -- eigenpair ---------------------------------------------------------------
    def perron_eigenpair(self, lambda0: float | None = None, tol: float = 1e-12, max_iter: int = 5000,
                         residual_tol: float = 1e-3, B: np.ndarray | None = None) -> EigenReport:
        """Dominant eigenpair of ``A`` by power iteration on ``(lambda0 - A)^{-1}``.

        The primal iteration starts from the space weight; the dual one
        iterates the transpose of the same discrete resolvent with respect to
        the quadrature pairing, so ``<e, A f> = <A^* e, f>`` holds exactly on
        the grid.  ``f_vec`` is normalised to unit norm and ``e_vec`` to
        ``<e, f> = 1``.

        Raises
        ------
        StagnationError
            When the eigenvalue sequence fails its Cauchy test within ``max_iter``.
        """
        lam0 = self.lambda0 if lambda0 is None else float(lambda0)
        R, lu = self._dense_resolvent(lam0, B)
        Bm = self.B if B is None else B
        q = self.grid.weights
        w = self._wvec()

        def RA(v):
            return R @ linalg.lu_solve(lu, v)

        def RA_star(v):
            # pairing-transpose: q^-1 RA^T q
            return linalg.lu_solve(lu, R.T @ (q * v), trans=1) / q

        v = self.space.weight(self.grid.nodes).astype(float)
        v /= self._norm(v)
        mu_prev = np.nan
        converged = False
        it = 0
        for it in range(1, max_iter + 1):
            v2 = RA(v)
            mu = float(w @ v2) / float(w @ v)
            v2 /= self._norm(v2)
            change = self._norm(v2 - v)
            v = v2
            if np.isfinite(mu_prev) and abs(mu - mu_prev) <= tol * abs(mu) and change <= 1e-9:
                converged = True
                break
            mu_prev = mu
        if not converged:
            raise StagnationError(f"power iteration did not settle in {max_iter} iterations")
        lam_star = lam0 - 1.0 / mu
        e = np.ones(self.grid.n)
        e_prev_mu = np.nan
        for _ in range(max_iter):
            e2 = RA_star(e)
            nu = float(np.max(np.abs(e2)))
            e2 /= nu
            if np.max(np.abs(e2 - e)) <= 1e-12 and np.isfinite(e_prev_mu) and abs(nu - e_prev_mu) <= tol * nu:
                e = e2
                break
            e, e_prev_mu = e2, nu
        else:
            raise StagnationError("dual power iteration did not settle")
        if float(w @ v) < 0:
            v = -v
        pair = float(np.sum(q * e * v))
        e = e / pair
        res_p = self._norm(self.apply_A_with(v, Bm) - lam_star * v) / self._norm(v)
        scale = lam0 - lam_star
        ew = self.space.weight(self.grid.nodes)
        res_d = float(np.max(np.abs(RA_star(e) * scale - e) / ew) / np.max(np.abs(e) / ew))
        pos_f = _positive_up_to_floor(v)
        pos_e = _positive_up_to_floor(e)
        notes = []
        if self.banner:
            notes.append(self.banner)
        accepted = bool(converged and res_p <= residual_tol and pos_f and pos_e)
        if not accepted:
            notes.append("eigenpair rejected: " + ", ".join(
                s for s, bad in [("primal residual above tolerance", res_p > residual_tol),
                                 ("primal vector not positive", not pos_f),
                                 ("dual vector not positive", not pos_e)] if bad))
        return EigenReport(float(lam_star), GridFunction(self.grid, v), GridFunction(self.grid, e),
                           float(res_p), float(res_d), it, lam0, converged, accepted, residual_tol,
                           pos_f, pos_e, tuple(notes))

    def apply_A_with(self, u: np.ndarray, B: np.ndarray) -> np.ndarray:
        return self.transport.generator_action(u, absorb=True) + B @ u

    # -- positivity ----------------------------------------------------------------
    def positivity_improving_check(self, lam: float, g: GridFunction) -> PositivityReport:
        """Sign of ``(lam - A)^{-1} g`` at every node for a nonnegative bump ``g``.

        The resolvent decays like ``exp(-Phi)`` with ``Phi = int (lam + a) / r``
        and underflows at large sizes, so the solve runs on the rescaled unknown
        ``v = exp(Phihat) u`` with ``Phihat = max(Phi - Phi(x_g), 0)`` and
        ``x_g`` the peak of ``g``.  Above ``x_g`` the transport resolvent of
        ``v`` is a plain cumulative integral and the fragmentation kernel
        carries the bounded factor ``exp(Phihat(x) - Phihat(y))``; both stay
        accurate where ``u`` is far below the floating-point range.  ``min_value`` is the smallest
        unscaled node value (it may underflow to 0) and ``min_log10`` the
        smallest ``log10 u`` computed from ``v``.
        """
        gv = g.values
        if np.any(gv < 0):
            raise ValueError("positivity check needs nonnegative data")
        if not np.any(gv > 0):
            return PositivityReport(0.0, float("-inf"), False, False, lam, "g is identically zero")
        tr = self.transport
        level = float(tr.phase(lam, self.grid.nodes[int(np.argmax(gv))]))
        Rs = tr.scaled_resolvent_matrix(lam, level, absorb=True)

        def phase(y):
            return np.maximum(tr.phase(lam, y) - level, 0.0)

        key = ("Bs", float(lam), level)
        if key not in self._store:
            self._store[key] = fragmentation_matrix(self.grid, self.kernel, tr.a, phase=phase, monotone=True)
        Bs = self._store[key]
        phi = phase(self.grid.nodes)
        with np.errstate(over="ignore"):
            gs = gv * np.exp(np.minimum(phi, 700.0))
        lu = linalg.lu_factor(np.eye(self.grid.n) - Bs @ Rs)
        us = Rs @ linalg.lu_solve(lu, gs)
        passed = bool(np.all(us > 0))
        with np.errstate(divide="ignore", invalid="ignore"):
            logs = np.where(us > 0, np.log10(np.abs(us)) - phi / np.log(10.0), -np.inf)
            u = us * np.exp(-phi)
        return PositivityReport(float(np.min(u)), float(np.min(logs)), passed, True, float(lam),
                                "rescaled resolvent strictly positive" if passed else
                                f"{int(np.sum(us <= 0))} nodes without positive mass")

    # -- gap proxy -----------------------------------------------------------------
    def truncated_matrix(self, window: tuple[float, float], bound: float = 1.0) -> np.ndarray:
        """``B - Bbar`` where ``Bbar`` has kernel ``min(a b, bound) p(x) p(y)``."""
        x = self.grid.nodes
        p = window_cutoff(x, window)
        n = self.grid.n
        ds = self.grid.log_step
        av = self.transport.a(x)
        bx = self.kernel(x[:, None], x[None, :])
        bx[np.diag_indices(n)] = self.kernel.diagonal(x)
        kb = np.minimum(av[None, :] * bx, bound) * p[:, None] * p[None, :]
        # same quadrature as the full matrix: B entries are weight * a * b
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(av[None, :] * bx > 0, kb / (av[None, :] * bx), 0.0)
        return self.B * (1.0 - ratio)

    def gap_proxy(self, window: tuple[float, float], bound: float = 1.0, eigen: EigenReport | None = None,
                  **eig_kwargs) -> GapReport:
        """``s(T + B) - s(T + Bhat)`` for the compactly truncated comparison ``Bhat``."""
        x = self.grid.nodes
        lo, hi = window
        if not (self.grid.x_min < lo < hi < self.grid.x_max) or not np.any(window_cutoff(x, window) > 0):
            full = eigen.lambda_star if eigen is not None else float("nan")
            return GapReport(full, full, 0.0, False, (float(lo), float(hi)), bound,
                             "window is degenerate or outside the grid: Bhat = B")
        if eigen is None:
            eigen = self.perron_eigenpair(**eig_kwargs)
        Bhat = self.truncated_matrix(window, bound)
        hat = self.perron_eigenpair(lambda0=eigen.lambda0, B=Bhat, **{k: v for k, v in eig_kwargs.items()
                                                                      if k != "lambda0"})
        return GapReport(eigen.lambda_star, hat.lambda_star, eigen.lambda_star - hat.lambda_star, True,
                         (float(lo), float(hi)), bound, "")

    # -- semigroup: Duhamel path ----------------------------------------------------
    def _lag_setup(self, h: float, K: int):
        key = ("lag", round(h, 15), K)
        if key in self._store:
            return self._store[key]
        U = [self.transport.transport_matrix(l * h, absorb=True) for l in range(K + 1)]
        r = self.transport.r
        cut = (r.R(self.grid.nodes) - r.R(np.array([self.grid.x_min]))[0]) / h  # in lag units
        W = np.zeros((K + 1, self.grid.n, K + 1))  # W[k, node, lag]
        for k in range(1, K + 1):
            full = lag_weights(float(k))
            W[k, :, : k + 1] = full
            for i in np.nonzero(cut < k)[0]:
                wc = lag_weights(float(cut[i]))
                W[k, i, :] = 0.0
                W[k, i, : wc.size] = wc
        W *= h
        self._store[key] = (U, W)
        return U, W

    def _duhamel_sweep(self, f: np.ndarray, t: float):
        K = self.lags
        h = t / K
        U, W = self._lag_setup(h, K)
        n = self.grid.n
        level = np.stack([U[k] @ f for k in range(K + 1)], axis=1)  # n x (K+1)
        total = level.copy()
        scale = max(np.max([self._norm(total[:, k]) for k in range(K + 1)]), 1e-300)
        used = 0
        for used in range(1, self.max_terms + 1):
            G = self.B @ level
            P = np.stack([U[l] @ G for l in range(K + 1)])  # P[l] = U_l B V_n(t_j), shape n x (K+1)
            new = np.zeros((n, K + 1))
            for k in range(1, K + 1):
                lags = np.arange(k + 1)
                new[:, k] = np.einsum("il,li->i", W[k, :, : k + 1], P[lags, :, k - lags])
            level = new
            total += level
            if max(self._norm(level[:, k]) for k in range(K + 1)) <= self.cutoff * scale:
                break
        else:
            warnings.warn(f"Duhamel series reached {self.max_terms} terms", SeriesTruncationWarning,
                          stacklevel=3)
        return total[:, -1], used

    # -- semigroup: stepper path ------------------------------------------------------
    def _frag_propagator(self, dt: float) -> np.ndarray:
        key = ("expm", round(dt, 15))
        if key not in self._store:
            F = self.B - np.diag(self.transport.a(self.grid.nodes))
            self._store[key] = linalg.expm(F * dt)
        return self._store[key]

    def _remap(self, u: np.ndarray, dt: float) -> np.ndarray:
        """Exact transport of cumulative mass over ``dt`` (no absorption)."""
        g = self.grid
        s_nodes = g.s
        s_edges = np.log(g.edges)
        dens = interpolate.CubicSpline(s_nodes, u * g.nodes, extrapolate=True).antiderivative()
        M = dens(s_edges) - dens(s_edges[0])
        feet = np.asarray(self.transport.flow.backward(g.edges, np.full(g.edges.shape, dt)), dtype=float)
        inside = ~np.isnan(feet) & (feet >= g.x_min)
        cum = interpolate.CubicSpline(s_edges, M)
        Mn = np.zeros_like(M)
        Mn[inside] = cum(np.log(feet[inside]))
        newd = interpolate.CubicSpline(s_edges, Mn).derivative()(s_nodes)
        return newd / g.nodes

    def _stepper(self, f: np.ndarray, t: float) -> np.ndarray:
        steps = max(1, int(np.ceil(t / self.dt - 1e-12)))
        dt = t / steps
        E = self._frag_propagator(0.5 * dt)
        u = f.copy()
        for _ in range(steps):
            u = E @ u
            u = self._remap(u, dt)
            u = E @ u
        return u

    # -- public evolution ---------------------------------------------------------
    def evolve(self, f: GridFunction, times: Sequence[float], path: str = "duhamel") -> list[GridFunction]:
        """``V(t) f`` at every requested time (sorted, nonnegative)."""
        times = np.asarray(times, dtype=float)
        if np.any(times < 0) or np.any(np.diff(times) < 0):
            raise ValueError("times must be nonnegative and sorted")
        nonneg = bool(f.nonnegative or np.all(f.values >= 0))
        out = []
        u = f.values.astype(float)
        now = 0.0
        for t in times:
            span = t - now
            if span > 0:
                if path == "duhamel":
                    pieces = max(1, int(np.ceil(span / self.chunk - 1e-12)))
                    for _ in range(pieces):
                        u, _ = self._duhamel_sweep(u, span / pieces)
                        if nonneg:
                            u = np.maximum(u, 0.0)
                elif path == "stepper":
                    u = self._stepper(u, span)
                    if nonneg:
                        u = np.maximum(u, 0.0)
                else:
                    raise ValueError(f"unknown evaluation path {path!r}")
                now = t
            out.append(GridFunction(self.grid, u.copy(), nonneg))
        return out

    def apply_V(self, t: float, f: GridFunction, path: str = "duhamel", cross_check: bool = False):
        """``V(t) f``; with ``cross_check`` returns a :class:`VResult` holding the path distance."""
        if t < 0:
            raise ValueError("time must be nonnegative")
        val = self.evolve(f, [t], path)[0]
        if not cross_check:
            return val
        other = self.evolve(f, [t], "stepper" if path == "duhamel" else "duhamel")[0]
        dist = self._norm(val.values - other.values) / max(self._norm(val.values), 1e-300)
        return VResult(val, float(dist), self.max_terms)

    # -- asynchronous exponential growth ---------------------------------------------
    def aeg_diagnose(self, eigen: EigenReport, f: GridFunction, t_grid: Sequence[float],
                     gap: GapReport | None = None, path: str = "duhamel") -> AEGReport:
        """Decay of ``e^{-lambda* t} V(t) f - P f`` and the fitted rate ``epsilon``.

        The transient ends at the first sample after which the curve decreases
        strictly; ``epsilon`` is minus the slope of ``log`` of the curve
        against ``t`` over the remaining samples.

        Raises
        ------
        FitFailure
            When fewer than four samples remain after the transient.
        """
        if not eigen.accepted:
            raise ValueError("AEG diagnostics need an accepted eigenpair")
        if np.any(f.values < 0) or not np.any(f.values > 0):
            raise ValueError("AEG diagnostics need nonnegative, nontrivial data")
        t_grid = np.asarray(t_grid, dtype=float)
        q = self.grid.weights
        Pf = eigen.projection(f).values
        c0 = float(np.sum(q * eigen.e_vec.values * f.values))
        states = self.evolve(f, t_grid, path)
        curve, drift = [], 0.0
        for t, u in zip(t_grid, states):
            scaled = np.exp(-eigen.lambda_star * t) * u.values
            curve.append((float(t), self._norm(scaled - Pf)))
            cons = float(np.sum(q * eigen.e_vec.values * scaled))
            drift = max(drift, abs(cons - c0) / abs(c0))
        d = np.array([c for _, c in curve])
        k0 = len(d) - 1
        while k0 > 0 and d[k0 - 1] > d[k0]:
            k0 -= 1
        seg = slice(k0, len(d))
        if len(d) - k0 < 4 or np.any(d[seg] <= 0):
            raise FitFailure(f"only {len(d) - k0} post-transient samples for the decay fit")
        A = np.stack([t_grid[seg], np.ones(len(d) - k0)], axis=1)
        coef, *_ = np.linalg.lstsq(A, np.log(d[seg]), rcond=None)
        fit_res = float(np.sqrt(np.mean((A @ coef - np.log(d[seg])) ** 2)))
        return AEGReport(float(-coef[0]), tuple(curve), float(drift), gap, int(k0), eigen.lambda_star, fit_res)


def window_cutoff(x, window: tuple[float, float]) -> np.ndarray:
    """Smooth cutoff equal to 1 on the middle of ``window`` and 0 outside it (in ``log x``)."""
    lo, hi = window
    x = np.asarray(x, dtype=float)
    if not (0 < lo < hi):
        return np.zeros(x.shape)
    s = (np.log(x) - np.log(lo)) / (np.log(hi) - np.log(lo))
    ramp = 0.25

    def smooth_step(t):
        t = np.clip(t, 0.0, 1.0)
        with np.errstate(divide="ignore", over="ignore"):
            a = np.where(t > 0, np.exp(-1.0 / np.maximum(t, 1e-300)), 0.0)
            b = np.where(t < 1, np.exp(-1.0 / np.maximum(1.0 - t, 1e-300)), 0.0)
        return a / (a + b)

    return smooth_step(s / ramp) * smooth_step((1.0 - s) / ramp)


def _positive_up_to_floor(v: np.ndarray, floor: float = 1e-13) -> bool:
    """Strict positivity wherever the values are resolvable.

    Nodes with ``|v| <= floor * max|v|`` carry values below round-off and
    are only required to be ``>= -floor * max|v|``; every node between the
    first and last resolvable one must be strictly positive.
    """
    top = float(np.max(np.abs(v)))
    if top == 0:
        return False
    big = np.nonzero(v > floor * top)[0]
    if big.size == 0:
        return False
    inner = v[big[0]: big[-1] + 1]
    return bool(np.all(inner > 0) and np.all(v >= -floor * top))


def build_engine(transport: TransportOperator, kernel: Kernel, **kwargs) -> EvolutionEngine:
    return EvolutionEngine(transport, kernel, **kwargs)
