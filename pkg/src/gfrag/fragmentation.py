"""Fragmentation kernels, the total rate a(x) and the fragmentation operator B.

``(B phi)(x) = int_x^inf a(y) b(x, y) phi(y) dy`` where ``b(x, y)`` is the
distribution of daughter masses ``x`` produced when a mass ``y`` breaks.
Every builtin kernel is conservative: ``int_0^y x b(x, y) dx = y``.

Moment functionals used throughout::

    n_alpha(y)     = int_0^y x**alpha b(x, y) dx
    n_one_alpha(y) = int_0^y (1 + x)**alpha b(x, y) dx
    n_zero(y)      = int_0^y b(x, y) dx          (may be infinite)
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from ._numerics import cell_stencil, gauss_legendre, lagrange_basis
from ._primitive import CachedPrimitive
from ._rates import PowerSum
from .growth_model import GrowthRate
from .weighted_space import Grid, GridFunction

N0_DIVERGENCE = 1e6
B_GL_POINTS = 8  # Gauss-Legendre points per cell in the fragmentation matrix


# -- absorption rate -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AbsorptionRate:
    """Total fragmentation rate ``a(x) >= 0``.

    The singularity flags are declarations; :func:`corroborate_flags`
    compares them against sampled behaviour.
    """

    eval: Callable
    name: str
    unbounded_at_zero: bool = False
    unbounded_at_infinity: bool = False
    power_sum: PowerSum | None = None
    spec: dict = field(default_factory=dict)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.asarray(self.eval(x), dtype=float) * np.ones(x.shape)

    @property
    def is_zero(self) -> bool:
        return self.power_sum is not None and len(self.power_sum.terms) == 0


def power_sum_rate(terms: Sequence[tuple[float, float]], name: str | None = None) -> AbsorptionRate:
    """``a(x) = sum c_i x**q_i`` with ``c_i >= 0``."""
    terms = tuple((float(c), float(q)) for c, q in terms if c != 0)
    if any(c < 0 for c, _ in terms):
        raise ValueError("absorption coefficients must be nonnegative")
    ps = PowerSum(terms)
    label = name or (" + ".join(f"{c:g}*x^{q:g}" for c, q in terms) or "0")
    return AbsorptionRate(ps, label,
                          unbounded_at_zero=any(q < 0 for _, q in terms),
                          unbounded_at_infinity=any(q > 0 for _, q in terms),
                          power_sum=ps, spec={"family": "power_sum", "terms": [list(t) for t in terms]})


def zero_rate() -> AbsorptionRate:
    return power_sum_rate([], "0")


def constant_absorption(c: float) -> AbsorptionRate:
    return power_sum_rate([(c, 0.0)], f"{c:g}")


def linear_absorption(k: float = 1.0) -> AbsorptionRate:
    return power_sum_rate([(k, 1.0)], f"{k:g}*x")


def x_plus_inverse(k: float = 1.0) -> AbsorptionRate:
    """``a(x) = k (x + 1/x)``: unbounded at both ends."""
    return power_sum_rate([(k, 1.0), (k, -1.0)], f"{k:g}*(x+1/x)")


def tabulated_absorption(xs, vals, unbounded_at_zero=False, unbounded_at_infinity=False) -> AbsorptionRate:
    """Linear interpolation of ``a`` in ``log x``; constant extension outside the table."""
    xs = np.asarray(xs, dtype=float)
    vals = np.asarray(vals, dtype=float)
    if np.any(vals < 0) or np.any(np.diff(xs) <= 0) or np.any(xs <= 0):
        raise ValueError("tabulated absorption needs increasing positive x and nonnegative a")
    lx = np.log(xs)
    return AbsorptionRate(lambda x: np.interp(np.log(x), lx, vals), "tabulated",
                          unbounded_at_zero, unbounded_at_infinity,
                          spec={"family": "tabulated", "x": xs.tolist(), "a": vals.tolist()})


def corroborate_flags(a: AbsorptionRate, probe=(1e-6, 1e6)) -> dict:
    """Sampled evidence for the declared singularity flags."""
    lo, hi = probe
    near0 = a(np.array([lo * 100, lo]))
    nearinf = a(np.array([hi / 100, hi]))
    grows0 = bool(near0[1] > 10 * max(near0[0], 1e-300))
    growsinf = bool(nearinf[1] > 10 * max(nearinf[0], 1e-300))
    return {
        "unbounded_at_zero": {"declared": a.unbounded_at_zero, "sampled_growth": grows0,
                              "consistent": grows0 == a.unbounded_at_zero},
        "unbounded_at_infinity": {"declared": a.unbounded_at_infinity, "sampled_growth": growsinf,
                                  "consistent": growsinf == a.unbounded_at_infinity},
    }


def absorption_primitive(r: GrowthRate, a: AbsorptionRate, table: dict | None = None) -> Callable:
    """``x -> int_1^x a(t) / r(t) dt``; closed form for power-type rates.

    Otherwise a :class:`CachedPrimitive`, rebuilt from ``table`` when given.
    """
    if a.is_zero:
        return lambda x: np.zeros(np.shape(x))
    if a.power_sum is not None and r.power is not None:
        return a.power_sum.divided_primitive(*r.power)
    return CachedPrimitive(lambda x: a(x) / r(x), table)


# -- kernels -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Kernel:
    """Fragmentation kernel ``b(x, y)``.

    Subclasses implement ``_b`` (valid for ``x < y``) and ``diagonal``, the
    limit ``b(y-, y)``.  ``inf_supp_fraction`` is the declared
    ``sup_y inf supp b(., y) / y`` and ``unbounded_ab_support`` the declared
    unboundedness of ``supp a b``.
    """

    inf_supp_fraction: float = 0.0
    unbounded_ab_support: bool = True

    family = "abstract"

    def __call__(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        out = np.zeros(x.shape)
        m = x < y
        if np.any(m):
            out[m] = self._b(x[m], y[m])
        return out

    def _b(self, x, y):
        raise NotImplementedError

    def diagonal(self, y):
        y = np.asarray(y, dtype=float)
        return self._b(y * (1 - 1e-13), y)

    # moments; subclasses override with closed forms where available
    def n_alpha(self, y, alpha: float):
        return self._moment(y, lambda x: x ** alpha)

    def n_one_alpha(self, y, alpha: float):
        return self._moment(y, lambda x: (1.0 + x) ** alpha)

    def n_zero(self, y):
        return self._moment(y, lambda x: np.ones_like(x), allow_inf=True)

    def moment_truncated(self, y, weight: Callable, lower: float):
        """``int_lower^y weight(x) b(x, y) dx`` (used for truncation-aware checks)."""
        return self._moment(y, weight, lower=lower)

    def _moment(self, y, weight, lower: float = 0.0, allow_inf: bool = False):
        ys = np.atleast_1d(np.asarray(y, dtype=float))
        out = np.empty(ys.shape)
        for i, yy in enumerate(ys):
            lo = max(lower, 0.0)
            if lo >= yy:
                out[i] = 0.0
                continue
            # integrate in s = log x to resolve the x -> 0 end
            f = lambda s: float(weight(np.exp(s)) * self._b(np.array([np.exp(s)]), np.array([yy]))[0] * np.exp(s))  # noqa: E731
            s_lo = np.log(lo) if lo > 0 else np.log(yy) - 60.0
            val, _ = integrate.quad(f, s_lo, np.log(yy), limit=400, epsabs=0.0, epsrel=1e-12)
            if allow_inf and lo == 0.0:
                # divergence test: compare with a deeper lower limit
                deeper, _ = integrate.quad(f, np.log(yy) - 120.0, s_lo, limit=400)
                if deeper > 1e-3 * max(val, 1e-300) or val > N0_DIVERGENCE:
                    val = np.inf
            out[i] = val
        return out if np.ndim(y) else float(out[0])

    def conservativity_defect(self, y) -> float:
        m = self.n_alpha(y, 1.0)
        return np.abs(m - np.asarray(y)) / np.asarray(y)

    def to_dict(self) -> dict:
        return {"family": self.family, "inf_supp_fraction": self.inf_supp_fraction,
                "unbounded_ab_support": self.unbounded_ab_support}


@dataclass(frozen=True, eq=False)
class Homogeneous(Kernel):
    """``b(x, y) = h(x / y) / y`` with ``int_0^1 z h(z) dz = 1``.

    ``h`` is a vectorised callable on ``(0, 1)``; ``h_name`` labels it.
    """

    h: Callable = None
    h_name: str = "h"

    family = "homogeneous"

    def __post_init__(self):
        if self.h is None:
            raise ValueError("homogeneous kernel needs h")
        m1, _ = integrate.quad(lambda z: z * float(self.h(np.array([z]))[0]), 0.0, 1.0, limit=200)
        if abs(m1 - 1.0) > 1e-8:
            raise ValueError(f"homogeneous kernel is not conservative: int z h = {m1}")

    def _b(self, x, y):
        return self.h(x / y) / y

    def diagonal(self, y):
        return self.h(np.array(1.0 - 1e-13)) / np.asarray(y, dtype=float)

    def ratio_alpha(self, alpha: float) -> float:
        """``n_alpha(y) / y**alpha = int_0^1 z**alpha h(z) dz`` (y-independent)."""
        v, _ = integrate.quad(lambda z: z ** alpha * float(self.h(np.array([z]))[0]), 0.0, 1.0,
                              limit=200, epsabs=0.0, epsrel=1e-13)
        return v

    def n_alpha(self, y, alpha):
        return self.ratio_alpha(alpha) * np.asarray(y, dtype=float) ** alpha

    def n_one_alpha(self, y, alpha):
        ys = np.atleast_1d(np.asarray(y, dtype=float))
        out = np.array([integrate.quad(lambda z: (1 + yy * z) ** alpha * float(self.h(np.array([z]))[0]),
                                       0.0, 1.0, limit=200, epsabs=0.0, epsrel=1e-13)[0] for yy in ys])
        return out if np.ndim(y) else float(out[0])

    def to_dict(self):
        d = super().to_dict()
        d["h"] = self.h_name
        return d


@dataclass(frozen=True, eq=False)
class PowerLaw(Kernel):
    """``b(x, y) = (nu + 2) x**nu / y**(nu + 1)`` with ``nu`` in ``(-2, 0]``.

    ``nu = 0`` is the uniform binary kernel ``2 / y``.
    """

    nu: float = 0.0

    family = "power_law"

    def __post_init__(self):
        if not (-2.0 < self.nu <= 0.0):
            raise ValueError(f"power-law exponent must lie in (-2, 0], got {self.nu}")

    def _b(self, x, y):
        return (self.nu + 2.0) * x ** self.nu / y ** (self.nu + 1.0)

    def diagonal(self, y):
        return (self.nu + 2.0) / np.asarray(y, dtype=float)

    def ratio_alpha(self, alpha: float) -> float:
        return (self.nu + 2.0) / (self.nu + alpha + 1.0)

    def n_alpha(self, y, alpha):
        return self.ratio_alpha(alpha) * np.asarray(y, dtype=float) ** alpha

    def n_zero(self, y):
        if self.nu <= -1.0:
            return np.full(np.shape(y), np.inf) if np.ndim(y) else np.inf
        return (self.nu + 2.0) / (self.nu + 1.0) * np.ones(np.shape(y)) if np.ndim(y) else (self.nu + 2.0) / (self.nu + 1.0)

    def n_one_alpha(self, y, alpha):
        ys = np.atleast_1d(np.asarray(y, dtype=float))
        nu = self.nu
        if nu <= -1.0:
            out = np.full(ys.shape, np.inf)
        elif nu == 0.0:
            # 2/y int_0^y (1+x)^alpha dx in closed form
            out = 2.0 * np.expm1((alpha + 1.0) * np.log1p(ys)) / ((alpha + 1.0) * ys)
        else:
            # z**nu handled by the algebraic weight of QUADPACK
            out = np.array([(nu + 2.0) * integrate.quad(lambda z: (1 + yy * z) ** alpha, 0.0, 1.0,
                                                         weight="alg", wvar=(nu, 0.0), epsabs=0.0,
                                                         epsrel=1e-13)[0] for yy in ys])
        return out if np.ndim(y) else float(out[0])

    def moment_truncated(self, y, weight, lower):
        ys = np.atleast_1d(np.asarray(y, dtype=float))
        nu = self.nu
        out = np.array([(nu + 2.0) / yy ** (nu + 1) * integrate.quad(
            lambda x: float(weight(np.array([x]))[0]) * x ** nu, lower, yy,
            epsabs=0.0, epsrel=1e-13, limit=200)[0] if yy > lower else 0.0 for yy in ys])
        return out if np.ndim(y) else float(out[0])

    def to_dict(self):
        d = super().to_dict()
        d["nu"] = self.nu
        return d


def uniform_binary(**meta) -> PowerLaw:
    """Uniform binary kernel ``b(x, y) = 2 / y``."""
    return PowerLaw(nu=0.0, **meta)


def homogeneous_kernel(h: Callable, name: str = "h", **meta) -> Homogeneous:
    return Homogeneous(h=h, h_name=name, **meta)


@dataclass(frozen=True, eq=False)
class Separable(Kernel):
    """``b(x, y) = beta(x) y / int_0^y s beta(s) ds`` (mass conserving by construction)."""

    beta: Callable = None
    beta_name: str = "beta"
    _cache: dict = field(default_factory=dict, repr=False)

    family = "separable"

    def _mass(self, y):
        if "prim" not in self._cache:
            prim = CachedPrimitive(lambda s: s * self.beta(s))
            self._cache["prim"] = prim
            self._cache["zero"] = prim.limit_at_zero()
        prim = self._cache["prim"]
        m = prim(np.asarray(y, dtype=float)) - self._cache["zero"]
        if np.any(~(m > 0)) or np.any(~np.isfinite(m)):
            raise ValueError("separable kernel needs 0 < int_0^y s beta(s) ds < inf")
        return m

    def _b(self, x, y):
        return self.beta(x) * y / self._mass(y)

    def diagonal(self, y):
        y = np.asarray(y, dtype=float)
        return self.beta(y) * y / self._mass(y)

    def to_dict(self):
        d = super().to_dict()
        d["beta"] = self.beta_name
        return d


@dataclass(frozen=True, eq=False)
class Mixture(Kernel):
    """Convex combination of kernels."""

    weights: tuple = ()
    parts: tuple = ()

    family = "mixture"

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if len(self.parts) == 0 or w.size != len(self.parts):
            raise ValueError("mixture needs one weight per part")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must be nonnegative and sum to 1")

    def _b(self, x, y):
        return sum(w * k._b(x, y) for w, k in zip(self.weights, self.parts))

    def diagonal(self, y):
        return sum(w * k.diagonal(y) for w, k in zip(self.weights, self.parts))

    def n_alpha(self, y, alpha):
        return sum(w * k.n_alpha(y, alpha) for w, k in zip(self.weights, self.parts))

    def n_one_alpha(self, y, alpha):
        return sum(w * k.n_one_alpha(y, alpha) for w, k in zip(self.weights, self.parts))

    def n_zero(self, y):
        return sum(w * k.n_zero(y) for w, k in zip(self.weights, self.parts))

    def moment_truncated(self, y, weight, lower):
        return sum(w * k.moment_truncated(y, weight, lower) for w, k in zip(self.weights, self.parts))

    def to_dict(self):
        d = super().to_dict()
        d["weights"] = list(self.weights)
        d["parts"] = [k.to_dict() for k in self.parts]
        return d


@dataclass(frozen=True, eq=False)
class Tabulated(Kernel):
    """Kernel sampled on a rectilinear ``(x, y)`` table.

    Values are interpolated bilinearly in ``(log x, log y)``; outside the
    table and for ``x >= y`` the kernel is zero.  Support conditions cannot
    be certified from samples and are taken from the declared metadata.
    """

    xs: np.ndarray = None
    ys: np.ndarray = None
    values: np.ndarray = None  # shape (len(xs), len(ys))

    family = "tabulated"

    def _b(self, x, y):
        from scipy.interpolate import RegularGridInterpolator

        interp = RegularGridInterpolator((np.log(self.xs), np.log(self.ys)), self.values,
                                         bounds_error=False, fill_value=0.0)
        return np.maximum(interp(np.stack([np.log(x), np.log(y)], axis=-1)), 0.0)

    def to_dict(self):
        d = super().to_dict()
        d["table_shape"] = list(np.shape(self.values))
        return d


def tabulated_kernel_from_triples(triples, **meta) -> Tabulated:
    """Build a tabulated kernel from ``(x, y, b)`` rows on a rectilinear grid."""
    arr = np.asarray(triples, dtype=float)
    xs = np.unique(arr[:, 0])
    ys = np.unique(arr[:, 1])
    vals = np.zeros((xs.size, ys.size))
    ix = np.searchsorted(xs, arr[:, 0])
    iy = np.searchsorted(ys, arr[:, 1])
    vals[ix, iy] = arr[:, 2]
    if np.any(vals < 0):
        raise ValueError("kernel values must be nonnegative")
    return Tabulated(xs=xs, ys=ys, values=vals, **meta)


# -- operations ------------------------------------------------------------

def kernel_eval(k: Kernel, x, y):
    """``b(x, y)``; zero when ``x >= y``."""
    return k(x, y)


def conservativity_defect(k: Kernel, y) -> float:
    """``|int_0^y x b(x, y) dx - y| / y``."""
    return k.conservativity_defect(y)


def n_alpha(k: Kernel, y, alpha: float):
    return k.n_alpha(y, alpha)


def n_one_alpha(k: Kernel, y, alpha: float):
    return k.n_one_alpha(y, alpha)


def n_zero(k: Kernel, y):
    return k.n_zero(y)


def fragmentation_matrix(grid: Grid, k: Kernel, a: AbsorptionRate, phase=None,
                         monotone: bool = False) -> np.ndarray:
    """Matrix of ``phi -> (B phi)(x_i)`` on node values.

    On LogUniform grids row ``i`` integrates ``a(y) b(x_i, y) phi(y)`` over
    ``[x_i, x_{n-1}]`` cell by cell, with ``phi`` replaced by the same
    Lagrange interpolants in ``log y`` that the resolvent uses and the
    kernel factor sampled at Gauss-Legendre points.  Rows therefore vary
    smoothly with ``i`` and transposes with respect to the grid pairing are
    consistent with it.  Entries next to the diagonal may be slightly
    negative (interpolation weights); the operator is positive up to the
    interpolation error.  Other grids use the end-corrected trapezoid rule.

    ``phase`` (LogUniform grids only) is an increasing callable ``Phi``; when
    given, the matrix acts on ``exp(Phi) phi`` and returns ``exp(Phi) B phi``,
    with the factor ``exp(Phi(x_i) - Phi(y)) <= 1`` applied exactly inside
    the quadrature.  ``monotone`` switches to linear interpolation, which
    makes every entry nonnegative at second-order accuracy.
    """
    x = grid.nodes
    n = grid.n
    mat = np.zeros((n, n))
    av = a(x)
    if a.is_zero or np.all(av == 0):
        return mat
    if grid.spacing.value != "LogUniform":
        if phase is not None or monotone:
            raise ValueError("phase-scaled or monotone fragmentation needs a LogUniform grid")
        return _trapezoid_fragmentation_matrix(grid, k, a)
    ds = grid.log_step
    s0 = float(np.log(x[0]))
    xg, wg = gauss_legendre(B_GL_POINTS)
    ph = None if phase is None else np.asarray(phase(x), dtype=float)
    for c in range(1, n):
        sig = s0 + (c - 1 + xg) * ds
        y = np.exp(sig)
        j0, j1 = cell_stencil(c, n, monotone)
        basis = lagrange_basis(np.arange(j0, j1 + 1, dtype=float), (sig - s0) / ds)
        # kernel factor for all rows below the cell: shape (c, points)
        kv = k(x[:c, None], y[None, :]) * (a(y) * y * wg * ds)[None, :]
        if ph is not None:
            kv = kv * np.exp(np.minimum(ph[:c, None] - phase(y)[None, :], 0.0))
        mat[:c, j0:j1 + 1] += kv @ basis
    return mat


def _trapezoid_fragmentation_matrix(grid: Grid, k: Kernel, a: AbsorptionRate) -> np.ndarray:
    x = grid.nodes
    n = grid.n
    widths = grid.widths
    av = a(x)
    bx = k(x[:, None], x[None, :])
    bx[np.diag_indices(n)] = 0.5 * k.diagonal(x)
    return bx * (av * widths)[None, :]


def apply_B(k: Kernel, a: AbsorptionRate, phi: GridFunction, matrix: np.ndarray | None = None) -> GridFunction:
    """``(B phi)(x) = int_x^{x_max} a(y) b(x, y) phi(y) dy`` at every node."""
    mat = fragmentation_matrix(phi.grid, k, a) if matrix is None else matrix
    vals = mat @ phi.values
    return GridFunction(phi.grid, vals, bool(phi.nonnegative))


# -- irreducibility ------------------------------------------------------------

@dataclass(frozen=True)
class Evidence:
    holds: bool
    detail: str

    def to_dict(self):
        return {"holds": self.holds, "detail": self.detail}


@dataclass(frozen=True)
class IrreducibilityReport:
    assumption1: Evidence
    assumption2: Evidence
    n0_margin: float | None
    measured_inf_supp_fraction: float
    corollary: dict

    def to_dict(self):
        m = self.n0_margin
        return {
            "assumption1": self.assumption1.to_dict(),
            "assumption2": self.assumption2.to_dict(),
            "n0_margin": None if m is None else ("inf" if np.isinf(m) else float(m)),
            "measured_inf_supp_fraction": float(self.measured_inf_supp_fraction),
            "corollary": self.corollary,
        }


def measured_inf_support(k: Kernel, ys) -> float:
    """``max_y inf{x : b(x, y) > 0} / y`` over probe masses, sampled in ``log x``."""
    worst = 0.0
    for y in np.atleast_1d(ys):
        z = np.concatenate([np.exp(np.linspace(np.log(1e-8), np.log(0.5), 200)),
                            1.0 - np.exp(np.linspace(np.log(0.5), np.log(1e-6), 200))])
        vals = k(z * y, np.full(z.shape, y))
        pos = np.nonzero(vals > 0)[0]
        frac = 1.0 if pos.size == 0 else (0.0 if pos[0] == 0 else float(z[pos[0] - 1]))
        worst = max(worst, frac)
    return worst


def irreducibility_report(k: Kernel, a: AbsorptionRate, probe=(1e-4, 1e4, 41),
                          p_margin: float = 1e-3) -> IrreducibilityReport:
    """Check the two alternative irreducibility assumptions.

    Assumption 1: ``supp(a b)`` is unbounded (declared, spot-checked at the
    top of the probe range).  Assumption 2: ``a > 0`` on the probe and the
    daughter support reaches down to a fixed fraction ``p < 1`` of the parent.
    The sufficient conditions ``n_0 >= 1 + delta`` and local boundedness of
    ``b`` are reported alongside.
    """
    lo, hi, m = probe
    ys = np.exp(np.linspace(np.log(lo), np.log(hi), int(m)))
    av = a(ys)
    top = ys[-3:]
    top_ok = bool(np.all(a(top) > 0) and all(np.any(k(np.linspace(0.01, 0.99, 50) * y, np.full(50, y)) > 0)
                                            for y in top))
    a1 = Evidence(bool(k.unbounded_ab_support and top_ok),
                  f"declared unbounded support={k.unbounded_ab_support}; a*b positive at probe top={top_ok}")
    p_meas = measured_inf_support(k, ys[:: max(1, int(m) // 8)])
    p_used = max(p_meas, k.inf_supp_fraction)
    a_pos = bool(np.all(av > 0))
    a2 = Evidence(bool(a_pos and p_used < 1.0 - p_margin),
                  f"a>0 on probe={a_pos}; inf-support fraction p={p_used:.6g} (declared {k.inf_supp_fraction:g})")
    n0 = np.asarray(k.n_zero(ys), dtype=float)
    margin = float(np.min(n0) - 1.0)
    bx = k(0.5 * ys, ys)
    locally_bounded = bool(np.all(np.isfinite(bx)))
    corollary = {"n0_at_least_one_plus_delta": bool(margin > 0),
                 "kernel_locally_bounded_sampled": locally_bounded}
    return IrreducibilityReport(a1, a2, margin, p_meas, corollary)
