"""Scenario configuration, command-line subcommands, reports and the primitive cache.

A scenario is an INI file (sections of ``key = value`` lines) read with
:mod:`configparser`.  Unknown sections or keys are hard errors that name the
offending line.  Every report is deterministic JSON (sorted keys, no
timestamps) wrapped in an envelope that records the schema version, grid
parameters, tolerances, probe ranges and the theorem-applicability verdict.
CSV files start with a ``# schema_version: N`` comment line.

Exit codes: 0 success, 1 numeric failure, 2 configuration or usage error.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import json
import os
import re
import sys
import tempfile
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from .characteristics import CharacteristicFlow, RegimeError, SolverError
from .evolution_spectral import (CFLError, ContractionError, EvolutionEngine, FitFailure,
                                 GenerationError, StagnationError)
from .fragmentation import (AbsorptionRate, IrreducibilityReport, Kernel, PowerLaw, irreducibility_report,
                            power_sum_rate, tabulated_absorption, tabulated_kernel_from_triples, uniform_binary,
                            zero_rate)
from .growth_model import (GrowthRate, InconclusiveClassification, Regime, RegimeReport, affine_rate,
                           classify_regime, constant_rate, linear_rate, power_rate, tabulated_rate)
from .thresholds import (BracketError, DeschReport, SublevelVerdict, ThresholdReport, desch_condition,
                         ratio_curve, thin_sublevel_check, threshold_report)
from .transport import CompatibilityError, ParameterError, TransportOperator
from .weighted_space import (DomainError, GridFunction, Quadrature, SpaceKind, Spacing, WeightedSpace, build_grid,
                             norm, tail_weight, weighted_moment)

SCHEMA_VERSION = 1
CACHE_ENV = "GFRAG_CACHE_DIR"
DEFAULT_CACHE = Path.home() / ".cache" / "gfrag"

THM_MAIN = "Thm-Main-result"
THM_BIS = "Thm-Main-result-Bis"
NO_VERDICT = "none"
VERDICT_BANNER = "no theorem certifies asynchronous exponential growth for this scenario; results are numerical only"


class ConfigError(ValueError):
    """Configuration problem, located by file, line, section and key when known."""

    def __init__(self, message: str, source: str | None = None, line: int | None = None,
                 section: str | None = None, key: str | None = None):
        super().__init__(message)
        self.message, self.source, self.line, self.section, self.key = message, source, line, section, key

    def __str__(self) -> str:
        where = self.source or "<config>"
        if self.line is not None:
            where += f":{self.line}"
        what = ""
        if self.section:
            what = f" [{self.section}]" + (f" {self.key}" if self.key else "")
        return f"{where}:{what} {self.message}"


class OverrideRequired(RuntimeError):
    """No theorem certifies the scenario and ``--override-verdict`` was not given."""


class CacheWarning(UserWarning):
    """A cache file was unreadable or stale and has been rebuilt."""


# -- config schema ------------------------------------------------------------------

_REQUIRED = object()


def _pos_float(v: str) -> float:
    x = float(v)
    if not (np.isfinite(x) and x > 0):
        raise ValueError(f"expected a positive number, got {v!r}")
    return x


def _nonneg_float(v: str) -> float:
    x = float(v)
    if not (np.isfinite(x) and x >= 0):
        raise ValueError(f"expected a nonnegative number, got {v!r}")
    return x


def _int(v: str) -> int:
    return int(v)


def _bool(v: str) -> bool:
    low = v.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {v!r}")


def _floats(v: str) -> tuple[float, ...]:
    parts = [p for p in re.split(r"[,\s]+", v.strip()) if p]
    return tuple(float(p) for p in parts)


def _pairs(v: str) -> tuple[tuple[float, float], ...]:
    """``c:q, c:q`` pairs (coefficient and exponent of a power sum)."""
    out = []
    for item in [p for p in v.split(",") if p.strip()]:
        c, _, q = item.partition(":")
        if not _:
            raise ValueError(f"expected coefficient:exponent, got {item.strip()!r}")
        out.append((float(c), float(q)))
    return tuple(out)


def _choice(*options: str) -> Callable[[str], str]:
    def parse(v: str) -> str:
        v = v.strip()
        if v not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {v!r}")
        return v
    return parse


def _text(v: str) -> str:
    return v.strip()


SCHEMA: dict[str, dict[str, tuple[Callable, Any]]] = {
    "scenario": {"name": (_text, "scenario"), "seed": (_int, 0)},
    "space": {"kind": (_choice("PowerWeight", "ShiftedWeight"), _REQUIRED), "alpha": (_pos_float, _REQUIRED)},
    "grid": {"x_min": (_pos_float, 1e-4), "x_max": (_pos_float, 50.0), "n": (_int, 512),
             "spacing": (_choice("LogUniform"), "LogUniform"),
             "quadrature": (_choice("trapezoid-log", "midpoint"), "trapezoid-log")},
    "growth": {"family": (_choice("constant", "linear", "affine", "power", "tabulated"), _REQUIRED),
               "c": (_pos_float, 1.0), "k": (_pos_float, 1.0), "p": (float, 1.0), "table": (_text, "")},
    "absorption": {"family": (_choice("zero", "constant", "linear", "x_plus_inverse", "power_sum", "tabulated"),
                              _REQUIRED),
                   "c": (_nonneg_float, 1.0), "k": (_nonneg_float, 1.0), "terms": (_pairs, ()),
                   "table": (_text, ""), "unbounded_at_zero": (_bool, False),
                   "unbounded_at_infinity": (_bool, False)},
    "kernel": {"family": (_choice("uniform_binary", "power_law", "tabulated"), "uniform_binary"),
               "nu": (float, 0.0), "table": (_text, ""), "inf_supp_fraction": (_nonneg_float, 0.0),
               "unbounded_ab_support": (_bool, True)},
    "initial": {"kind": (_choice("gaussian_bump", "indicator", "exp_decay", "tabulated"), "gaussian_bump"),
                "center": (_pos_float, 1.0), "width": (_pos_float, 0.3), "a": (_pos_float, 1.0),
                "b": (_pos_float, 2.0), "rate": (_pos_float, 1.0), "table": (_text, ""),
                "tail_tol": (_pos_float, 1e-6)},
    "time": {"t_max": (_pos_float, 2.0), "dt_out": (_pos_float, 0.25),
             "path": (_choice("duhamel", "stepper", "both"), "both")},
    "tolerances": {"eigen_tol": (_pos_float, 1e-12), "residual_tol": (_pos_float, 1e-3),
                   "max_iter": (_int, 5000), "desch_margin": (_pos_float, 1e-3), "alpha_tol": (_pos_float, 1e-3),
                   "oracle_tol": (_pos_float, 1e-6)},
    "probes": {"regime": (_floats, (1e-6, 1e6)), "sublevel_c": (_floats, (1.0, 10.0, 100.0, 1000.0)),
               "ratio_y": (_floats, (0.5, 1.0, 10.0, 100.0)),
               "ratio_alpha": (_floats, tuple(float(v) for v in np.linspace(1.25, 6.0, 20)))},
    "characteristics": {"points": (_floats, (0.5, 1.0, 2.0, 5.0)), "times": (_floats, (0.25, 1.0))},
    "transport": {"times": (_floats, (0.25, 1.0)), "samples": (_int, 100)},
    "resolvent": {"lambdas": (_floats, ())},
    "aeg": {"window": (_floats, (0.5, 2.0)), "bound": (_pos_float, 1.0), "t_max": (_pos_float, 4.0),
            "dt": (_pos_float, 0.25), "path": (_choice("duhamel", "stepper"), "duhamel")},
}

REQUIRED_SECTIONS = ("space", "growth", "absorption")


# -- config dataclasses --------------------------------------------------------------

@dataclass(frozen=True)
class GridConfig:
    x_min: float = 1e-4
    x_max: float = 50.0
    n: int = 512
    spacing: str = "LogUniform"
    quadrature: str = "trapezoid-log"

    def build(self):
        return build_grid(self.x_min, self.x_max, self.n, Spacing(self.spacing), Quadrature(self.quadrature))


@dataclass(frozen=True)
class RateConfig:
    """Family name plus its parameters (tables already loaded)."""

    family: str
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"family": self.family, **{k: _jsonable(v) for k, v in sorted(self.params.items())}}


@dataclass(frozen=True)
class InitialConfig:
    kind: str = "gaussian_bump"
    params: dict = field(default_factory=dict)
    tail_tol: float = 1e-6

    def function(self) -> Callable:
        p = self.params
        if self.kind == "gaussian_bump":
            c, w = p["center"], p["width"]
            return lambda x: np.exp(-0.5 * (np.log(np.asarray(x, dtype=float) / c) / w) ** 2)
        if self.kind == "indicator":
            lo, hi = p["a"], p["b"]
            return lambda x: ((np.asarray(x) >= lo) & (np.asarray(x) <= hi)).astype(float)
        if self.kind == "exp_decay":
            rate = p["rate"]
            return lambda x: np.exp(-rate * np.asarray(x, dtype=float))
        xs, vs = p["table"]
        lx = np.log(xs)
        return lambda x: np.interp(np.log(np.asarray(x, dtype=float)), lx, vs, left=0.0, right=0.0)

    def build(self, grid, space: WeightedSpace) -> GridFunction:
        func = self.function()
        tail = tail_weight(func, grid, space)
        if tail > self.tail_tol:
            raise ConfigError(f"initial datum carries relative weighted mass {tail:.3g} outside the grid "
                              f"(tail_tol = {self.tail_tol:g})", section="initial", key="tail_tol")
        vals = np.maximum(np.asarray(func(grid.nodes), dtype=float), 0.0)
        if not np.any(vals > 0):
            raise ConfigError("initial datum vanishes on the grid", section="initial")
        return GridFunction(grid, vals, True)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "tail_tol": self.tail_tol,
                **{k: _jsonable(v) for k, v in sorted(self.params.items())}}


@dataclass(frozen=True)
class TimeConfig:
    t_max: float = 2.0
    dt_out: float = 0.25
    path: str = "both"

    def samples(self) -> np.ndarray:
        m = int(np.floor(self.t_max / self.dt_out + 1e-9))
        t = self.dt_out * np.arange(m + 1)
        if self.t_max - t[-1] > 1e-12:
            t = np.append(t, self.t_max)
        return t


@dataclass(frozen=True)
class Tolerances:
    eigen_tol: float = 1e-12
    residual_tol: float = 1e-3
    max_iter: int = 5000
    desch_margin: float = 1e-3
    alpha_tol: float = 1e-3
    oracle_tol: float = 1e-6


@dataclass(frozen=True)
class ProbeConfig:
    regime: tuple = (1e-6, 1e6)
    sublevel_c: tuple = (1.0, 10.0, 100.0, 1000.0)
    ratio_y: tuple = (0.5, 1.0, 10.0, 100.0)
    ratio_alpha: tuple = tuple(float(v) for v in np.linspace(1.25, 6.0, 20))


@dataclass(frozen=True)
class AEGConfig:
    window: tuple = (0.5, 2.0)
    bound: float = 1.0
    t_max: float = 4.0
    dt: float = 0.25
    path: str = "duhamel"

    def samples(self) -> np.ndarray:
        m = int(np.floor(self.t_max / self.dt + 1e-9))
        return self.dt * np.arange(m + 1)


@dataclass(frozen=True)
class Scenario:
    """Parsed scenario file.  Build numerical objects with the ``build_*`` helpers."""

    name: str
    seed: int
    space: WeightedSpace
    grid: GridConfig
    growth: RateConfig
    absorption: RateConfig
    kernel: RateConfig
    initial: InitialConfig
    time: TimeConfig = TimeConfig()
    tolerances: Tolerances = Tolerances()
    probes: ProbeConfig = ProbeConfig()
    characteristics: dict = field(default_factory=dict)
    transport: dict = field(default_factory=dict)
    resolvent: dict = field(default_factory=dict)
    aeg: AEGConfig = AEGConfig()
    source: str = ""

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "seed": self.seed,
            "space": self.space.to_dict(),
            "grid": {"x_min": self.grid.x_min, "x_max": self.grid.x_max, "n": self.grid.n,
                     "spacing": self.grid.spacing, "quadrature": self.grid.quadrature},
            "growth": self.growth.to_dict(),
            "absorption": self.absorption.to_dict(),
            "kernel": self.kernel.to_dict(),
            "initial": self.initial.to_dict(),
        }


# -- parsing ------------------------------------------------------------------------------

def _line_index(text: str) -> tuple[dict, dict]:
    """Line numbers of section headers and of ``key = value`` lines."""
    sections, keys = {}, {}
    current = None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        m = re.match(r"^\[([^\]]+)\]", line)
        if m:
            current = m.group(1).strip().lower()
            sections.setdefault(current, no)
            continue
        m = re.match(r"^([^=:]+?)\s*[=:]", line)
        if m and current is not None:
            keys.setdefault((current, m.group(1).strip().lower()), no)
    return sections, keys


def _load_table(base: Path, rel: str, columns: int, where: dict) -> np.ndarray:
    path = (base / rel) if not os.path.isabs(rel) else Path(rel)
    try:
        arr = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read table {rel!r}: {exc}", **where) from exc
    if arr.shape[1] != columns or arr.shape[0] < 2:
        raise ConfigError(f"table {rel!r} needs {columns} comma-separated columns and >= 2 rows", **where)
    return arr


def parse_config(text: str, source: str = "<config>", base: Path | None = None) -> Scenario:
    """Parse scenario text.

    Raises
    ------
    ConfigError
        On syntax errors, unknown sections or keys, missing required entries
        and invalid values; the message carries the line number.
    """
    base = Path(".") if base is None else base
    parser = configparser.ConfigParser(interpolation=None, strict=True, delimiters=("=",),
                                       comment_prefixes=("#", ";"), inline_comment_prefixes=("#",))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"syntax error: {getattr(exc, 'message', str(exc)).splitlines()[0]}",
                          source=source, line=getattr(exc, "lineno", None)) from exc
    sec_lines, key_lines = _line_index(text)
    values: dict[str, dict[str, Any]] = {}
    for sec in parser.sections():
        name = sec.strip().lower()
        if name not in SCHEMA:
            raise ConfigError(f"unknown section (known: {', '.join(SCHEMA)})", source=source,
                              line=sec_lines.get(name), section=sec)
        for key, raw in parser.items(sec):
            where = dict(source=source, line=key_lines.get((name, key)), section=name, key=key)
            if key not in SCHEMA[name]:
                raise ConfigError(f"unknown key (known: {', '.join(SCHEMA[name])})", **where)
            conv = SCHEMA[name][key][0]
            try:
                values.setdefault(name, {})[key] = conv(raw)
            except (ValueError, TypeError) as exc:
                raise ConfigError(str(exc), **where) from exc
    for sec in REQUIRED_SECTIONS:
        if sec not in values:
            raise ConfigError("required section missing", source=source, section=sec)
    full: dict[str, dict[str, Any]] = {}
    for sec, spec in SCHEMA.items():
        given = values.get(sec, {})
        full[sec] = {}
        for key, (_, default) in spec.items():
            if key in given:
                full[sec][key] = given[key]
            elif default is _REQUIRED:
                raise ConfigError("required key missing", source=source, line=sec_lines.get(sec),
                                  section=sec, key=key)
            else:
                full[sec][key] = default

    def where(sec, key=None):
        return dict(source=source, line=key_lines.get((sec, key)) if key else sec_lines.get(sec),
                    section=sec, key=key)

    sp = full["space"]
    kind = SpaceKind.POWER if sp["kind"] == "PowerWeight" else SpaceKind.SHIFTED
    space = WeightedSpace(kind, sp["alpha"])
    g = full["grid"]
    if not g["x_max"] > g["x_min"]:
        raise ConfigError("x_max must exceed x_min", **where("grid", "x_max"))
    if g["n"] < 8:
        raise ConfigError("need at least 8 cells", **where("grid", "n"))
    grid = GridConfig(g["x_min"], g["x_max"], g["n"], g["spacing"], g["quadrature"])

    gr = full["growth"]
    fam = gr["family"]
    gparams = {"constant": {"c": gr["c"]}, "linear": {"k": gr["k"]}, "affine": {"k": gr["k"]},
               "power": {"k": gr["k"], "p": gr["p"]}}.get(fam)
    if fam == "tabulated":
        if not gr["table"]:
            raise ConfigError("tabulated growth needs a table file", **where("growth", "family"))
        arr = _load_table(base, gr["table"], 2, where("growth", "table"))
        gparams = {"table": (arr[:, 0], arr[:, 1])}
    growth = RateConfig(fam, gparams)

    ab = full["absorption"]
    fam = ab["family"]
    if fam == "power_sum":
        if not ab["terms"]:
            raise ConfigError("power_sum absorption needs terms = c:q, ...", **where("absorption", "family"))
        if any(c < 0 for c, _ in ab["terms"]):
            raise ConfigError("absorption coefficients must be nonnegative", **where("absorption", "terms"))
        aparams = {"terms": ab["terms"]}
    elif fam == "tabulated":
        if not ab["table"]:
            raise ConfigError("tabulated absorption needs a table file", **where("absorption", "family"))
        arr = _load_table(base, ab["table"], 2, where("absorption", "table"))
        aparams = {"table": (arr[:, 0], arr[:, 1]), "unbounded_at_zero": ab["unbounded_at_zero"],
                   "unbounded_at_infinity": ab["unbounded_at_infinity"]}
    else:
        aparams = {"constant": {"c": ab["c"]}, "linear": {"k": ab["k"]},
                   "x_plus_inverse": {"k": ab["k"]}, "zero": {}}[fam]
    absorption = RateConfig(fam, aparams)

    kn = full["kernel"]
    fam = kn["family"]
    meta = {"inf_supp_fraction": kn["inf_supp_fraction"], "unbounded_ab_support": kn["unbounded_ab_support"]}
    if fam == "power_law":
        if not -2.0 < kn["nu"] <= 0.0:
            raise ConfigError("power-law exponent must lie in (-2, 0]", **where("kernel", "nu"))
        kparams = {"nu": kn["nu"], **meta}
    elif fam == "tabulated":
        if not kn["table"]:
            raise ConfigError("tabulated kernel needs a table file", **where("kernel", "family"))
        kparams = {"table": _load_table(base, kn["table"], 3, where("kernel", "table")), **meta}
    else:
        kparams = dict(meta)
    kernel = RateConfig(fam, kparams)

    ini = full["initial"]
    kind_i = ini["kind"]
    iparams = {"gaussian_bump": {"center": ini["center"], "width": ini["width"]},
               "indicator": {"a": ini["a"], "b": ini["b"]},
               "exp_decay": {"rate": ini["rate"]}}.get(kind_i)
    if kind_i == "indicator" and not ini["b"] > ini["a"]:
        raise ConfigError("indicator needs b > a", **where("initial", "b"))
    if kind_i == "tabulated":
        if not ini["table"]:
            raise ConfigError("tabulated initial datum needs a table file", **where("initial", "kind"))
        arr = _load_table(base, ini["table"], 2, where("initial", "table"))
        if np.any(arr[:, 0] <= 0) or np.any(np.diff(arr[:, 0]) <= 0) or np.any(arr[:, 1] < 0):
            raise ConfigError("table needs increasing positive x and nonnegative values", **where("initial", "table"))
        iparams = {"table": (arr[:, 0], arr[:, 1])}
    initial = InitialConfig(kind_i, iparams, ini["tail_tol"])

    tm = full["time"]
    time_cfg = TimeConfig(tm["t_max"], tm["dt_out"], tm["path"])
    tol = Tolerances(**full["tolerances"])
    if tol.max_iter < 1:
        raise ConfigError("max_iter must be positive", **where("tolerances", "max_iter"))
    pr = full["probes"]
    if len(pr["regime"]) != 2 or not 0 < pr["regime"][0] < pr["regime"][1]:
        raise ConfigError("regime probe needs two increasing positive bounds", **where("probes", "regime"))
    if not pr["sublevel_c"] or min(pr["sublevel_c"]) <= 0:
        raise ConfigError("sublevel cutoffs must be positive", **where("probes", "sublevel_c"))
    probes = ProbeConfig(tuple(pr["regime"]), tuple(pr["sublevel_c"]), tuple(pr["ratio_y"]),
                         tuple(pr["ratio_alpha"]))
    ae = full["aeg"]
    if len(ae["window"]) != 2:
        raise ConfigError("window needs two bounds", **where("aeg", "window"))
    aeg = AEGConfig(tuple(ae["window"]), ae["bound"], ae["t_max"], ae["dt"], ae["path"])
    if full["transport"]["samples"] < 1:
        raise ConfigError("samples must be positive", **where("transport", "samples"))
    return Scenario(full["scenario"]["name"], full["scenario"]["seed"], space, grid, growth, absorption, kernel,
                    initial, time_cfg, tol, probes, dict(full["characteristics"]), dict(full["transport"]),
                    dict(full["resolvent"]), aeg, source)


def load_config(path: str | os.PathLike) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", source=str(path)) from exc
    return parse_config(text, source=str(path), base=path.parent)


def with_overrides(sc: Scenario, grid_n: int | None = None, tmax: float | None = None,
                   seed: int | None = None) -> Scenario:
    """Apply command-line overrides to a parsed scenario."""
    from dataclasses import replace

    if grid_n is not None:
        if grid_n < 8:
            raise ConfigError("--grid-n needs at least 8 cells")
        sc = replace(sc, grid=replace(sc.grid, n=int(grid_n)))
    if tmax is not None:
        if not tmax > 0:
            raise ConfigError("--tmax must be positive")
        sc = replace(sc, time=replace(sc.time, t_max=float(tmax)))
    if seed is not None:
        sc = replace(sc, seed=int(seed))
    return sc


# -- builders ------------------------------------------------------------------------------

def build_growth(spec: RateConfig) -> GrowthRate:
    p = spec.params
    if spec.family == "constant":
        return constant_rate(p["c"])
    if spec.family == "linear":
        return linear_rate(p["k"])
    if spec.family == "affine":
        return affine_rate(p["k"])
    if spec.family == "power":
        return power_rate(p["k"], p["p"])
    xs, rs = p["table"]
    return tabulated_rate(xs, rs)


def build_absorption(spec: RateConfig) -> AbsorptionRate:
    p = spec.params
    if spec.family == "zero":
        return zero_rate()
    if spec.family == "constant":
        return power_sum_rate([(p["c"], 0.0)], f"{p['c']:g}")
    if spec.family == "linear":
        return power_sum_rate([(p["k"], 1.0)], f"{p['k']:g}*x")
    if spec.family == "x_plus_inverse":
        return power_sum_rate([(p["k"], 1.0), (p["k"], -1.0)], f"{p['k']:g}*(x+1/x)")
    if spec.family == "power_sum":
        return power_sum_rate(p["terms"])
    xs, vs = p["table"]
    return tabulated_absorption(xs, vs, p["unbounded_at_zero"], p["unbounded_at_infinity"])


def build_kernel(spec: RateConfig) -> Kernel:
    p = dict(spec.params)
    meta = {"inf_supp_fraction": p.pop("inf_supp_fraction", 0.0),
            "unbounded_ab_support": p.pop("unbounded_ab_support", True)}
    if spec.family == "uniform_binary":
        return uniform_binary(**meta)
    if spec.family == "power_law":
        return PowerLaw(nu=p["nu"], **meta)
    return tabulated_kernel_from_triples(p["table"], **meta)


# -- theorem applicability ----------------------------------------------------------------------

@dataclass(frozen=True)
class ApplicabilityReport:
    """Hypothesis checks and the theorem (if any) that certifies AEG for a scenario."""

    regime: RegimeReport | None
    constants: dict
    desch: DeschReport | None
    thresholds: ThresholdReport | None
    thin_sublevel: tuple[SublevelVerdict, ...]
    irreducibility: IrreducibilityReport | None
    verdict: str
    failing: tuple[str, ...]

    @property
    def failing_hypothesis(self) -> str | None:
        return self.failing[0] if self.failing else None

    @property
    def banner(self) -> str | None:
        return VERDICT_BANNER if self.verdict == NO_VERDICT else None

    def summary(self) -> dict:
        return {"verdict": self.verdict, "failing_hypothesis": self.failing_hypothesis,
                "failing": list(self.failing), "banner": self.banner}

    def to_dict(self) -> dict:
        return {
            **self.summary(),
            "regime": None if self.regime is None else self.regime.to_dict(),
            "constants": {k: _jsonable(v) for k, v in self.constants.items()},
            "desch": None if self.desch is None else self.desch.to_dict(),
            "thresholds": None if self.thresholds is None else self.thresholds.to_dict(),
            "thin_sublevel": [v.to_dict() for v in self.thin_sublevel],
            "irreducibility": None if self.irreducibility is None else self.irreducibility.to_dict(),
        }


def decide_verdict(regime: Regime | None, space: WeightedSpace, constant: float, desch: DeschReport | None,
                   thin: Sequence[SublevelVerdict], irr: IrreducibilityReport | None) -> tuple[str, tuple[str, ...]]:
    """Theorem label and the list of failing hypotheses (first one is the headline)."""
    fail: list[str] = []
    if regime is Regime.PARTLY_SINGULAR:
        theorem = THM_MAIN
        if space.kind is not SpaceKind.SHIFTED:
            fail.append("space: the partly singular regime needs the shifted weight (1+x)^alpha")
        if not np.isfinite(constant):
            fail.append("growth: sublinear constant C is infinite")
    elif regime is Regime.FULLY_SINGULAR:
        theorem = THM_BIS
        if space.kind is not SpaceKind.POWER:
            fail.append("space: the fully singular regime is only covered with the weight x^alpha")
        if not np.isfinite(constant):
            fail.append("growth: constant varpi is infinite")
    else:
        return NO_VERDICT, ("regime: the growth rate fits neither singular regime",)
    if desch is None:
        fail.append("desch: not evaluated")
    elif desch.unsatisfiable:
        fail.append(f"desch: unsatisfiable in {desch.space.label} ({'; '.join(desch.facts) or 'structural'})")
    elif not desch.satisfied:
        fail.append(f"desch: L = {desch.L:.6g} is not below 1 - margin in {desch.space.label}")
    for v in thin:
        if v.verdict != "finite":
            fail.append(f"thin sublevel: c = {v.c:g} gives {v.verdict} ({v.detail})")
            break
    if irr is None or not (irr.assumption1.holds or irr.assumption2.holds):
        fail.append("irreducibility: neither support assumption holds")
    return (theorem if not fail else NO_VERDICT), tuple(fail)


def applicability(sc: Scenario, r: GrowthRate | None = None, a: AbsorptionRate | None = None,
                  k: Kernel | None = None, regime: RegimeReport | None = None) -> ApplicabilityReport:
    """Run every hypothesis check for a scenario."""
    r = build_growth(sc.growth) if r is None else r
    a = build_absorption(sc.absorption) if a is None else a
    k = build_kernel(sc.kernel) if k is None else k
    failing_pre: list[str] = []
    if regime is None:
        try:
            regime = classify_regime(r, probe=(*sc.probes.regime, 2001))
        except (InconclusiveClassification, ValueError) as exc:
            failing_pre.append(f"regime: classification refused ({exc})")
    desch = desch_condition(k, a, sc.space, margin=sc.tolerances.desch_margin, probe=(*sc.probes.regime, 481))
    thr = threshold_report(k, a, sc.space.kind, tol=sc.tolerances.alpha_tol)
    irr = irreducibility_report(k, a)
    if regime is None:
        return ApplicabilityReport(None, {}, desch, thr, (), irr, NO_VERDICT, tuple(failing_pre))
    constants = {"varpi": regime.varpi, "c_tilde": regime.c_tilde, "c_hat": regime.c_hat,
                 "sublinear_c": regime.sublinear_c}
    thin: tuple[SublevelVerdict, ...] = ()
    if regime.regime is not Regime.NEITHER:
        thin = tuple(thin_sublevel_check(a, r, regime.regime, sc.probes.sublevel_c,
                                         probe=(*sc.probes.regime, 1201)))
        const = regime.sublinear_c if regime.regime is Regime.PARTLY_SINGULAR else regime.varpi
        constants["lambda_bound"] = sc.space.alpha * const
    else:
        const = float("inf")
    verdict, failing = decide_verdict(regime.regime, sc.space, const, desch, thin, irr)
    return ApplicabilityReport(regime, constants, desch, thr, thin, irr, verdict, failing)


# -- primitive cache ------------------------------------------------------------------------------

def cache_dir() -> Path:
    return Path(os.environ.get(CACHE_ENV) or DEFAULT_CACHE)


def cache_key(r: GrowthRate, a: AbsorptionRate, grid) -> str:
    h = hashlib.sha256()
    h.update(json.dumps(r.spec, sort_keys=True, default=_jsonable).encode())
    h.update(json.dumps(a.spec, sort_keys=True, default=_jsonable).encode())
    h.update(grid.fingerprint().encode())
    return h.hexdigest()[:24]


class PrimitiveCache:
    """Directory of ``.npz`` files holding primitive tables, keyed by growth, absorption and grid hashes.

    Writes go to a temporary file in the same directory followed by an
    atomic rename, so concurrent runs never observe a partial file.  Files
    that fail to load or carry a different key are rebuilt with a
    :class:`CacheWarning`.
    """

    def __init__(self, root: Path | None = None):
        self.root = cache_dir() if root is None else Path(root)

    def path(self, key: str) -> Path:
        return self.root / f"prim-{key}.npz"

    def load(self, key: str) -> dict | None:
        p = self.path(key)
        if not p.exists():
            return None
        try:
            with np.load(p, allow_pickle=False) as z:
                data = {name: z[name] for name in z.files}
            if str(data.pop("key")) != key:
                raise ValueError("key mismatch")
            tables: dict = {}
            for name, arr in data.items():
                owner, _, part = name.partition("__")
                tables.setdefault(owner, {})[part] = arr
            return tables
        except Exception as exc:  # any unreadable file is rebuilt
            warnings.warn(f"cache file {p.name} is unusable ({exc}); rebuilding", CacheWarning, stacklevel=2)
            try:
                p.unlink()
            except OSError:
                pass
            return None

    def store(self, key: str, tables: dict) -> Path:
        self.root.mkdir(parents=True, exist_ok=True)
        arrays = {"key": np.array(key)}
        for owner, table in tables.items():
            for part, arr in table.items():
                arrays[f"{owner}__{part}"] = np.asarray(arr)
        fd, tmp = tempfile.mkstemp(dir=self.root, prefix=".prim-", suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                np.savez(fh, **arrays)
            os.replace(tmp, self.path(key))
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        return self.path(key)

    def entries(self) -> list[Path]:
        if not self.root.exists():
            return []
        return sorted(self.root.glob("prim-*.npz"))

    def clear(self) -> int:
        n = 0
        for p in self.entries():
            p.unlink()
            n += 1
        for p in self.root.glob(".prim-*.tmp") if self.root.exists() else []:
            p.unlink()
        return n


# -- session: built objects for one scenario ---------------------------------------------------------

class Session:
    """Numerical objects for a scenario, built lazily and shared between report sections."""

    def __init__(self, sc: Scenario, override: bool = False, use_cache: bool = True):
        self.sc = sc
        self.override = override
        self.use_cache = use_cache
        self.r = build_growth(sc.growth)
        self.a = build_absorption(sc.absorption)
        self.k = build_kernel(sc.kernel)
        self.grid = sc.grid.build()
        self.rng = np.random.default_rng(sc.seed)
        self._applicability: ApplicabilityReport | None = None
        self._transport: TransportOperator | None = None
        self._engine: EvolutionEngine | None = None
        self.cache_hit: bool | None = None

    @property
    def applicability(self) -> ApplicabilityReport:
        if self._applicability is None:
            self._applicability = applicability(self.sc, self.r, self.a, self.k)
        return self._applicability

    @property
    def regime(self) -> RegimeReport:
        rep = self.applicability.regime
        if rep is None:
            raise RegimeError(self.applicability.failing_hypothesis or "regime classification refused")
        return rep

    @property
    def flow(self) -> CharacteristicFlow:
        return CharacteristicFlow(self.r, self.regime)

    @property
    def transport(self) -> TransportOperator:
        if self._transport is None:
            tables = None
            cache = PrimitiveCache() if self.use_cache else None
            key = cache_key(self.r, self.a, self.grid)
            if cache is not None:
                tables = cache.load(key)
                self.cache_hit = tables is not None
            if tables and "R" in tables:
                self.r.use_primitive_table(tables["R"])
            op = TransportOperator(self.flow, self.grid, self.sc.space, self.a,
                                   psi_table=(tables or {}).get("psi"))
            if cache is not None and tables is None:
                cache.store(key, op.primitive_tables())
            self._transport = op
        return self._transport

    @property
    def engine(self) -> EvolutionEngine:
        if self._engine is None:
            app = self.applicability
            if app.verdict == NO_VERDICT and not self.override:
                raise OverrideRequired(f"no theorem certifies this scenario ({app.failing_hypothesis}); "
                                       "pass --override-verdict to run anyway")
            self._engine = EvolutionEngine(self.transport, self.k, override=self.override, desch=app.desch)
        return self._engine

    def initial(self) -> GridFunction:
        return self.sc.initial.build(self.grid, self.sc.space)

    def random_function(self) -> GridFunction:
        """Nonnegative mixture of four log-normal bumps inside the grid (seeded)."""
        lo, hi = np.log(self.grid.x_min) + 2.0, np.log(self.grid.x_max) - 1.0
        c = self.rng.uniform(lo, hi, 4)
        w = self.rng.uniform(0.3, 0.8, 4)
        amp = self.rng.uniform(0.2, 1.0, 4)
        s = np.log(self.grid.nodes)
        vals = sum(A * np.exp(-0.5 * ((s - cc) / ww) ** 2) for A, cc, ww in zip(amp, c, w))
        return GridFunction(self.grid, vals, True)

    def envelope(self, command: str, result: dict, probes: dict | None = None) -> dict:
        app = self.applicability
        return {
            "schema_version": SCHEMA_VERSION,
            "command": command,
            "scenario": self.sc.to_dict(),
            "grid": self.grid.params(),
            "tolerances": {k: getattr(self.sc.tolerances, k) for k in Tolerances.__dataclass_fields__},
            "probe_ranges": {"regime": list(self.sc.probes.regime), **(probes or {})},
            "applicability": app.summary(),
            "result": result,
        }


# -- serialisation ---------------------------------------------------------------------------------

def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if np.isnan(v):
            return "nan"
        if np.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if hasattr(v, "value") and isinstance(getattr(v, "value"), str):
        return v.value
    if v is None or isinstance(v, str):
        return v
    if hasattr(v, "to_dict"):
        return _jsonable(v.to_dict())
    return str(v)


def dumps_json(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def csv_text(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    buf.write(f"# schema_version: {SCHEMA_VERSION}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format(v, ".17g") if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


class Outputs:
    """Stage files and publish them together; staged files are removed on failure."""

    def __init__(self, out_dir: Path):
        self.out_dir = Path(out_dir)
        self.staged: list[tuple[Path, Path]] = []

    def add(self, name: str, content: str | bytes):
        self.out_dir.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=self.out_dir, prefix=f".{name}.", suffix=".tmp")
        with os.fdopen(fd, "wb") as fh:
            fh.write(content.encode() if isinstance(content, str) else content)
        self.staged.append((Path(tmp), self.out_dir / name))

    def commit(self) -> list[Path]:
        done = []
        for tmp, final in self.staged:
            os.replace(tmp, final)
            done.append(final)
        self.staged = []
        return done

    def abort(self):
        for tmp, _ in self.staged:
            if tmp.exists():
                tmp.unlink()
        self.staged = []


def _svg(series: Sequence[tuple[str, np.ndarray, np.ndarray]], xlabel: str, ylabel: str,
         logx: bool = False, logy: bool = False) -> bytes:
    """Line chart as SVG text (needs matplotlib)."""
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError as exc:  # pragma: no cover - depends on the environment
        raise ConfigError("--svg needs matplotlib (pip install 'artifact[plot]')") from exc
    matplotlib.rcParams["svg.hashsalt"] = "gfrag"
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, x, y in series:
        ax.plot(x, y, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.legend()
    buf = io.BytesIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return buf.getvalue()


# -- commands ----------------------------------------------------------------------------------------

def cmd_validate(s: Session, out: Outputs, svg: bool = False) -> int:
    report = s.envelope("validate", s.applicability.to_dict())
    out.add("applicability.json", dumps_json(report))
    return 0


def cmd_characteristics(s: Session, out: Outputs, svg: bool = False) -> int:
    flow = s.flow
    pts = np.asarray(s.sc.characteristics["points"], dtype=float)
    times = np.asarray(s.sc.characteristics["times"], dtype=float)
    rows, flow_err, inv_err = [], 0.0, 0.0
    front = {}
    for t in times:
        fwd = np.asarray(flow.forward(pts, np.full(pts.shape, t)), dtype=float)
        back = np.asarray(flow.backward(pts, np.full(pts.shape, t)), dtype=float)
        jac = np.asarray(flow.jacobian(pts, np.full(pts.shape, t)), dtype=float)
        half = np.asarray(flow.forward(flow.forward(pts, np.full(pts.shape, t / 2)), np.full(pts.shape, t / 2)))
        flow_err = max(flow_err, float(np.max(np.abs(half - fwd) / fwd)))
        inv = np.asarray(flow.backward(fwd, np.full(pts.shape, t)), dtype=float)
        inv_err = max(inv_err, float(np.max(np.abs(inv - pts) / pts)))
        for x, f_, b_, j_ in zip(pts, fwd, back, jac):
            rows.append((float(t), float(x), float(f_), "below_front" if np.isnan(b_) else float(b_),
                         "nan" if np.isnan(j_) else float(j_)))
        if flow.partly_singular and t > 0:
            front[f"{t:g}"] = float(flow.front(t))
    result = {"regime": s.regime.regime.value, "points": pts, "times": times, "front": front,
              "flow_property_error": flow_err, "inverse_consistency_error": inv_err,
              "table": [list(r) for r in rows]}
    out.add("characteristics.json", dumps_json(s.envelope("characteristics", result)))
    out.add("characteristics.csv", csv_text(["t", "x", "forward", "backward", "jacobian"], rows))
    return 0


def cmd_transport(s: Session, out: Outputs, svg: bool = False) -> int:
    op = s.transport
    times = [float(t) for t in s.sc.transport["times"]]
    samples = int(s.sc.transport["samples"])
    fs = [s.random_function() for _ in range(samples)]
    norms, rows = {}, []
    for t in times:
        rep = op.operator_norm_U0(t, probe=(*s.sc.probes.regime, 4001))
        emp = max(op.transported_norm(t, f) / norm(f, s.sc.space) for f in fs)
        norms[f"{t:g}"] = {"operator_norm": rep.to_dict(), "empirical_norm": emp}
        rows.append((t, rep.value, emp))
    bound = op.lambda_bound
    base = bound if bound > 0 else 1.0
    oracles = []
    for lam in (base, 2 * base, 10 * base):
        f = fs[0]
        p = op.oracle_pointwise(lam, f, tol=s.sc.tolerances.oracle_tol)
        q = op.oracle_smoothing(lam, f, tol=s.sc.tolerances.oracle_tol)
        oracles.append({"lambda": lam, "pointwise": p.to_dict(), "smoothing": q.to_dict()})
    result = {"lambda_bound": bound, "growth_constant": op.growth_constant, "norms": norms, "oracles": oracles,
              "samples": samples}
    out.add("transport.json", dumps_json(s.envelope("transport", result)))
    out.add("transport.csv", csv_text(["t", "operator_norm", "empirical_norm"], rows))
    return 0


def cmd_resolvent(s: Session, out: Outputs, svg: bool = False) -> int:
    eng = s.engine
    lams = list(s.sc.resolvent["lambdas"]) or [eng.lambda0, 2.0 * eng.lambda0]
    f = s.random_function()
    nf = eng._norm(f.values)
    entries = []
    tr = s.transport
    for lam in lams:
        uT = tr.resolvent_T(lam, f)
        resT = eng._norm(lam * uT.values - tr.generator_action(uT.values) - f.values) / nf
        uA = eng.resolvent_A(lam, f)
        entries.append({"lambda": lam, "residual_T": resT, "residual_A": eng.resolvent_residual(lam, uA, f)})
    two = {}
    if len(lams) >= 2:
        lam, mu = lams[0], lams[1]
        for name, solve in (("T", lambda l, g: tr.resolvent_T(l, g)), ("A", lambda l, g: eng.resolvent_A(l, g))):
            ul, um = solve(lam, f), solve(mu, f)
            c = solve(lam, um)
            two[name] = eng._norm(ul.values - um.values - (mu - lam) * c.values) / eng._norm(ul.values)
    result = {"lambda0": eng.lambda0, "lambda_desch": eng.lambda_desch(), "entries": entries,
              "two_point": two, "banner": eng.banner}
    out.add("resolvent.json", dumps_json(s.envelope("resolvent", result)))
    return 0


def cmd_simulate(s: Session, out: Outputs, svg: bool = False) -> int:
    eng = s.engine
    f = s.initial()
    times = s.sc.time.samples()
    paths = ["duhamel", "stepper"] if s.sc.time.path == "both" else [s.sc.time.path]
    x = s.grid.nodes
    rows, states = [], {}
    for path in paths:
        states[path] = eng.evolve(f, times, path)
        for t, u in zip(times, states[path]):
            rows.append((path, float(t), eng._norm(u.values), weighted_moment(u, np.ones_like(x)),
                         weighted_moment(u, x), weighted_moment(u, s.r(x))))
    cross = []
    if len(paths) == 2:
        for t, u, v in zip(times, states["duhamel"], states["stepper"]):
            cross.append({"t": float(t), "distance": eng._norm(u.values - v.values) / max(eng._norm(u.values),
                                                                                              1e-300)})
    result = {"paths": paths, "times": times, "cross_check": cross, "banner": eng.banner,
              "series": [dict(zip(["path", "t", "norm", "M0", "M1", "growth_moment"], r)) for r in rows]}
    out.add("simulate.json", dumps_json(s.envelope("simulate", result)))
    out.add("simulate.csv", csv_text(["path", "t", "norm", "M0", "M1", "growth_moment"], rows))
    if svg:
        ser = [(p, times, np.array([r[2] for r in rows if r[0] == p])) for p in paths]
        out.add("simulate.svg", _svg(ser, "t", "norm", logy=True))
    return 0


def _eigen(s: Session, eng: EvolutionEngine):
    tol = s.sc.tolerances
    return eng.perron_eigenpair(tol=tol.eigen_tol, max_iter=tol.max_iter, residual_tol=tol.residual_tol)


def cmd_eigen(s: Session, out: Outputs, svg: bool = False) -> int:
    eng = s.engine
    ev = _eigen(s, eng)
    result = {"eigen": ev.to_dict(), "banner": eng.banner}
    out.add("eigen.json", dumps_json(s.envelope("eigen", result)))
    x = s.grid.nodes
    out.add("eigenvectors.csv", csv_text(["x", "f", "e"], list(zip(x, ev.f_vec.values, ev.e_vec.values))))
    if svg:
        out.add("eigen.svg", _svg([("f", x, ev.f_vec.values), ("e", x, ev.e_vec.values)], "x", "value",
                                  logx=True))
    return 0 if ev.accepted else 1


def cmd_aeg(s: Session, out: Outputs, svg: bool = False) -> int:
    eng = s.engine
    ev = _eigen(s, eng)
    if not ev.accepted:
        out.add("eigen.json", dumps_json(s.envelope("aeg", {"eigen": ev.to_dict(), "banner": eng.banner})))
        return 1
    cfg = s.sc.aeg
    gap = eng.gap_proxy(tuple(cfg.window), cfg.bound, eigen=ev)
    rep = eng.aeg_diagnose(ev, s.initial(), cfg.samples(), gap=gap, path=cfg.path)
    result = {"aeg": rep.to_dict(), "eigen": ev.to_dict(), "banner": eng.banner}
    probes = {"window": list(cfg.window), "t_grid": [0.0, cfg.t_max]}
    out.add("aeg.json", dumps_json(s.envelope("aeg", result, probes)))
    out.add("aeg.csv", csv_text(["t", "distance"], list(rep.decay_curve)))
    if svg:
        t, d = np.array(rep.decay_curve).T
        out.add("aeg.svg", _svg([("distance to projection", t, d)], "t", "distance", logy=True))
    return 0


def cmd_threshold(s: Session, out: Outputs, svg: bool = False) -> int:
    app = s.applicability
    pr = s.sc.probes
    curves = {}
    for kind in (SpaceKind.POWER, SpaceKind.SHIFTED):
        curves[kind.value] = {f"{y:g}": ratio_curve(s.k, y, pr.ratio_alpha, kind) for y in pr.ratio_y}
    result = {"thresholds": app.thresholds.to_dict(), "desch": app.desch.to_dict(),
              "ratio_alpha": list(pr.ratio_alpha), "ratio_curves": curves}
    probes = {"ratio_y": list(pr.ratio_y)}
    out.add("threshold.json", dumps_json(s.envelope("threshold", result, probes)))
    return 0


COMMANDS: dict[str, Callable[[Session, Outputs, bool], int]] = {
    "validate": cmd_validate,
    "characteristics": cmd_characteristics,
    "transport": cmd_transport,
    "resolvent": cmd_resolvent,
    "simulate": cmd_simulate,
    "threshold": cmd_threshold,
    "eigen": cmd_eigen,
    "aeg": cmd_aeg,
}


def cmd_cache(action: str, sc: Scenario | None) -> tuple[int, dict]:
    cache = PrimitiveCache()
    if action == "clear":
        return 0, {"action": "clear", "removed": cache.clear(), "dir": str(cache.root)}
    if action == "status":
        return 0, {"action": "status", "dir": str(cache.root), "entries": [p.name for p in cache.entries()]}
    if sc is None:
        raise ConfigError("cache warm needs --config")
    s = Session(sc)
    s.transport  # builds and stores the tables
    return 0, {"action": "warm", "dir": str(cache.root), "key": cache_key(s.r, s.a, s.grid),
               "hit": bool(s.cache_hit)}


# -- entry point ---------------------------------------------------------------------------------------

NUMERIC_ERRORS = (StagnationError, FitFailure, ContractionError, ParameterError, SolverError, BracketError,
                  RegimeError, InconclusiveClassification, np.linalg.LinAlgError, FloatingPointError)
CONFIG_ERRORS = (ConfigError, OverrideRequired, GenerationError, CompatibilityError, DomainError, CFLError)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gfrag", description="Growth-fragmentation semigroup numerics.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in [*COMMANDS, "cache"]:
        sp = sub.add_parser(name)
        if name == "cache":
            sp.add_argument("action", choices=("warm", "clear", "status"))
        sp.add_argument("--config", type=str, default=None, help="scenario INI file")
        sp.add_argument("--out", type=str, default=None, help="output directory (default: gfrag_out)")
        sp.add_argument("--override-verdict", action="store_true",
                        help="run even when no theorem certifies the scenario")
        sp.add_argument("--svg", action="store_true", help="also write SVG line charts")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--grid-n", type=int, default=None)
        sp.add_argument("--tmax", type=float, default=None)
    return p


def run(argv: Sequence[str] | None = None, stdout=None, stderr=None) -> int:
    """Run the CLI and return the exit code."""
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    out = None
    try:
        sc = None
        if args.config is not None:
            sc = with_overrides(load_config(args.config), args.grid_n, args.tmax, args.seed)
        if args.command == "cache":
            code, info = cmd_cache(args.action, sc)
            stdout.write(dumps_json(info))
            return code
        if sc is None:
            raise ConfigError(f"{args.command} needs --config")
        out = Outputs(Path(args.out or "gfrag_out"))
        session = Session(sc, override=args.override_verdict)
        code = COMMANDS[args.command](session, out, args.svg)
        written = out.commit()
        if args.command == "validate":
            stdout.write(written[0].read_text())
        else:
            stdout.write(dumps_json({"command": args.command, "exit_code": code,
                                     "files": [str(p) for p in written],
                                     "verdict": session.applicability.verdict}))
        return code
    except CONFIG_ERRORS as exc:
        if out is not None:
            out.abort()
        stderr.write(f"config error: {exc}\n")
        return 2
    except NUMERIC_ERRORS as exc:
        if out is not None:
            out.abort()
        stderr.write(f"numeric failure: {type(exc).__name__}: {exc}\n")
        return 1


def main(argv: Sequence[str] | None = None) -> None:
    sys.exit(run(argv))
