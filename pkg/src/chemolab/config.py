"""Scenario and sweep configuration files (TOML).

A scenario file looks like::

    [model]
    family = "hutchinson"      # chemostat, hyperbolic, chemo_logistic,
                               # hutchinson, wright or linear

    [model.dimensionless]      # or [model.dimensional] with C, D, A, B, M, R
    a = 1.0
    m = 2.0
    r = 1.0

    [history]
    constant = 0.5             # or polynomial = [c0, c1, ...] in t on [-r, 0]

    [solver]                   # optional
    abs_tol = 1e-8

    [run]
    horizon = 100.0
    stride = 0.1               # optional, default horizon / 1000

    [output]
    csv = "run.csv"
    summary = "run.json"       # optional

Wright's equation takes ``rho`` and the linear test equation ``p``, ``q``, ``r``
in the dimensionless block.  Two-component (chemostat) histories give one
``[s, x]`` pair per constant or per polynomial coefficient.

A sweep file is a scenario plus::

    [sweep]
    parameter = "rho"
    min = 1.0
    max = 2.2
    count = 13                 # or values = [...]
    verdict = true             # classify the long-run state of every point
    horizon = 500.0            # optional fixed horizon; adaptive when absent
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .dde import History, SolverOptions
from .models import (
    DimensionalParams,
    DimensionlessParams,
    Family,
    LinearParams,
    Model,
    WrightParams,
    nondimensionalize,
)

__all__ = [
    "ConfigError",
    "ScenarioConfig",
    "SweepConfig",
    "load_scenario",
    "load_sweep",
    "parse_scenario",
    "parse_sweep",
]


class ConfigError(ValueError):
    """Malformed configuration; ``where`` names the offending line or field."""

    def __init__(self, where, message):
        super().__init__(f"{where}: {message}")
        self.where = where


_DIMENSIONLESS_KEYS = {
    Family.CHEMOSTAT: ("a", "b", "m", "r"),
    Family.HYPERBOLIC: ("a", "b", "m", "r"),
    Family.CHEMO_LOGISTIC: ("a", "m", "r"),
    Family.HUTCHINSON: ("a", "m", "r"),
    Family.WRIGHT: ("rho",),
    Family.LINEAR: ("p", "q", "r"),
}
_DIMENSIONAL_KEYS = ("C", "D", "A", "B", "M", "R")


@dataclass(frozen=True)
class ScenarioConfig:
    family: Family
    dimensionless: dict
    dimensional: dict | None
    history: dict
    solver: SolverOptions | None
    horizon: float
    stride: float | None = None
    csv: str | None = None
    summary: str | None = None

    @property
    def options(self):
        """Solver options, library defaults when the file has no [solver] section."""
        return SolverOptions() if self.solver is None else self.solver

    def model(self):
        p = self.dimensionless
        fam = self.family
        if fam is Family.WRIGHT:
            return Model(fam, WrightParams(p["rho"]))
        if fam is Family.LINEAR:
            return Model(fam, LinearParams(p["p"], p["q"], p["r"]))
        return Model(fam, DimensionlessParams(p["a"], p.get("b", 0.0), p["m"], p["r"]))

    def initial_history(self, model=None):
        model = self.model() if model is None else model
        r = model.delay
        try:
            if "constant" in self.history:
                return History.constant(self.history["constant"], r)
            return History.polynomial(self.history["polynomial"], r)
        except ValueError as exc:
            raise ConfigError("history", str(exc)) from None

    def with_parameter(self, name, value):
        """Copy with one parameter replaced (dimensional or dimensionless block)."""
        if self.dimensional is not None:
            dim = dict(self.dimensional)
            dim[name] = value
            return replace(self, dimensional=dim, dimensionless=_derive(dim, self.family))
        p = dict(self.dimensionless)
        p[name] = value
        return replace(self, dimensionless=p)

    def parameter_names(self):
        block = self.dimensional if self.dimensional is not None else self.dimensionless
        return tuple(block)


@dataclass(frozen=True)
class SweepConfig:
    base: ScenarioConfig
    parameter: str
    values: tuple
    verdict: bool = True
    horizon: float | None = None
    max_horizon: float | None = None


def _number(value, where):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(where, f"expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(where, "must be finite")
    return value


def _table(doc, key, where, required=True):
    value = doc.get(key)
    if value is None:
        if required:
            raise ConfigError(where, f"missing [{key}] section")
        return {}
    if not isinstance(value, dict):
        raise ConfigError(where, f"[{key}] must be a table")
    return value


def _derive(dim, family):
    try:
        p = nondimensionalize(DimensionalParams(**dim))
    except ValueError as exc:
        raise ConfigError("model.dimensional", str(exc)) from None
    out = {"a": p.a, "b": p.b, "m": p.m, "r": p.r}
    if family in (Family.CHEMO_LOGISTIC, Family.HUTCHINSON):
        out["b"] = 0.0
    return out


def _check_unknown(table, allowed, where):
    extra = sorted(set(table) - set(allowed))
    if extra:
        raise ConfigError(where, f"unknown key(s): {', '.join(extra)}")


def parse_scenario(doc):
    model_t = _table(doc, "model", "model")
    fam_name = model_t.get("family")
    try:
        family = Family(fam_name)
    except ValueError:
        raise ConfigError("model.family", f"unknown family {fam_name!r}; choose from "
                          + ", ".join(f.value for f in Family)) from None
    has_dl = "dimensionless" in model_t
    has_d = "dimensional" in model_t
    if has_dl == has_d:
        raise ConfigError("model", "exactly one of [model.dimensionless] and "
                          "[model.dimensional] must be present")
    _check_unknown(model_t, ("family", "dimensionless", "dimensional"), "model")

    dimensional = None
    if has_d:
        if family in (Family.WRIGHT, Family.LINEAR):
            raise ConfigError("model.dimensional", f"{family.value} has no dimensional form")
        raw = _table(model_t, "dimensional", "model.dimensional")
        _check_unknown(raw, _DIMENSIONAL_KEYS, "model.dimensional")
        dimensional = {}
        for key in _DIMENSIONAL_KEYS:
            if key not in raw:
                if key == "R":
                    dimensional[key] = 0.0
                    continue
                raise ConfigError(f"model.dimensional.{key}", "missing")
            dimensional[key] = _number(raw[key], f"model.dimensional.{key}")
        dimensionless = _derive(dimensional, family)
    else:
        raw = _table(model_t, "dimensionless", "model.dimensionless")
        keys = _DIMENSIONLESS_KEYS[family]
        allowed = keys + (("b",) if family in (Family.CHEMO_LOGISTIC, Family.HUTCHINSON) else ())
        _check_unknown(raw, allowed, "model.dimensionless")
        dimensionless = {}
        for key in keys:
            if key not in raw:
                raise ConfigError(f"model.dimensionless.{key}", "missing")
            dimensionless[key] = _number(raw[key], f"model.dimensionless.{key}")
        if "b" in raw and family in (Family.CHEMO_LOGISTIC, Family.HUTCHINSON):
            if _number(raw["b"], "model.dimensionless.b") != 0.0:
                raise ConfigError("model.dimensionless.b", f"{family.value} requires b = 0")

    hist = _table(doc, "history", "history")
    _check_unknown(hist, ("constant", "polynomial"), "history")
    if ("constant" in hist) == ("polynomial" in hist):
        raise ConfigError("history", "give exactly one of 'constant' or 'polynomial'")
    dim = 2 if family is Family.CHEMOSTAT else 1
    for key, value in hist.items():
        arr = _array(value, f"history.{key}")
        expect = {("constant", 1): 0, ("constant", 2): 1,
                  ("polynomial", 1): 1, ("polynomial", 2): 2}[(key, dim)]
        if arr.ndim != expect or (dim == 2 and arr.shape[-1] != 2) or arr.size == 0:
            raise ConfigError(f"history.{key}", f"wrong shape {arr.shape} for a "
                              f"{dim}-component state")

    solver_t = _table(doc, "solver", "solver", required=False)
    _check_unknown(solver_t, ("abs_tol", "rel_tol", "max_step", "initial_step"), "solver")
    solver = None
    if "solver" in doc:
        kwargs = {k: _number(v, f"solver.{k}") for k, v in solver_t.items()}
        try:
            solver = SolverOptions(**kwargs)
        except ValueError as exc:
            raise ConfigError("solver", str(exc)) from None

    run_t = _table(doc, "run", "run")
    _check_unknown(run_t, ("horizon", "stride"), "run")
    if "horizon" not in run_t:
        raise ConfigError("run.horizon", "missing")
    horizon = _number(run_t["horizon"], "run.horizon")
    if horizon <= 0:
        raise ConfigError("run.horizon", "must be > 0")
    stride = None
    if "stride" in run_t:
        stride = _number(run_t["stride"], "run.stride")
        if stride <= 0:
            raise ConfigError("run.stride", "must be > 0")

    out_t = _table(doc, "output", "output", required=False)
    _check_unknown(out_t, ("csv", "summary"), "output")
    for key, value in out_t.items():
        if not isinstance(value, str):
            raise ConfigError(f"output.{key}", "must be a path string")

    cfg = ScenarioConfig(family, dimensionless, dimensional, dict(hist), solver, horizon,
                         stride, out_t.get("csv"), out_t.get("summary"))
    _validate_model(cfg)
    return cfg


def _array(value, where):
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(where, "must be a number or a (nested) list of numbers") from None
    if not np.all(np.isfinite(arr)):
        raise ConfigError(where, "values must be finite")
    return arr


def _validate_model(cfg):
    try:
        model = cfg.model()
        cfg.options.resolved_max_step(model.delay)
    except ValueError as exc:
        block = "model.dimensional" if cfg.dimensional is not None else "model.dimensionless"
        msg = str(exc)
        first = msg.split(" ", 1)[0]
        if "max_step" in msg:
            block = "solver.max_step"
        elif first in cfg.parameter_names():
            block = f"{block}.{first}"
        raise ConfigError(block, msg) from None
    cfg.initial_history(model)


def parse_sweep(doc):
    base = parse_scenario(doc)
    sw = _table(doc, "sweep", "sweep")
    _check_unknown(sw, ("parameter", "values", "min", "max", "count", "verdict",
                        "horizon", "max_horizon"), "sweep")
    name = sw.get("parameter")
    if name not in base.parameter_names():
        raise ConfigError("sweep.parameter", f"{name!r} is not a parameter of the base "
                          f"scenario ({', '.join(base.parameter_names())})")
    if "values" in sw:
        if any(k in sw for k in ("min", "max", "count")):
            raise ConfigError("sweep", "give either 'values' or 'min'/'max'/'count'")
        if not isinstance(sw["values"], list):
            raise ConfigError("sweep.values", "must be a list")
        values = tuple(_number(v, "sweep.values") for v in sw["values"])
    else:
        for key in ("min", "max", "count"):
            if key not in sw:
                raise ConfigError(f"sweep.{key}", "missing")
        count = sw["count"]
        if isinstance(count, bool) or not isinstance(count, int):
            raise ConfigError("sweep.count", "must be an integer")
        lo, hi = _number(sw["min"], "sweep.min"), _number(sw["max"], "sweep.max")
        # 15 significant digits strip linspace round-off such as 1.4000000000000001
        values = tuple(float(f"{v:.15g}") for v in np.linspace(lo, hi, count)) if count >= 2 else ()
    if len(values) < 2:
        raise ConfigError("sweep", "a sweep needs at least 2 grid points")
    verdict = sw.get("verdict", True)
    if not isinstance(verdict, bool):
        raise ConfigError("sweep.verdict", "must be true or false")
    horizon = _number(sw["horizon"], "sweep.horizon") if "horizon" in sw else None
    max_h = _number(sw["max_horizon"], "sweep.max_horizon") if "max_horizon" in sw else None
    for v in values:
        try:
            _validate_model(base.with_parameter(name, v))
        except ConfigError as exc:
            raise ConfigError("sweep.values", f"{name}={v!r}: {exc}") from None
    return SweepConfig(base, name, values, verdict, horizon, max_h)


def _load(path):
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(path), str(exc)) from None


def load_scenario(path):
    return parse_scenario(_load(Path(path)))


def load_sweep(path):
    return parse_sweep(_load(Path(path)))
