"""JSON config schemas for the command-line front end.

Each loader takes a parsed JSON object, rejects unknown and missing keys
with a :class:`ConfigError` naming the key, and returns the library-level
dataclasses. Optional keys fall back to the defaults shown in the README.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

from .clt import CltConfig, SequenceSpec
from .errors import ConfigError, DomainError
from .mixed import NONNEGATIVE, Constraint, DesignSpec, ModelParams, ModelSpec
from .numerics import NelderMeadOptions


def read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as err:
        raise ConfigError("<file>", f"{path}: not valid JSON ({err.msg}, line {err.lineno})") from None
    if not isinstance(data, dict):
        raise ConfigError("<file>", f"{path}: top level must be an object")
    return data


class _Fields:
    """Key access that records what was consumed, so leftovers can be rejected."""

    def __init__(self, raw: dict, prefix: str = ""):
        if not isinstance(raw, dict):
            raise ConfigError(prefix.rstrip(".") or "<root>", "expected an object")
        self.raw = raw
        self.prefix = prefix
        self.used = set()

    def key(self, name):
        return self.prefix + name

    def get(self, name, default=..., kind=None):
        self.used.add(name)
        if name not in self.raw:
            if default is ...:
                raise ConfigError(self.key(name), "required key is missing")
            return default
        value = self.raw[name]
        if kind is not None:
            value = kind(self.key(name), value)
        return value

    def finish(self):
        extra = sorted(set(self.raw) - self.used)
        if extra:
            raise ConfigError(self.key(extra[0]), "unknown key")


def _int(key, v, minimum=None):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(key, f"expected an integer, got {v!r}")
    if minimum is not None and v < minimum:
        raise ConfigError(key, f"must be at least {minimum}, got {v}")
    return v


def _pos_int(key, v):
    return _int(key, v, 1)


def _seed(key, v):
    return _int(key, v, 0)


def _real(key, v):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(key, f"expected a finite number, got {v!r}")
    return float(v)


def _reals(key, v):
    if not isinstance(v, list):
        raise ConfigError(key, "expected a list of numbers")
    return tuple(_real(f"{key}[{i}]", x) for i, x in enumerate(v))


def _pair(key, v):
    out = _reals(key, v)
    if len(out) != 2:
        raise ConfigError(key, "expected [low, high]")
    return out


def _ints(key, v, minimum=None):
    if not isinstance(v, list):
        raise ConfigError(key, "expected a list of integers")
    return tuple(_int(f"{key}[{i}]", x, minimum) for i, x in enumerate(v))


def _bool(key, v):
    if not isinstance(v, bool):
        raise ConfigError(key, f"expected true or false, got {v!r}")
    return v


# -- clt ----------------------------------------------------------------------------------

def load_clt_config(raw: dict, seed: int | None = None) -> CltConfig:
    """Schema::

        {"sequence": {"mu_range": [-1, 1], "eta_range": [0.5, 2], "rho_range": [0.5, 3],
                      "weight_range": [0.5, 2], "signs": "mixed"},
         "n_schedule": [10, 100, 1000], "replications": 10000, "epsilon": 0.25, "seed": 0}
    """
    top = _Fields(raw)
    seq = _Fields(top.get("sequence", {}), "sequence.")
    ranges = {name: seq.get(name, getattr(SequenceSpec, name), _pair)
              for name in ("mu_range", "eta_range", "rho_range", "weight_range")}
    signs = seq.get("signs", "positive")
    seq.finish()
    schedule = top.get("n_schedule", kind=lambda k, v: _ints(k, v, 1))
    replications = top.get("replications", kind=_pos_int)
    epsilon = top.get("epsilon", kind=_real)
    base = top.get("seed", 0, _seed)
    top.finish()
    if seed is not None:
        base = seed
    spec = SequenceSpec(n=max(schedule) if schedule else 1, signs=signs, seed=base, **ranges)
    return CltConfig(spec, schedule, replications, epsilon)


# -- mixed model --------------------------------------------------------------------------

def _constraints(key, v):
    if not isinstance(v, list):
        raise ConfigError(key, "expected a list of constraint objects")
    out = []
    for i, item in enumerate(v):
        f = _Fields(item, f"{key}[{i}].")
        c = Constraint(
            random_index=f.get("random", kind=lambda k, x: _int(k, x, 0)),
            coef_index=f.get("coef", kind=lambda k, x: _int(k, x, 0)),
            sign=f.get("sign", NONNEGATIVE),
        )
        f.finish()
        out.append(c)
    return tuple(out)


def _params(f: _Fields, constraints) -> ModelParams:
    beta = f.get("beta", kind=_reals)
    sigma2 = f.get("sigma2", kind=_real)
    varsigma = f.get("varsigma", (), _reals)
    if not sigma2 > 0:
        raise ConfigError(f.key("sigma2"), f"must be positive, got {sigma2}")
    if any(not s > 0 for s in varsigma):
        raise ConfigError(f.key("varsigma"), "entries must be positive")
    try:
        return ModelParams(beta, sigma2, varsigma, constraints)
    except DomainError as err:
        raise ConfigError(f.key("beta"), str(err)) from None


@dataclass(frozen=True)
class SimulationConfig:
    params: ModelParams
    design: DesignSpec
    group_sizes: tuple
    seed: int


def load_simulation_config(raw: dict, seed: int | None = None) -> SimulationConfig:
    """Schema::

        {"beta": [2.0, 1.0], "sigma2": 0.25, "varsigma": [0.8, 0.4],
         "constraints": [{"random": 0, "coef": 0, "sign": "nonnegative"}],
         "random_columns": [0, 1], "covariate_range": [-1, 1], "intercept": true,
         "group_sizes": [40, 40] | "groups": 50, "group_size": 40, "seed": 0}
    """
    f = _Fields(raw)
    constraints = f.get("constraints", (), _constraints)
    params = _params(f, constraints)
    design = DesignSpec(
        k=len(params.beta),
        random_columns=f.get("random_columns", tuple(range(len(params.varsigma))),
                             lambda k, v: _ints(k, v, 0)),
        covariate_range=f.get("covariate_range", (-1.0, 1.0), _pair),
        intercept=f.get("intercept", True, _bool),
    )
    if len(design.random_columns) != len(params.varsigma):
        raise ConfigError("random_columns", "need one entry per varsigma")
    if "group_sizes" in raw:
        sizes = f.get("group_sizes", kind=lambda k, v: _ints(k, v, 1))
        if not sizes:
            raise ConfigError("group_sizes", "need at least one group")
    else:
        sizes = (f.get("group_size", kind=_pos_int),) * f.get("groups", kind=_pos_int)
    base = f.get("seed", 0, _seed)
    f.finish()
    return SimulationConfig(params, design, sizes, base if seed is None else seed)


@dataclass(frozen=True)
class ModelConfig:
    constraints: tuple
    max_iter: int
    max_params: int
    max_restarts: int


def load_model_config(raw: dict) -> ModelConfig:
    """Schema::

        {"constraints": [{"random": 0, "coef": 0, "sign": "nonnegative"}],
         "max_iter": 50000, "max_params": 50, "max_restarts": 5}
    """
    f = _Fields(raw)
    cfg = ModelConfig(
        constraints=f.get("constraints", (), _constraints),
        max_iter=f.get("max_iter", NelderMeadOptions.max_iter, _pos_int),
        max_params=f.get("max_params", 50, _pos_int),
        max_restarts=f.get("max_restarts", 5, lambda k, v: _int(k, v, 0)),
    )
    f.finish()
    return cfg


def load_start(raw: dict, spec: ModelSpec) -> ModelParams:
    """Starting values from a fit result or simulation sidecar (extra keys ignored)."""
    f = _Fields(raw, "start.")
    return _params(f, spec.constraints)


def config_stem(path) -> str:
    return Path(path).stem
