"""Run configurations: JSON loading, validation, the bundled problem registry and builders.

A configuration is a JSON object.  ``{"problem": "<id>"}`` expands to the
bundled file of that id; any other top-level keys given next to
``problem`` override the bundled ones.  Keys:

``task``            resolvent | torsion | parabolic | steady | stabilize
``mesh``            {"dimension": 1, "cells": N} or {"dimension": 2, "cells_per_side": N}
``exponent``        constant or expression field
``initial``         field for u0 (Dirichlet mask applied)
``rhs``, ``lambda`` data of the resolvent problem
``source``          separable source h(t, x)
``reaction``        polynomial reaction f(x, u)
``levels``          torsion levels
``T``, ``N``        horizon and step count
``tolerance``, ``max_iterations``, ``seed``, ``snapshot_stride``,
``threshold``, ``mu``, ``refinements``, ``description``
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema

from .errors import ConfigError, DomainError
from .exponent import ExponentField
from .fields import SeparableSource, SpatialField
from .mesh import Mesh, MeshFunction, mesh_from_config
from .reaction import reaction_from_config

__all__ = ["REGISTRY", "RunConfig", "load_config", "parse_config", "registry_entry", "Problem"]

REGISTRY = (
    "heat-benchmark",
    "variable-p-source",
    "reaction-h1",
    "reaction-h2",
    "blowup-remark24",
    "stabilize-monotone",
    "torsion-family",
)
TASKS = ("resolvent", "torsion", "parabolic", "steady", "stabilize")

_NUMBER = {"type": "number"}
_POSITIVE = {"type": "number", "exclusiveMinimum": 0}
_OBJECT = {"type": "object"}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "problem": {"type": "string", "enum": list(REGISTRY)},
        "task": {"type": "string", "enum": list(TASKS)},
        "description": {"type": "string"},
        "mesh": {
            "type": "object",
            "additionalProperties": False,
            "required": ["dimension"],
            "properties": {
                "dimension": {"type": "integer", "enum": [1, 2]},
                "cells": {"type": "integer", "minimum": 1},
                "cells_per_side": {"type": "integer", "minimum": 1},
            },
        },
        "exponent": _OBJECT,
        "initial": _OBJECT,
        "rhs": _OBJECT,
        "source": _OBJECT,
        "reaction": _OBJECT,
        "lambda": _POSITIVE,
        "levels": {"type": "array", "items": _POSITIVE, "minItems": 1},
        "T": _POSITIVE,
        "N": {"type": "integer", "minimum": 1},
        "tolerance": _POSITIVE,
        "max_iterations": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "snapshot_stride": {"type": "integer", "minimum": 0},
        "threshold": _POSITIVE,
        "mu": _POSITIVE,
        "refinements": {"type": "integer", "minimum": 1},
    },
}

DEFAULTS = {"tolerance": 1e-10, "max_iterations": 200, "seed": 0, "snapshot_stride": 0}

_TYPE_WORDS = {"number": "a number", "integer": "an integer", "string": "a string", "object": "an object",
               "array": "a list"}


def _describe(error: jsonschema.ValidationError) -> str:
    path = ".".join(str(p) for p in error.absolute_path)
    key = path or "config"
    v = error.validator
    if v == "additionalProperties":
        allowed = set(error.schema.get("properties", {}))
        extra = sorted(set(error.instance) - allowed)
        where = f"{path}: " if path else ""
        return f"{where}unknown key {extra[0]!r}"
    if v == "type":
        return f"{key} must be {_TYPE_WORDS.get(error.validator_value, error.validator_value)}"
    if v == "minimum":
        return f"{key} must be ≥ {error.validator_value}"
    if v == "exclusiveMinimum":
        return f"{key} must be > {error.validator_value}"
    if v == "enum":
        return f"{key} must be one of {', '.join(map(str, error.validator_value))}"
    if v == "required":
        return f"{key}: {error.message}"
    if v == "minItems":
        return f"{key} must not be empty"
    return f"{key}: {error.message}"


def _validate(raw: dict):
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: (list(e.absolute_path), e.validator))
    if errors:
        raise ConfigError(_describe(errors[0]))


def registry_entry(problem_id: str) -> dict:
    """The bundled inline configuration of a registry problem."""
    if problem_id not in REGISTRY:
        raise ConfigError(f"problem must be one of {', '.join(REGISTRY)}")
    text = resources.files("rothe_px.problems").joinpath(f"{problem_id}.json").read_text()
    return json.loads(text)


@dataclass
class RunConfig:
    settings: dict
    problem: str | None = None

    def __getitem__(self, key):
        return self.settings[key]

    def get(self, key, default=None):
        return self.settings.get(key, default)

    @property
    def seed(self) -> int:
        return int(self.settings.get("seed", DEFAULTS["seed"]))

    @property
    def tolerance(self) -> float:
        return float(self.settings.get("tolerance", DEFAULTS["tolerance"]))

    def echo(self) -> dict:
        return copy.deepcopy(self.settings)


def parse_config(raw: dict) -> RunConfig:
    """Validate a configuration object and expand a registry id."""
    _validate(raw)
    problem = raw.get("problem")
    settings = registry_entry(problem) if problem else {}
    settings.update({k: copy.deepcopy(v) for k, v in raw.items() if k != "problem"})
    _validate(settings)
    if "mesh" in settings:
        dim = settings["mesh"]["dimension"]
        key = "cells" if dim == 1 else "cells_per_side"
        if key not in settings["mesh"]:
            raise ConfigError(f"mesh.{key} is required for dimension {dim}")
    cfg = RunConfig(settings, problem)
    Problem(cfg)  # build every field once so bad descriptions fail at load time
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return parse_config(raw)


class Problem:
    """Mesh, exponent and data built from a RunConfig."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        settings = cfg.settings
        try:
            self.mesh: Mesh | None = mesh_from_config(settings["mesh"]) if "mesh" in settings else None
            m = self.mesh
            self.exponent = ExponentField.from_description(m, settings["exponent"]) if m and "exponent" in settings else None
            self.initial = self._field("initial")
            self.rhs = self._field("rhs")
            self.source = SeparableSource(settings["source"]) if "source" in settings else None
            self.reaction = reaction_from_config(settings.get("reaction"))
        except DomainError as exc:
            raise ConfigError(str(exc)) from exc
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid field description: {exc}") from exc
        if self.source is not None and self.reaction is not None:
            raise ConfigError("give either source or reaction, not both")

    def _field(self, key: str) -> MeshFunction | None:
        if key not in self.cfg.settings or self.mesh is None:
            return None
        return MeshFunction.interpolate(self.mesh, SpatialField(self.cfg.settings[key])).with_dirichlet()

    def require(self, *keys: str):
        missing = [k for k in keys if k not in self.cfg.settings]
        if missing:
            raise ConfigError(f"{missing[0]} is required for this command")

    def source_as_reaction(self):
        """A time-independent source ``h(x)`` viewed as the reaction ``f(x, u) = h(x)``."""
        from .reaction import polynomial_reaction

        src = self.cfg.settings["source"]
        time = src.get("time", {"kind": "constant", "value": 1.0})
        if time.get("kind") != "constant":
            raise ConfigError("source must be constant in time here")
        space = dict(src["space"])
        factor = float(time["value"])
        scaled = SpatialField(space)
        return polynomial_reaction([0.0], _ScaledField(scaled, factor))


class _ScaledField:
    def __init__(self, base: SpatialField, factor: float):
        self.base, self.factor = base, factor
        self.desc = {"scaled": base.desc, "factor": factor}

    def __call__(self, x):
        return self.factor * self.base(x)

    def bound(self) -> float:
        return abs(self.factor) * self.base.bound()
