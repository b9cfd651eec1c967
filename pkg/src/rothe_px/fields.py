"""JSON-described scalar fields on the unit interval / unit square.

Schema (``kind`` selects the family; unknown keys are rejected)::

    {"kind": "constant", "value": 2.0}
    {"kind": "expression", "terms": [{"a": 2.0, "b": 0.0, "c": 0.5, "k": 1}, ...]}
        sum over terms of  a + b*x1 + c*sin(k*pi*x1)
    {"kind": "polynomial", "coeffs": [c0, c1, ...]}
        c0 + c1*x1 + c2*x1**2 + ...
    {"kind": "sine_product", "amplitude": A, "k": 1}
        A * prod_i sin(k*pi*x_i)

Exponent fields accept only the first two kinds.
"""
from __future__ import annotations

import numpy as np

from .errors import ConfigError

_TERM_KEYS = {"a", "b", "c", "k"}


def _check_keys(desc: dict, allowed: set, where: str):
    extra = set(desc) - allowed
    if extra:
        raise ConfigError(f"{where}: unknown key {sorted(extra)[0]!r}")


class SpatialField:
    """Callable ``field(x)`` on an (n, d) array of points."""

    def __init__(self, desc: dict):
        if not isinstance(desc, dict) or "kind" not in desc:
            raise ConfigError("field: expected an object with a 'kind' key")
        self.desc = desc
        kind = desc["kind"]
        if kind == "constant":
            _check_keys(desc, {"kind", "value"}, "field")
            self._value = float(desc["value"])
        elif kind == "expression":
            _check_keys(desc, {"kind", "terms"}, "field")
            terms = desc["terms"]
            if not isinstance(terms, list) or not terms:
                raise ConfigError("field.terms: expected a nonempty list")
            self._terms = []
            for t in terms:
                if not isinstance(t, dict):
                    raise ConfigError("field.terms: each term must be an object")
                _check_keys(t, _TERM_KEYS, "field.terms")
                self._terms.append(tuple(float(t.get(key, 0.0)) for key in ("a", "b", "c", "k")))
        elif kind == "polynomial":
            _check_keys(desc, {"kind", "coeffs"}, "field")
            self._coeffs = [float(c) for c in desc["coeffs"]]
        elif kind == "sine_product":
            _check_keys(desc, {"kind", "amplitude", "k"}, "field")
            self._amp = float(desc["amplitude"])
            self._k = float(desc.get("k", 1))
        else:
            raise ConfigError(f"field.kind: unknown kind {kind!r}")
        self.kind = kind

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        x1 = x[:, 0]
        if self.kind == "constant":
            return np.full(x.shape[0], self._value)
        if self.kind == "expression":
            out = np.zeros(x.shape[0])
            for a, b, c, k in self._terms:
                out += a + b * x1 + c * np.sin(k * np.pi * x1)
            return out
        if self.kind == "polynomial":
            return np.polynomial.polynomial.polyval(x1, self._coeffs)
        return self._amp * np.prod(np.sin(self._k * np.pi * x), axis=1)

    def bound(self) -> float:
        """An upper bound for |field| on the closed unit cube."""
        if self.kind == "constant":
            return abs(self._value)
        if self.kind == "expression":
            return sum(abs(a) + abs(b) + abs(c) for a, b, c, _ in self._terms)
        if self.kind == "polynomial":
            return sum(abs(c) for c in self._coeffs)
        return abs(self._amp)

    def is_constant(self) -> bool:
        return self.kind == "constant"


def constant_field(value: float) -> SpatialField:
    return SpatialField({"kind": "constant", "value": value})


def exponent_expression(desc: dict) -> SpatialField:
    if desc.get("kind") not in ("constant", "expression"):
        raise ConfigError("exponent.kind: must be 'constant' or 'expression'")
    return SpatialField(desc)


class TimeFactor:
    """Scalar time profile for separable sources ``h(t, x) = time(t) * space(x)``.

    ``{"kind": "constant", "value": v}``, ``{"kind": "linear", "a": a, "b": b}``
    (a + b t) or ``{"kind": "sin", "amplitude": A, "omega": w}`` (A sin(w t)).
    """

    def __init__(self, desc: dict):
        kind = desc.get("kind")
        if kind == "constant":
            _check_keys(desc, {"kind", "value"}, "source.time")
            v = float(desc["value"])
            self._f = lambda t: v + 0.0 * t
        elif kind == "linear":
            _check_keys(desc, {"kind", "a", "b"}, "source.time")
            a, b = float(desc.get("a", 0.0)), float(desc.get("b", 1.0))
            self._f = lambda t: a + b * t
        elif kind == "sin":
            _check_keys(desc, {"kind", "amplitude", "omega"}, "source.time")
            amp, om = float(desc.get("amplitude", 1.0)), float(desc.get("omega", 1.0))
            self._f = lambda t: amp * np.sin(om * t)
        else:
            raise ConfigError(f"source.time.kind: unknown kind {kind!r}")
        self.desc = desc

    def __call__(self, t):
        return self._f(t)


class SeparableSource:
    """Time-dependent source ``h(t, x)`` built from a JSON description."""

    def __init__(self, desc: dict):
        _check_keys(desc, {"kind", "time", "space"}, "source")
        if desc.get("kind", "separable") != "separable":
            raise ConfigError("source.kind: only 'separable' is supported")
        self.time = TimeFactor(desc.get("time", {"kind": "constant", "value": 1.0}))
        self.space = SpatialField(desc["space"])
        self.desc = desc

    def __call__(self, t: float, x: np.ndarray) -> np.ndarray:
        return float(self.time(t)) * self.space(x)
