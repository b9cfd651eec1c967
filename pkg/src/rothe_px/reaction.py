"""Reaction terms ``f(x, u)`` together with their declared structure.

The JSON-constructible family is ``f(x, u) = S(x) + sum_k a_k u^k`` (a
spatial source plus a polynomial in ``u``)::

    {"kind": "polynomial", "coeffs": [a0, a1, ...], "source": <field>,
     "bounds": {"hypothesis": "H1", "L0": [c0, c1, ...]}}

``bounds`` is optional; when omitted, a bounded reaction (degree 0 in u) is
declared under H1 with a constant L0, and a reaction nondecreasing in u is
declared under H2 with L1, L2 the polynomial shifted by the source bounds.
Bounds given explicitly are polynomials in v and must be nondecreasing.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import ConfigError, DomainError
from .fields import SpatialField, _check_keys, constant_field
from .quadrature import gauss_unit

__all__ = ["ReactionTerm", "polynomial_reaction", "reaction_from_config"]


def _poly_range_extrema(coeffs, lo: float, hi: float):
    """(min, max) of a polynomial on [lo, hi]."""
    coeffs = np.trim_zeros(np.asarray(coeffs, dtype=float), "b")
    if coeffs.size == 0:
        return 0.0, 0.0
    pts = [lo, hi]
    if coeffs.size > 2:
        for r in P.polyroots(P.polyder(coeffs)):
            if abs(r.imag) < 1e-12 and lo < r.real < hi:
                pts.append(r.real)
    vals = P.polyval(np.array(pts), coeffs)
    return float(vals.min()), float(vals.max())


def _poly_is_nonincreasing(coeffs) -> bool:
    """True when the derivative is <= 0 on the whole real line."""
    d = np.trim_zeros(P.polyder(np.asarray(coeffs, dtype=float)), "b") if len(coeffs) > 1 else np.zeros(0)
    if d.size == 0:
        return True
    if (d.size - 1) % 2 == 1 or d[-1] > 0.0:
        return False
    # even degree, negative leading coefficient: check the maximum
    if d.size == 1:
        return d[0] <= 0.0
    crit = [r.real for r in P.polyroots(P.polyder(d)) if abs(r.imag) < 1e-12]
    return all(P.polyval(c, d) <= 1e-14 for c in crit)


def _poly_is_nondecreasing(coeffs) -> bool:
    return _poly_is_nonincreasing(-np.asarray(coeffs, dtype=float))


@dataclass(frozen=True)
class ReactionTerm:
    """Evaluation rule for ``f(x, u)`` plus the structure the analysis relies on.

    ``hypothesis`` is ``"H1"`` (``|f(x,v)| <= L0(v)``), ``"H2"``
    (``L1(v) <= f(x,v) <= L2(v)``) or ``None`` when no barrier is declared.
    ``growth`` is the pair ``(C, beta)`` with ``|f(x,s)| <= C (1 + |s|^beta)``.
    """

    func: Callable[[np.ndarray, np.ndarray], np.ndarray]
    derivative: Callable[[np.ndarray, np.ndarray], np.ndarray]
    lipschitz_on: Callable[[float, float], float]
    nonincreasing: bool
    hypothesis: str | None = None
    L0: Callable[[float], float] | None = None
    L1: Callable[[float], float] | None = None
    L2: Callable[[float], float] | None = None
    growth: tuple[float, float] | None = None
    zero_nonnegative: bool = False
    bounded_source: float = 0.0
    description: dict = field(default_factory=dict)

    def __call__(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self.func(x, u)

    def antiderivative_difference(self, x: np.ndarray, u0: np.ndarray, u1: np.ndarray) -> np.ndarray:
        """``int_{u0}^{u1} f(x, s) ds`` nodewise, by 8-point Gauss quadrature."""
        s, w = gauss_unit(8)
        du = u1 - u0
        total = np.zeros_like(u0)
        for sk, wk in zip(s, w):
            total += wk * self.func(x, u0 + sk * du)
        return total * du

    def satisfies_growth(self, p_minus: float) -> bool:
        """Sub-homogeneous growth: beta < p_- - 1."""
        return self.growth is not None and self.growth[1] < p_minus - 1.0


def polynomial_reaction(coeffs, source: SpatialField | None = None, bounds: dict | None = None) -> ReactionTerm:
    coeffs = np.asarray([float(c) for c in coeffs] or [0.0])
    source = source or constant_field(0.0)
    src_bound = source.bound()
    dcoeffs = P.polyder(coeffs) if coeffs.size > 1 else np.zeros(1)

    def func(x, u):
        return source(x) + P.polyval(u, coeffs)

    def derivative(x, u):
        return np.broadcast_to(P.polyval(u, dcoeffs), np.shape(u)).astype(float)

    def lipschitz_on(lo, hi):
        mn, mx = _poly_range_extrema(dcoeffs, lo, hi)
        return max(abs(mn), abs(mx))

    nonincreasing = _poly_is_nonincreasing(coeffs)
    degree = len(np.trim_zeros(coeffs, "b")) - 1
    growth = (src_bound + float(np.sum(np.abs(coeffs))), float(max(degree, 0)))
    probe = np.column_stack([np.linspace(0.0, 1.0, 1001), np.full(1001, 0.5)])
    zero_val = float(np.min(source(probe))) + coeffs[0] >= 0.0

    hyp = L0 = L1 = L2 = None
    if bounds is not None:
        _check_keys(bounds, {"hypothesis", "L0", "L1", "L2"}, "reaction.bounds")
        hyp = bounds.get("hypothesis")
        polys = {}
        for name in ("L0", "L1", "L2"):
            if name in bounds:
                c = np.asarray(bounds[name], dtype=float)
                if not _poly_is_nondecreasing(c):
                    raise ConfigError(f"reaction.bounds.{name}: must be nondecreasing")
                polys[name] = (lambda c: (lambda v: float(P.polyval(v, c))))(c)
        if hyp == "H1" and "L0" in polys:
            L0 = polys["L0"]
        elif hyp == "H2" and "L1" in polys and "L2" in polys:
            L1, L2 = polys["L1"], polys["L2"]
        else:
            raise ConfigError("reaction.bounds: need hypothesis H1 with L0 or H2 with L1 and L2")
    elif degree <= 0:
        const = src_bound + abs(coeffs[0])
        hyp, L0 = "H1", (lambda v: const)
    elif _poly_is_nondecreasing(coeffs):
        hyp = "H2"
        L1 = lambda v: float(P.polyval(v, coeffs)) - src_bound  # noqa: E731
        L2 = lambda v: float(P.polyval(v, coeffs)) + src_bound  # noqa: E731

    desc = {"kind": "polynomial", "coeffs": [float(c) for c in coeffs], "source": source.desc}
    if bounds is not None:
        desc["bounds"] = bounds
    return ReactionTerm(
        func=func,
        derivative=derivative,
        lipschitz_on=lipschitz_on,
        nonincreasing=nonincreasing,
        hypothesis=hyp,
        L0=L0,
        L1=L1,
        L2=L2,
        growth=growth,
        zero_nonnegative=bool(zero_val),
        bounded_source=src_bound,
        description=desc,
    )


def reaction_from_config(desc: dict | None) -> ReactionTerm | None:
    if desc is None:
        return None
    if not isinstance(desc, dict):
        raise ConfigError("reaction: expected an object")
    _check_keys(desc, {"kind", "coeffs", "source", "bounds"}, "reaction")
    if desc.get("kind") != "polynomial":
        raise ConfigError(f"reaction.kind: unknown kind {desc.get('kind')!r}")
    source = SpatialField(desc["source"]) if "source" in desc else None
    return polynomial_reaction(desc.get("coeffs", [0.0]), source, desc.get("bounds"))


def require_nonincreasing(f: ReactionTerm | None):
    if f is not None and not f.nonincreasing:
        raise DomainError("reaction must be nonincreasing in u (uniqueness is not guaranteed otherwise)")
