"""Variable exponents and the modular/Luxemburg machinery of L^{p(x)}.

The exponent is sampled once per element (at the centroid), so on each
element the integrand ``|u/lam|^{p_e}`` scales exactly like ``lam^{-p_e}``.
Every modular needed here therefore reduces to per-element integrals
``I_e = int_e |u|^{r_e}`` computed once, and the Luxemburg norm is the root
of ``sum_e lam^{-s_e} I_e = 1`` in ``lam``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import logsumexp

from .errors import DomainError
from .fields import exponent_expression
from .mesh import Mesh, MeshFunction, same_mesh
from .quadrature import abs_product_integrals, power_integrals

__all__ = [
    "ExponentField",
    "semimodular",
    "luxemburg_norm",
    "norm_modular_bounds_check",
    "holder_pairing_check",
    "power_norm_inequality_check",
    "simon_vector_ops",
    "fit_simon_constants",
    "HOLDER_CONSTANT",
]

HOLDER_CONSTANT = 2.0
_BISECTION_MAX_ITER = 200
_BISECTION_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class ExponentField:
    """Piecewise-constant exponent, one value per mesh element.

    With ``strict=True`` (the default) every value must exceed one, as
    required for a Lebesgue exponent in the solver.  ``strict=False`` only
    requires nonnegative values; it is used for the auxiliary power in
    :func:`power_norm_inequality_check`.
    """

    mesh: Mesh
    element_values: np.ndarray
    strict: bool = True

    def __post_init__(self):
        vals = np.array(self.element_values, dtype=float)
        if vals.shape != (self.mesh.num_elements,):
            raise DomainError(
                f"expected {self.mesh.num_elements} element values, got shape {vals.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise DomainError("exponent must be finite (the p = infinity branch is unsupported)")
        if self.strict and np.any(vals <= 1.0):
            raise DomainError("exponent values must exceed 1")
        if not self.strict and np.any(vals < 0.0):
            raise DomainError("exponent values must be nonnegative")
        vals.setflags(write=False)
        object.__setattr__(self, "element_values", vals)

    @classmethod
    def constant(cls, mesh: Mesh, value: float, strict: bool = True) -> "ExponentField":
        return cls(mesh, np.full(mesh.num_elements, float(value)), strict)

    @classmethod
    def from_function(cls, mesh: Mesh, func, strict: bool = True) -> "ExponentField":
        """Sample ``func(x)`` at element centroids, ``x`` of shape (ne, d)."""
        vals = np.broadcast_to(func(mesh.centroids), (mesh.num_elements,))
        return cls(mesh, vals, strict)

    @classmethod
    def from_description(cls, mesh: Mesh, desc: dict, strict: bool = True) -> "ExponentField":
        return cls.from_function(mesh, exponent_expression(desc), strict)

    @property
    def p_minus(self) -> float:
        return float(self.element_values.min())

    @property
    def p_plus(self) -> float:
        return float(self.element_values.max())

    def is_constant(self) -> bool:
        return self.p_minus == self.p_plus

    def conjugate(self) -> "ExponentField":
        p = self.element_values
        return ExponentField(self.mesh, p / (p - 1.0))

    def super_two_region(self) -> np.ndarray:
        """Mask of the elements where p > 2."""
        return self.element_values > 2.0

    def check_solver_mode(self) -> None:
        """Enforce ``2d/(d+2) < p_- <= p_+ < d``; raises DomainError otherwise."""
        d = self.mesh.dimension
        if not (2.0 * d / (d + 2.0) < self.p_minus and self.p_plus < d):
            raise DomainError(
                f"solver mode needs 2d/(d+2) < p_- <= p_+ < d; got p_- = {self.p_minus}, "
                f"p_+ = {self.p_plus}, d = {d}"
            )

    @cached_property
    def log_holder_estimate(self) -> float:
        """max |p(x)-p(y)| |ln|x-y|| over centroid pairs closer than a quarter diameter."""
        c = self.mesh.centroids
        p = self.element_values
        radius = 0.25 * self.mesh.diameter
        best = 0.0
        chunk = 512
        for start in range(0, len(p), chunk):
            d = np.linalg.norm(c[start:start + chunk, None, :] - c[None, :, :], axis=2)
            close = (d > 0.0) & (d <= radius)
            if np.any(close):
                val = np.abs(p[start:start + chunk, None] - p[None, :]) * np.abs(np.log(np.where(close, d, 1.0)))
                best = max(best, float(np.max(np.where(close, val, 0.0))))
        return best


def semimodular(u: MeshFunction, p: ExponentField) -> float:
    """``int |u|^{p(x)} dx``."""
    same_mesh(u, p)
    return float(np.sum(power_integrals(u.mesh, u.values, p.element_values)))


def _luxemburg_from_integrals(integrals: np.ndarray, scaling: np.ndarray, scale_hint: float) -> float:
    """Root in lam of sum_e lam^{-s_e} I_e = 1 by bisection on log(lam)."""
    mask = integrals > 0.0
    if not np.any(mask):
        return 0.0
    log_i = np.log(integrals[mask])
    s = scaling[mask]

    def log_rho(t):
        return logsumexp(log_i - s * t)

    lo = np.log(scale_hint) + np.log(1e-16)
    hi = np.log(scale_hint) + np.log(1e16)
    # make sure the bracket is valid even for extreme inputs
    while log_rho(lo) < 0.0:
        lo -= 16.0
    while log_rho(hi) > 0.0:
        hi += 16.0
    # the bracket width in log(lam) is the relative error in lam
    for _ in range(_BISECTION_MAX_ITER):
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        if log_rho(mid) > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= _BISECTION_RTOL:
            break
    return float(np.exp(0.5 * (lo + hi)))


def luxemburg_norm(u: MeshFunction, p: ExponentField) -> float:
    """``inf{lam > 0 : rho_p(u/lam) <= 1}``; zero for the zero function."""
    same_mesh(u, p)
    scale = u.linf()
    if scale == 0.0:
        return 0.0
    integrals = power_integrals(u.mesh, u.values, p.element_values)
    return _luxemburg_from_integrals(integrals, p.element_values, scale)


def _norm_of_power(f: MeshFunction, p_exp: np.ndarray, q_exp: np.ndarray) -> float:
    """``|| |f|^{p(x)} ||_{L^{q(x)}}`` using I_e = int_e |f|^{p_e q_e}."""
    scale = f.linf()
    if scale == 0.0:
        return 0.0
    integrals = power_integrals(f.mesh, f.values, p_exp * q_exp)
    return _luxemburg_from_integrals(integrals, q_exp, max(scale ** p_exp.max(), 1e-300))


@dataclass
class BoundsReport:
    norm: float
    modular: float
    lower: float
    upper: float
    lower_slack: float
    upper_slack: float
    ok: bool


def norm_modular_bounds_check(u: MeshFunction, p: ExponentField, rtol: float = 1e-10) -> BoundsReport:
    """Check the power bounds relating ``rho_p(u)`` to ``||u||``.

    For ``||u|| >= 1``: ``||u||^{p_-} <= rho <= ||u||^{p_+}``; for
    ``||u|| <= 1`` the exponents swap.
    """
    if u.linf() == 0.0:
        raise DomainError("bounds check needs u != 0")
    norm = luxemburg_norm(u, p)
    rho = semimodular(u, p)
    a, b = norm ** p.p_minus, norm ** p.p_plus
    lower, upper = (a, b) if norm >= 1.0 else (b, a)
    tol = rtol * max(1.0, rho)
    lo_slack, up_slack = rho - lower, upper - rho
    return BoundsReport(norm, rho, lower, upper, lo_slack, up_slack, lo_slack >= -tol and up_slack >= -tol)


@dataclass
class HolderReport:
    lhs: float
    rhs: float
    ratio: float
    constant: float
    ok: bool


def holder_pairing_check(
    f: MeshFunction,
    g: MeshFunction,
    p: ExponentField,
    constant: float = HOLDER_CONSTANT,
    _flip: bool = False,
) -> HolderReport:
    """``int |f g| <= C ||f||_{p(x)} ||g||_{p'(x)}`` with the admissible constant C = 2.

    ``ratio`` is ``int|fg| / (||f|| ||g||)`` (zero when either norm vanishes).
    ``_flip`` inverts the comparison; it exists only as a negative control.
    """
    mesh = same_mesh(f, g, p)
    lhs = float(np.sum(abs_product_integrals(mesh, f.values, g.values)))
    prod = luxemburg_norm(f, p) * luxemburg_norm(g, p.conjugate())
    rhs = constant * prod
    ratio = lhs / prod if prod > 0.0 else 0.0
    slack = 1e-12 * max(1.0, rhs)
    ok = (-lhs <= -rhs - slack) if _flip else (lhs <= rhs + slack)
    return HolderReport(lhs, rhs, ratio, constant, bool(ok))


@dataclass
class PowerNormReport:
    lhs: float
    rhs: float
    ok: bool


def power_norm_inequality_check(f: MeshFunction, p_exp: ExponentField, q_exp: ExponentField) -> PowerNormReport:
    """``|| |f|^{p} ||_{L^q} <= ||f||_{L^{pq}}^{p_-} + ||f||_{L^{pq}}^{p_+}``."""
    same_mesh(f, p_exp, q_exp)
    pv, qv = p_exp.element_values, q_exp.element_values
    if np.any(pv < 0.0) or not np.any(pv > 0.0):
        raise DomainError("power exponent must be nonnegative and not identically zero")
    if np.any(qv < 1.0):
        raise DomainError("outer exponent must be >= 1")
    if np.any(pv * qv < 1.0):
        raise DomainError("need p(x) q(x) >= 1 on every element")
    lhs = _norm_of_power(f, pv, qv)
    n = _norm_of_power(f, np.ones_like(pv), pv * qv)
    rhs = n ** pv.min() + n ** pv.max()
    return PowerNormReport(lhs, rhs, lhs <= rhs * (1.0 + 1e-12) + 1e-300)


def _duality_map(z: np.ndarray, p: float) -> np.ndarray:
    norm = np.linalg.norm(z, axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(norm > 0.0, norm ** (p - 2.0), 0.0)
    return scale * z


def simon_vector_ops(u, v, p: float):
    """``(| |u|^{p-2}u - |v|^{p-2}v |, <|u|^{p-2}u - |v|^{p-2}v, u - v>)``.

    Accepts single d-vectors or stacked arrays of shape (n, d).  The map
    ``z -> |z|^{p-2} z`` is extended by zero at the origin.
    """
    if p <= 1.0:
        raise DomainError("Simon inequalities need p > 1")
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    du = _duality_map(u, p) - _duality_map(v, p)
    diff = np.linalg.norm(du, axis=-1)
    mono = np.sum(du * (u - v), axis=-1)
    if diff.ndim == 0:
        return float(diff), float(mono)
    return diff, mono


def fit_simon_constants(u: np.ndarray, v: np.ndarray, p: float):
    """Empirical constants for the two Simon inequalities over sampled pairs.

    Returns ``(c, c_tilde)`` where ``c`` is the largest observed ratio of the
    difference bound to its right-hand side (the smallest admissible ``c``)
    and ``c_tilde`` the smallest observed ratio of the monotonicity bound to
    its right-hand side.  Pairs with a vanishing right-hand side are skipped.
    """
    diff, mono = simon_vector_ops(u, v, p)
    dist = np.linalg.norm(u - v, axis=-1)
    total = np.linalg.norm(u, axis=-1) + np.linalg.norm(v, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        if p >= 2.0:
            rhs_diff = dist * total ** (p - 2.0)
            rhs_mono = dist ** p
        else:
            rhs_diff = dist ** (p - 1.0)
            rhs_mono = dist ** 2 / total ** (2.0 - p)
    ok = (rhs_diff > 0.0) & (rhs_mono > 0.0) & np.isfinite(rhs_diff) & np.isfinite(rhs_mono)
    return float(np.max(diff[ok] / rhs_diff[ok])), float(np.min(mono[ok] / rhs_mono[ok]))
