"""Spatially constant barriers ``v' = L(v)`` bounding the Rothe iterates in L-infinity.

Under the two-sided bound ``|f(x, v)| <= L0(v)`` the barrier starts at
``+kappa`` and satisfies ``|u^n| <= v_0(t_n)``; under ``L1(v) <= f(x, v) <=
L2(v)`` the pair started at ``-kappa`` / ``+kappa`` gives
``v_1(t_n) <= u^n <= v_2(t_n)``.  ``L1`` is replaced by ``min(L1, 0)`` and
``L2`` by ``max(L2, 0)`` before integrating.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, DomainError

__all__ = [
    "BLOWUP_THRESHOLD",
    "BarrierTrajectory",
    "integrate_barrier",
    "barriers_for",
    "containment_check",
    "growth_function",
]

BLOWUP_THRESHOLD = 1e12
KINDS = ("H1-two-sided", "H2-lower", "H2-upper")


@dataclass
class BarrierTrajectory:
    kind: str
    kappa: float
    times: np.ndarray
    values: np.ndarray
    t_max_estimate: float = np.inf
    failed: bool = False
    message: str = ""

    @property
    def samples(self) -> list[tuple[float, float]]:
        return list(zip(self.times.tolist(), self.values.tolist()))

    @property
    def blew_up(self) -> bool:
        return np.isfinite(self.t_max_estimate)


def _rk4_step(L, v: float, h: float) -> float:
    k1 = L(v)
    k2 = L(v + 0.5 * h * k1)
    k3 = L(v + 0.5 * h * k2)
    k4 = L(v + h * k3)
    return v + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0


def integrate_barrier(L: Callable[[float], float], kappa: float, T: float, dt: float,
                      kind: str = "H1-two-sided", sample_times=None) -> BarrierTrajectory:
    """Classical RK4 for ``v' = L(v)``, ``v(0) = -kappa`` for the lower barrier and ``+kappa`` otherwise.

    Between consecutive sample times the step is shrunk to the largest
    value ``<= dt`` that lands on the next sample.  Integration stops at the
    first step with ``|v| > 1e12`` (``t_max_estimate`` is that time) or on a
    non-finite evaluation (``failed``).
    """
    if not dt > 0.0:
        raise DomainError("dt must be positive")
    if not T > 0.0:
        raise DomainError("T must be positive")
    if kind not in KINDS:
        raise DomainError(f"unknown barrier kind {kind!r}")
    if kappa < 0.0:
        raise DomainError("kappa must be nonnegative")
    if sample_times is None:
        n = int(np.ceil(T / dt - 1e-12))
        sample_times = np.linspace(0.0, T, n + 1)
    sample_times = np.asarray(sample_times, dtype=float)
    if sample_times[0] != 0.0 or np.any(np.diff(sample_times) <= 0.0):
        raise DomainError("sample times must start at 0 and increase")

    v = -kappa if kind == "H2-lower" else kappa
    times, values = [0.0], [v]
    t = 0.0
    for t_next in sample_times[1:]:
        m = max(1, int(np.ceil((t_next - t) / dt - 1e-9)))
        h = (t_next - t) / m
        for k in range(m):
            with np.errstate(over="ignore", invalid="ignore"):
                v_new = _rk4_step(L, v, h)
            t_k = t + (k + 1) * h
            if not np.isfinite(v_new):
                # an overflow past the threshold still counts as blow-up
                if abs(v) > 1e6 or np.isinf(v_new):
                    return BarrierTrajectory(kind, kappa, np.array(times), np.array(values), t_k,
                                             message="blow-up")
                return BarrierTrajectory(kind, kappa, np.array(times), np.array(values),
                                         failed=True, message=f"non-finite value at t = {t_k:.6g}")
            v = v_new
            if abs(v) > BLOWUP_THRESHOLD:
                return BarrierTrajectory(kind, kappa, np.array(times), np.array(values), t_k,
                                         message="blow-up")
        t = t_next
        times.append(float(t_next))
        values.append(float(v))
    return BarrierTrajectory(kind, kappa, np.array(times), np.array(values))


def barriers_for(reaction, kappa: float, sample_times, dt: float | None = None) -> dict[str, BarrierTrajectory]:
    """Barrier set declared by a reaction term (empty when it carries no hypothesis).

    ``dt`` defaults to a tenth of the first sampling interval.
    """
    sample_times = np.asarray(sample_times, dtype=float)
    T = float(sample_times[-1])
    if dt is None:
        dt = float(sample_times[1] - sample_times[0]) / 10.0
    if reaction is None:
        return {"H1-two-sided": integrate_barrier(lambda v: 0.0, kappa, T, dt, "H1-two-sided", sample_times)}
    if reaction.hypothesis == "H1":
        L0 = reaction.L0
        return {"H1-two-sided": integrate_barrier(lambda v: max(L0(v), 0.0), kappa, T, dt,
                                                  "H1-two-sided", sample_times)}
    if reaction.hypothesis == "H2":
        L1, L2 = reaction.L1, reaction.L2
        return {
            "H2-lower": integrate_barrier(lambda v: min(L1(v), 0.0), kappa, T, dt, "H2-lower", sample_times),
            "H2-upper": integrate_barrier(lambda v: max(L2(v), 0.0), kappa, T, dt, "H2-upper", sample_times),
        }
    return {}


def barrier_horizon(barriers: dict[str, BarrierTrajectory]) -> float:
    return min((b.t_max_estimate for b in barriers.values()), default=np.inf)


def certified_range(barriers: dict[str, BarrierTrajectory]) -> tuple[float, float] | None:
    """``[lo, hi]`` containing every iterate up to the last barrier sample."""
    if "H1-two-sided" in barriers:
        top = float(np.max(barriers["H1-two-sided"].values))
        return -top, top
    if "H2-lower" in barriers:
        return float(np.min(barriers["H2-lower"].values)), float(np.max(barriers["H2-upper"].values))
    return None


@dataclass
class ContainmentReport:
    ok: bool
    worst_violation: float
    worst_step: int
    steps_checked: int
    kinds: list = field(default_factory=list)


def containment_check(run, barriers: dict[str, BarrierTrajectory], rel_slack: float = 1e-6) -> ContainmentReport:
    """Nodal containment of every iterate, with slack ``rel_slack (1 + |v_i(t_n)|)``.

    The violation is reported relative to that slack's scale.
    """
    if not barriers:
        raise DomainError("no containment certificate for this reaction")
    times = run.grid.times[: len(run.iterates)]
    worst, worst_step = 0.0, -1
    for b in barriers.values():
        if b.times.size < times.size or not np.allclose(b.times[: times.size], times, rtol=0.0, atol=1e-12):
            raise DomainError("barriers are not sampled on the run's grid")
    for n, u in enumerate(run.iterates):
        vals = u.values
        if "H1-two-sided" in barriers:
            v0 = barriers["H1-two-sided"].values[n]
            excess = (np.max(np.abs(vals)) - v0) / (1.0 + abs(v0))
        else:
            v1 = barriers["H2-lower"].values[n]
            v2 = barriers["H2-upper"].values[n]
            excess = max((v1 - np.min(vals)) / (1.0 + abs(v1)), (np.max(vals) - v2) / (1.0 + abs(v2)))
        if excess > worst:
            worst, worst_step = float(excess), n
    return ContainmentReport(worst <= rel_slack, worst, worst_step, len(run.iterates), sorted(barriers))


_NAMED_GROWTH = {
    "zero": [0.0],
    "one": [1.0],
    "linear": [0.0, 1.0],
    "affine": [1.0, 1.0],
    "quadratic": [0.0, 0.0, 1.0],
    "cubic": [0.0, 0.0, 0.0, 1.0],
}


def growth_function(expr_id: str) -> Callable[[float], float]:
    """Growth function from an id: one of the named ones or ``poly:c0,c1,...``."""
    if expr_id in _NAMED_GROWTH:
        coeffs = _NAMED_GROWTH[expr_id]
    elif expr_id.startswith("poly:"):
        try:
            coeffs = [float(c) for c in expr_id[5:].split(",") if c.strip()]
        except ValueError as exc:
            raise ConfigError(f"growth: cannot parse coefficients in {expr_id!r}") from exc
        if not coeffs:
            raise ConfigError("growth: empty coefficient list")
    else:
        names = ", ".join(sorted(_NAMED_GROWTH))
        raise ConfigError(f"growth: unknown id {expr_id!r} (expected one of {names} or poly:c0,c1,...)")
    coeffs = np.asarray(coeffs)
    return lambda v: float(np.polynomial.polynomial.polyval(v, coeffs))
