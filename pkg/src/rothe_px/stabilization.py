"""Long-time behaviour of the Rothe scheme for reactions nonincreasing in u.

For such reactions the evolution is an L-infinity contraction, the orbit
started at the torsion function ``w_mu`` decreases to the steady state, the
one started at ``-w_mu`` increases to it, and every orbit started in between
stays in that shell.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .elliptic import DEFAULT_TOLERANCE, solve_stationary, solve_torsion
from .errors import DomainError, SolverError
from .exponent import ExponentField
from .mesh import MeshFunction, same_mesh
from .reaction import ReactionTerm, require_nonincreasing
from .rothe import RotheRun, TimeGrid, run

__all__ = [
    "StabilizationReport",
    "SandwichReport",
    "stabilize",
    "sandwich_run",
    "select_mu",
    "dominance_check",
    "semigroup_contraction_check",
    "positivity_check",
]

MAX_DOUBLINGS = 20
ORDER_TOL = 1e-7


def _scale(*items: MeshFunction) -> float:
    return max([1.0] + [u.linf() for u in items])


@dataclass
class DominanceReport:
    ok: bool
    worst_node: int | None
    worst_margin: float


def dominance_check(w: MeshFunction, mu: float, f: ReactionTerm) -> DominanceReport:
    """``mu >= f(x, w)`` and ``-mu <= f(x, -w)`` at the free vertices.

    These are the one-sided conditions making ``w`` a supersolution and
    ``-w`` a subsolution of the stationary problem.
    """
    mesh = w.mesh
    free = mesh.free
    x = mesh.vertices[free]
    margin = np.minimum(mu - f(x, w.values[free]), mu + f(x, -w.values[free]))
    i = int(np.argmin(margin)) if margin.size else 0
    worst = float(margin[i]) if margin.size else 0.0
    return DominanceReport(worst >= 0.0, int(free[i]) if worst < 0.0 else None, worst)


def select_mu(f: ReactionTerm, p: ExponentField, u0: MeshFunction | None = None,
              tolerance: float = DEFAULT_TOLERANCE) -> tuple[float, MeshFunction]:
    """Double ``mu`` from 1 until ``w_mu`` dominates ``f`` (and ``|u0|`` when given).

    Raises DomainError after 20 doublings.
    """
    mu = 1.0
    for _ in range(MAX_DOUBLINGS + 1):
        rep = solve_torsion(mu, p, tolerance=tolerance)
        if not rep.converged:
            raise SolverError(f"torsion solve failed at mu = {mu:g}", report=rep)
        w = rep.solution
        ok = dominance_check(w, mu, f).ok
        if ok and u0 is not None:
            ok = bool(np.all(np.abs(u0.values) <= w.values + 1e-12))
        if ok:
            return mu, w
        mu *= 2.0
    raise DomainError(f"no dominating torsion level found up to mu = {mu / 2.0:g}")


def _trajectory(u0, f, p, grid, tolerance, value_range) -> RotheRun:
    r = run(u0, grid, p, reaction=f, tolerance=tolerance, value_range=value_range)
    if not r.completed:
        raise SolverError(f"trajectory stopped early: {r.message}", step=r.failure_step)
    return r


@dataclass
class SandwichReport:
    mu: float
    torsion: MeshFunction
    lower: RotheRun
    upper: RotheRun
    gap_series: np.ndarray
    monotonicity_violations: int
    ordering_violations: int
    ok: bool


def sandwich_run(f: ReactionTerm, mu: float, p: ExponentField, T: float, N: int,
                 tolerance: float = DEFAULT_TOLERANCE) -> SandwichReport:
    """Orbits from ``-w_mu`` and ``w_mu``; checks they are monotone in n and ordered."""
    require_nonincreasing(f)
    rep = solve_torsion(mu, p, tolerance=tolerance)
    if not rep.converged:
        raise SolverError(f"torsion solve failed at mu = {mu:g}", report=rep)
    w = rep.solution
    dom = dominance_check(w, mu, f)
    if not dom.ok:
        x = w.mesh.vertices[dom.worst_node]
        raise DomainError(
            f"w_mu does not dominate f at vertex {dom.worst_node} (x = {x.tolist()}), margin {dom.worst_margin:.3e}"
        )
    R = w.linf()
    grid = TimeGrid(T, N)
    lower = _trajectory(-w, f, p, grid, tolerance, (-R, R))
    upper = _trajectory(w, f, p, grid, tolerance, (-R, R))
    tol = ORDER_TOL * _scale(w)
    mono = ordered = 0
    gaps = []
    for n in range(grid.N + 1):
        a, b = lower.iterates[n].values, upper.iterates[n].values
        gaps.append(float(np.max(b - a)))
        ordered += int(np.min(b - a) < -tol)
        if n:
            mono += int(np.min(a - lower.iterates[n - 1].values) < -tol)
            mono += int(np.max(b - upper.iterates[n - 1].values) > tol)
    return SandwichReport(mu, w, lower, upper, np.array(gaps), mono, ordered, mono == 0 and ordered == 0)


@dataclass
class StabilizationReport:
    steady_state: MeshFunction
    times: np.ndarray
    distance_series: np.ndarray
    sandwich_series: np.ndarray
    sandwich_gap: np.ndarray
    min_value: np.ndarray
    monotonicity_violations: int
    converged: bool
    converged_step: int | None
    threshold: float
    run: RotheRun
    sandwich: SandwichReport | None = None
    observed_rate: float = float("nan")
    notes: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.monotonicity_violations == 0 and (self.sandwich is None or self.sandwich.ok)


def stabilize(u0: MeshFunction, f: ReactionTerm, p: ExponentField, T: float, N: int,
              threshold: float = 1e-5, tolerance: float = DEFAULT_TOLERANCE,
              mu: float | None = None) -> StabilizationReport:
    """Run to ``T`` and track ``|u(t_n) - u_inf|_inf`` against the stationary solution.

    The orbit is bracketed by the sandwich pair started at ``-w_mu`` and
    ``w_mu``; ``mu`` is chosen by doubling unless given.  The run counts as
    converged once the distance drops to ``threshold``.  No-expansion is
    checked as ``d_n <= min_{m <= n} d_m + 1e-7 scale``.
    """
    require_nonincreasing(f)
    same_mesh(u0, p)
    if not np.all(np.isfinite(u0.values)):
        raise DomainError("initial datum must be finite")
    u0 = u0.with_dirichlet()
    st = solve_stationary(f, p, tolerance=tolerance)
    if not st.converged:
        raise SolverError("stationary solve failed", report=st)
    u_inf = st.solution
    if mu is None:
        mu, _ = select_mu(f, p, u0, tolerance)
    sandwich = sandwich_run(f, mu, p, T, N, tolerance)
    w = sandwich.torsion
    notes = []
    if not np.all(np.abs(u0.values) <= w.values + 1e-12):
        notes.append("initial datum not inside [-w_mu, w_mu]; sandwich ordering is not implied")
    R = max(w.linf(), u0.linf())
    traj = _trajectory(u0, f, p, TimeGrid(T, N), tolerance, (-R, R))
    times = traj.grid.times
    dist = np.array([float(np.max(np.abs(u.values - u_inf.values))) for u in traj.iterates])
    lo_hi = np.array([
        (float(np.min(u.values - a.values)), float(np.min(b.values - u.values)))
        for u, a, b in zip(traj.iterates, sandwich.lower.iterates, sandwich.upper.iterates)
    ])
    tol = ORDER_TOL * _scale(u0, u_inf)
    running = np.minimum.accumulate(dist)
    violations = int(np.sum(dist > running + tol))
    below = np.nonzero(dist <= threshold)[0]
    converged_step = int(below[0]) if below.size else None
    # observed exponential rate over the part of the series above roundoff
    keep = dist > max(1e3 * tolerance, 1e-12)
    rate = float("nan")
    if np.count_nonzero(keep) >= 3 and dist[0] > 0.0:
        k = np.nonzero(keep)[0]
        rate = float(-np.polyfit(times[k], np.log(dist[k]), 1)[0])
    return StabilizationReport(
        steady_state=u_inf,
        times=times,
        distance_series=dist,
        sandwich_series=lo_hi,
        sandwich_gap=sandwich.gap_series,
        min_value=np.array([float(np.min(u.values)) for u in traj.iterates]),
        monotonicity_violations=violations,
        converged=converged_step is not None,
        converged_step=converged_step,
        threshold=threshold,
        run=traj,
        sandwich=sandwich,
        observed_rate=rate,
        notes=notes,
    )


@dataclass
class ContractionSeries:
    gaps: np.ndarray
    bounds: np.ndarray
    omega: float
    ok: bool


def semigroup_contraction_check(u0: MeshFunction, v0: MeshFunction, f: ReactionTerm | None, p: ExponentField,
                                T: float, N: int, tolerance: float = DEFAULT_TOLERANCE,
                                value_range: tuple[float, float] | None = None) -> ContractionSeries:
    """``|u^n - v^n|_inf <= exp(omega t_n) |u0 - v0|_inf + tol`` along both orbits.

    ``omega`` is 0 for nonincreasing (or absent) reactions and otherwise the
    reaction's Lipschitz constant on the certified range: the union of the
    barrier ranges of both orbits, or ``value_range``.
    """
    grid = TimeGrid(T, N)
    a = run(u0, grid, p, reaction=f, tolerance=tolerance, value_range=value_range)
    b = run(v0, grid, p, reaction=f, tolerance=tolerance, value_range=value_range)
    for r in (a, b):
        if not r.completed:
            raise SolverError(f"orbit stopped early: {r.message}", step=r.failure_step)
    if f is None or f.nonincreasing:
        omega = 0.0
    else:
        from .barrier import certified_range

        ranges = [rng for rng in (certified_range(a.barriers), certified_range(b.barriers), value_range) if rng]
        if not ranges:
            raise DomainError("no certified range for the Lipschitz constant of f")
        lo = min(r[0] for r in ranges)
        hi = max(r[1] for r in ranges)
        omega = float(f.lipschitz_on(lo, hi))
    gap0 = float(np.max(np.abs(a.iterates[0].values - b.iterates[0].values)))
    gaps = np.array([float(np.max(np.abs(x.values - y.values))) for x, y in zip(a.iterates, b.iterates)])
    bounds = np.exp(omega * grid.times) * gap0
    tol = ORDER_TOL * _scale(u0, v0)
    return ContractionSeries(gaps, bounds, omega, bool(np.all(gaps <= bounds + tol)))


@dataclass
class PositivityReport:
    min_value: float
    worst_step: int
    ok: bool


def positivity_check(run_: RotheRun, f: ReactionTerm | None, tol: float = 1e-10) -> PositivityReport:
    """Every iterate stays ``>= -tol`` when ``u0 >= 0`` and ``f(x, 0) >= 0``."""
    if f is not None and not f.zero_nonnegative:
        raise DomainError("positivity needs f(x, 0) >= 0")
    if np.min(run_.iterates[0].values) < 0.0:
        raise DomainError("positivity needs a nonnegative initial datum")
    mins = np.array([float(np.min(u.values)) for u in run_.iterates])
    n = int(np.argmin(mins))
    return PositivityReport(float(mins[n]), n, bool(mins[n] >= -tol))
