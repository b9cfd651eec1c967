"""Rothe (implicit Euler in time) semi-discretization of the p(x)-heat equation.

Each step solves ``u^n - dt Delta_p u^n = u^{n-1} + dt s^n`` with the
diffusion implicit and the right-hand side ``s^n`` either a time-averaged
source ``h^n`` or the reaction evaluated at the previous iterate,
``f(x, u^{n-1})``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .assembly import PLaplaceForm, discrete_norms
from .barrier import BLOWUP_THRESHOLD, barrier_horizon, barriers_for, certified_range
from .elliptic import DEFAULT_TOLERANCE, ResolventProblem, SolveReport, solve_resolvent
from .errors import DomainError, SolverError
from .exponent import ExponentField
from .mesh import Mesh, MeshFunction, same_mesh
from .quadrature import element_samples, gauss_unit
from .reaction import ReactionTerm

log = logging.getLogger(__name__)

__all__ = [
    "TimeGrid",
    "RotheRun",
    "average_source",
    "step",
    "run",
    "energy_inequality_check",
    "blowup_energy",
    "cauchy_two_grid",
    "interpolants",
]

HORIZON_FRACTION = 0.9
DIAGNOSTIC_COLUMNS = ("linf", "l2", "modular_gradient", "step_rate", "energy")


@dataclass(frozen=True)
class TimeGrid:
    T: float
    N: int

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise DomainError("N must be ≥ 1")
        if not self.T > 0.0:
            raise DomainError("T must be positive")

    @property
    def dt(self) -> float:
        return self.T / self.N

    @property
    def times(self) -> np.ndarray:
        t = np.arange(self.N + 1) * self.dt
        t[-1] = self.T
        return t

    def refined(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.T, self.N * factor)


@dataclass
class RotheRun:
    grid: TimeGrid
    iterates: list
    source_mode: str
    diagnostics: np.ndarray
    sources: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    blowup_suspected: bool = False
    failed: bool = False
    failure_step: int | None = None
    message: str = ""
    certificate: str = ""
    barriers: dict = field(default_factory=dict)
    tolerance: float = DEFAULT_TOLERANCE

    @property
    def completed(self) -> bool:
        return len(self.iterates) == self.grid.N + 1 and not self.failed

    @property
    def final(self) -> MeshFunction:
        return self.iterates[-1]

    def metadata(self) -> dict:
        return {
            "T": self.grid.T,
            "N": self.grid.N,
            "dt": self.grid.dt,
            "source_mode": self.source_mode,
            "tolerance": self.tolerance,
            "steps_completed": len(self.iterates) - 1,
            "completed": self.completed,
            "blowup_suspected": self.blowup_suspected,
            "failed": self.failed,
            "failure_step": self.failure_step,
            "message": self.message,
            "certificate": self.certificate,
            "newton_iterations": [r.iterations for r in self.reports],
        }


def average_source(h: Callable[[float, np.ndarray], np.ndarray], grid: TimeGrid, mesh: Mesh) -> list[MeshFunction]:
    """``h^n = (1/dt) int_{t_{n-1}}^{t_n} h(s, x) ds`` by 3-point Gauss in time, nodal in space."""
    s, w = gauss_unit(3)
    t = grid.times
    out = []
    for n in range(1, grid.N + 1):
        a, b = t[n - 1], t[n]
        vals = np.zeros(mesh.num_vertices)
        for sk, wk in zip(s, w):
            vals += wk * np.asarray(h(a + sk * (b - a), mesh.vertices), dtype=float)
        out.append(MeshFunction(mesh, vals))
    return out


def step(u_prev: MeshFunction, source: MeshFunction, dt: float, p: ExponentField,
         tolerance: float = DEFAULT_TOLERANCE, max_iterations: int = 200) -> SolveReport:
    """One Rothe step: the resolvent with ``lambda = dt`` and ``g = u_prev + dt source``.

    The residual tolerance is relative to ``max(1, |g|_inf)`` so very large
    data (a blowing-up run) is still solved to working precision.
    """
    if not dt > 0.0:
        raise DomainError("dt must be positive")
    same_mesh(u_prev, source, p)
    g = MeshFunction(u_prev.mesh, u_prev.values + dt * source.values)
    scale = max(1.0, g.linf())
    prob = ResolventProblem(dt, g, p, tolerance * scale, max_iterations)
    return solve_resolvent(prob, initial_guess=u_prev)


def _diagnostics(u: MeshFunction, prev: MeshFunction | None, dt: float, p: ExponentField, form: PLaplaceForm):
    linf, l2, modular = discrete_norms(u, p)
    if prev is None:
        rate = 0.0
    else:
        d = (u.values - prev.values) / dt
        rate = float(np.sqrt(np.sum(u.mesh.lumped_mass * d * d)))
    return (linf, l2, modular, rate, form.energy(u.values))


def run(u0: MeshFunction, grid: TimeGrid, p: ExponentField, source=None, reaction: ReactionTerm | None = None,
        tolerance: float = DEFAULT_TOLERANCE, value_range: tuple[float, float] | None = None,
        enforce_horizon: bool = True) -> RotheRun:
    """Execute the N Rothe steps from ``u0`` (Dirichlet mask applied).

    Pass ``source`` (callable ``h(t, x)``) for the source problem or
    ``reaction`` for the reaction problem.  In reaction mode with a declared
    H1/H2 bound the barriers certify a value range; the run is refused when
    ``T >= 0.9`` times the barrier blow-up horizon or when ``dt Lip(f) >= 1``
    on the certified range.  Without a bound, ``value_range`` may supply the
    range for the step gate; otherwise the run carries no containment
    certificate.
    """
    if source is not None and reaction is not None:
        raise DomainError("give either a source or a reaction, not both")
    mesh = same_mesh(u0, p)
    if not np.all(np.isfinite(u0.values)):
        raise DomainError("initial datum must be finite")
    u = u0.with_dirichlet()
    dt = grid.dt
    barriers: dict = {}
    certificate = ""
    sources = None
    if reaction is not None:
        mode = "reaction"
        barriers = barriers_for(reaction, u.linf(), grid.times)
        if barriers:
            t_max = barrier_horizon(barriers)
            if enforce_horizon and grid.T >= HORIZON_FRACTION * t_max:
                raise DomainError(
                    f"T = {grid.T:g} is beyond the admissible horizon: barrier blows up at t = {t_max:.6g}, "
                    f"need T < {HORIZON_FRACTION * t_max:.6g}"
                )
            value_range = certified_range(barriers)
            certificate = f"{reaction.hypothesis} barriers"
        elif value_range is None:
            certificate = "no containment certificate"
        else:
            certificate = "user-supplied value range"
        if value_range is not None:
            lip = reaction.lipschitz_on(*value_range)
            if not dt * lip < 1.0:
                raise DomainError(
                    f"time step too large: dt * Lip(f) = {dt * lip:.6g} must be < 1 "
                    f"(Lip(f) = {lip:.6g} on [{value_range[0]:.6g}, {value_range[1]:.6g}])"
                )
    else:
        mode = "source"
        sources = average_source(source, grid, mesh) if source is not None else [MeshFunction.zeros(mesh)] * grid.N

    form = PLaplaceForm(p)
    iterates = [u]
    diags = [_diagnostics(u, None, dt, p, form)]
    used_sources, reports = [], []
    out = RotheRun(grid, iterates, mode, np.zeros((0, 5)), used_sources, reports,
                   certificate=certificate, barriers=barriers, tolerance=tolerance)
    xf = mesh.vertices
    for n in range(1, grid.N + 1):
        if mode == "reaction":
            with np.errstate(over="ignore", invalid="ignore"):
                s = MeshFunction(mesh, reaction(xf, u.values))
        else:
            s = sources[n - 1]
        g_norm = float(np.max(np.abs(u.values + dt * s.values)))
        if not np.isfinite(g_norm) or g_norm > BLOWUP_THRESHOLD:
            out.blowup_suspected = True
            out.message = f"blow-up suspected before step {n} (t = {grid.times[n]:.6g})"
            break
        rep = step(u, s, dt, p, tolerance)
        if not rep.converged:
            out.failed = True
            out.failure_step = n
            out.message = f"step {n}: {rep.message} (residual {rep.final_residual_norm:.3e})"
            log.warning(out.message)
            reports.append(rep)
            break
        prev, u = u, rep.solution
        iterates.append(u)
        used_sources.append(s)
        reports.append(rep)
        diags.append(_diagnostics(u, prev, dt, p, form))
        if u.linf() > BLOWUP_THRESHOLD:
            out.blowup_suspected = True
            out.message = f"blow-up suspected at step {n} (t = {grid.times[n]:.6g})"
            break
    out.diagnostics = np.array(diags, dtype=float)
    if not out.message:
        out.message = "completed"
    return out


@dataclass
class EnergyReport:
    lhs: float
    rhs: float
    slack: float
    margin: float
    ok: bool


def energy_inequality_check(run: RotheRun, sources: list | None = None) -> EnergyReport:
    """``sum_n [Phi(u^n) - Phi(u^{n-1})] + 1/2 sum_n dt |D^n|^2 <= 1/2 sum_n dt |h^n|^2``.

    ``D^n = (u^n - u^{n-1})/dt`` and the norms are the vertex-quadrature L2
    norms the scheme is written in.  ``sources`` defaults to the right-hand
    sides the run actually used.  The slack is ``N * tolerance * scale``
    where ``scale`` bounds the pairing of the solver residual with the
    increments plus the size of the energies.
    """
    sources = run.sources if sources is None else sources
    steps = len(run.iterates) - 1
    if steps == 0:
        return EnergyReport(0.0, 0.0, 0.0, 0.0, True)
    mesh = run.iterates[0].mesh
    m = mesh.lumped_mass.copy()
    m[mesh.boundary] = 0.0
    dt = run.grid.dt
    energies = run.diagnostics[:, 4]
    lhs = float(energies[steps] - energies[0])
    rhs = 0.0
    scale = 1.0 + float(np.max(energies))
    for n in range(1, steps + 1):
        inc = run.iterates[n].values - run.iterates[n - 1].values
        lhs += 0.5 * dt * float(np.sum(m * (inc / dt) ** 2))
        rhs += 0.5 * dt * float(np.sum(m * sources[n - 1].values ** 2))
        scale = max(scale, 1.0 + float(np.sum(np.abs(inc))) * max(1.0, run.iterates[n].linf()))
    slack = run.grid.N * run.tolerance * scale
    return EnergyReport(lhs, rhs, slack, rhs - lhs, lhs <= rhs + slack)


def blowup_energy(u: MeshFunction, p: ExponentField, q: float) -> float:
    """``E(u) = int |grad u|^p/p - int u^{q+1}/(q+1)``, the power taken as ``sgn(u)|u|^{q+1}``."""
    if not q > 1.0:
        raise DomainError("q must exceed 1")
    mesh = same_mesh(u, p)
    samples, w = element_samples(mesh, u.values)
    power = np.sign(samples) * np.abs(samples) ** (q + 1.0)
    return PLaplaceForm(p).energy(u.values) - float(np.sum(mesh.volumes * (power @ w))) / (q + 1.0)


@dataclass
class CauchyReport:
    deltas: list
    ratios: list
    steps: list
    ok: bool


def cauchy_two_grid(u0: MeshFunction, T: float, N_coarse: int, p: ExponentField, source=None,
                    reaction: ReactionTerm | None = None, tolerance: float = DEFAULT_TOLERANCE,
                    refinements: int = 2) -> CauchyReport:
    """Runs with ``N, 2N, ..., 2^refinements N`` steps.

    ``delta_k`` is the largest ``|u_k(t) - u_{k+1}(t)|_inf`` over the grid
    times of run ``k`` (all shared with run ``k+1``); the report asserts
    ``delta_{k+1} <= delta_k``.
    """
    if N_coarse < 2:
        raise DomainError("N_coarse must be ≥ 2")
    if refinements < 1:
        raise DomainError("need at least one refinement")
    runs = []
    for k in range(refinements + 1):
        grid = TimeGrid(T, N_coarse * 2 ** k)
        r = run(u0, grid, p, source=source, reaction=reaction, tolerance=tolerance)
        if not r.completed:
            raise SolverError(f"run with N = {grid.N} did not complete: {r.message}", step=r.failure_step)
        runs.append(r)
    deltas = []
    for a, b in zip(runs[:-1], runs[1:]):
        gap = max(float(np.max(np.abs(a.iterates[n].values - b.iterates[2 * n].values)))
                  for n in range(a.grid.N + 1))
        deltas.append(gap)
    ratios = [d1 / d0 if d0 > 0.0 else 0.0 for d0, d1 in zip(deltas[:-1], deltas[1:])]
    ok = all(d1 <= d0 for d0, d1 in zip(deltas[:-1], deltas[1:]))
    return CauchyReport(deltas, ratios, [r.grid.N for r in runs], ok)


def interpolants(run: RotheRun, t: float) -> tuple[MeshFunction, MeshFunction]:
    """Piecewise-constant and piecewise-linear interpolants at time ``t``.

    Intervals are taken right-closed, ``(t_{n-1}, t_n]``, so both equal
    ``u^n`` at ``t = t_n``; at ``t = 0`` both equal ``u^0``.
    """
    steps = len(run.iterates) - 1
    times = run.grid.times
    if not 0.0 <= t <= times[steps]:
        raise DomainError(f"t = {t!r} outside [0, {times[steps]}]")
    if t == 0.0:
        return run.iterates[0], run.iterates[0]
    n = int(np.searchsorted(times, t, side="left"))
    n = min(max(n, 1), steps)
    lo, hi = run.iterates[n - 1], run.iterates[n]
    theta = (t - times[n - 1]) / run.grid.dt
    linear = MeshFunction(hi.mesh, lo.values + theta * (hi.values - lo.values))
    return hi, linear
