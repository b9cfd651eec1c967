"""Elliptic problems for the p(x)-Laplacian with homogeneous Dirichlet data.

Every problem solved here is the minimization over the free vertices of a
convex discrete energy of the form

    J(u) = c/2 sum_i m_i u_i^2 + lam Phi(u) - lam sum_i m_i F(x_i, u_i) - sum_i m_i g_i u_i

with ``Phi`` the p(x)-Dirichlet energy, ``m_i`` the vertex (lumped) masses
and ``F`` an antiderivative of the reaction in ``u``:

* resolvent ``u - lam Delta_p u = g``:          c = 1, no reaction
* resolvent with reaction ``u + lam A_f u = h``: c = 1, reaction f
* stationary ``-Delta_p u = f(x, u)``:           c = 0, lam = 1, reaction f
* torsion ``-Delta_p w = mu``:                   c = 0, lam = 1, g = mu

Vertex quadrature for the zero-order terms keeps the discrete operator an
M-function in 1D, so comparison and L-infinity contraction hold exactly at
the discrete level.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import PLaplaceForm
from .errors import DomainError
from .exponent import ExponentField
from .mesh import Mesh, MeshFunction, same_mesh
from .reaction import ReactionTerm, require_nonincreasing

log = logging.getLogger(__name__)

__all__ = [
    "ResolventProblem",
    "SolveReport",
    "solve_resolvent",
    "solve_stationary",
    "solve_torsion",
    "comparison_check",
    "linf_contraction_check",
    "discrete_p_laplacian",
    "c1_sub_super",
]

DEFAULT_TOLERANCE = 1e-10
DEFAULT_EPS = 1e-8
ARMIJO_SLOPE = 1e-4
ARMIJO_FACTOR = 0.5
MAX_BACKTRACKS = 80


@dataclass
class ResolventProblem:
    """``u - lam Delta_{p(x)} u = g`` with u = 0 on the boundary."""

    lam: float
    rhs: MeshFunction
    exponent: ExponentField
    tolerance: float = DEFAULT_TOLERANCE
    max_iterations: int = 200
    reaction: ReactionTerm | None = None

    def __post_init__(self):
        if not self.lam > 0.0:
            raise DomainError("lambda must be positive")
        if not self.tolerance > 0.0:
            raise DomainError("tolerance must be positive")
        if not np.all(np.isfinite(self.rhs.values)):
            raise DomainError("right-hand side must be finite")
        same_mesh(self.rhs, self.exponent)


@dataclass
class SolveReport:
    solution: MeshFunction
    iterations: int
    final_residual_norm: float
    energy_history: list = field(default_factory=list)
    regularization_final: float = DEFAULT_EPS
    converged: bool = True
    energy_decrements: list = field(default_factory=list)
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "final_residual_norm": self.final_residual_norm,
            "energy_history": list(self.energy_history),
            "regularization_final": self.regularization_final,
            "converged": self.converged,
            "message": self.message,
        }


class _Energy:
    """The discrete convex energy J restricted to the free vertices."""

    def __init__(self, p: ExponentField, mass_coef: float, lam: float, g: np.ndarray,
                 reaction: ReactionTerm | None):
        self.mesh = p.mesh
        self.form = PLaplaceForm(p)
        self.free = self.mesh.free
        self.m = self.mesh.lumped_mass[self.free]
        self.x = self.mesh.vertices[self.free]
        self.c = mass_coef
        self.lam = lam
        self.g = g[self.free]
        self.reaction = reaction

    def full(self, xf: np.ndarray) -> np.ndarray:
        u = np.zeros(self.mesh.num_vertices)
        u[self.free] = xf
        return u

    def value(self, xf: np.ndarray) -> float:
        u = self.full(xf)
        val = 0.5 * self.c * np.sum(self.m * xf * xf) + self.lam * self.form.energy(u) - np.sum(self.m * self.g * xf)
        if self.reaction is not None:
            val -= self.lam * np.sum(self.m * self.reaction.antiderivative_difference(self.x, np.zeros_like(xf), xf))
        return float(val)

    def difference(self, xf: np.ndarray, yf: np.ndarray) -> float:
        """J(y) - J(x), evaluated term by term to avoid cancellation."""
        d = yf - xf
        val = 0.5 * self.c * np.sum(self.m * d * (yf + xf))
        val += self.lam * self.form.energy_difference(self.full(xf), self.full(yf))
        val -= np.sum(self.m * self.g * d)
        if self.reaction is not None:
            val -= self.lam * np.sum(self.m * self.reaction.antiderivative_difference(self.x, xf, yf))
        return float(val)

    def gradient(self, xf: np.ndarray) -> np.ndarray:
        grad = self.c * self.m * xf + self.lam * self.form.gradient(self.full(xf))[self.free] - self.m * self.g
        if self.reaction is not None:
            grad -= self.lam * self.m * self.reaction(self.x, xf)
        return grad

    def hessian(self, xf: np.ndarray, eps: float, majorize: bool = False) -> sp.csc_matrix:
        diag = self.c * self.m
        if self.reaction is not None:
            diag = diag - self.lam * self.m * self.reaction.derivative(self.x, xf)
        return (self.lam * self.form.hessian(self.full(xf), eps, majorize) + sp.diags(diag)).tocsc()


def _armijo(energy: _Energy, x: np.ndarray, d: np.ndarray, slope: float):
    """Backtracking line search; returns (new_x, decrement) or (None, None)."""
    alpha = 1.0
    for _ in range(MAX_BACKTRACKS):
        y = x + alpha * d
        if np.all(np.isfinite(y)):
            with np.errstate(over="ignore", invalid="ignore"):
                dj = energy.difference(x, y)
            if np.isfinite(dj) and dj < 0.0 and dj <= ARMIJO_SLOPE * alpha * slope:
                return y, dj
        alpha *= ARMIJO_FACTOR
    return None, None


def _solve_direction(H, grad: np.ndarray):
    try:
        with np.errstate(all="ignore"):
            d = spla.spsolve(H, -grad)
    except (RuntimeError, ValueError):
        return None
    if np.all(np.isfinite(d)) and float(grad @ d) < 0.0:
        return d
    return None


def _minimize(energy: _Energy, x0: np.ndarray, tolerance: float, max_iterations: int,
              eps: float = DEFAULT_EPS, newton: bool = True) -> SolveReport:
    """Damped regularized Newton with Armijo backtracking and a gradient fallback.

    The gradient and the line search use the exact (eps = 0) energy; eps
    only regularizes the Hessian that defines the search direction.  On
    elements with p < 2 that Hessian drops its rank-one term, which makes
    it dominate the true one.  The Hessian regularization is
    ``min(eps, 1e-4 |grad|_inf^2)``.  When no direction decreases the energy, eps
    is annealed by a factor 10.
    """
    x = np.array(x0, dtype=float)
    history = [energy.value(x)]
    decrements = []
    stalls = 0
    it = 0
    rnorm = np.inf
    message = ""
    while True:
        grad = energy.gradient(x)
        if not np.all(np.isfinite(grad)):
            message = "non-finite gradient"
            break
        rnorm = float(np.max(np.abs(grad))) if grad.size else 0.0
        if rnorm <= tolerance:
            message = "converged"
            break
        if it >= max_iterations:
            message = "maximum iterations exceeded"
            break
        it += 1
        y = None
        # on p < 2 elements the true Hessian gives oscillating Newton steps;
        # the majorizing (lagged-diffusivity) one is used there instead.  Its
        # regularization shrinks with the residual so that small but nonzero
        # gradients near the solution keep their true weight.
        eps_used = min(eps, 1e-4 * rnorm * rnorm)
        H = energy.hessian(x, eps_used, majorize=True)
        if newton:
            d = _solve_direction(H, grad)
            if d is not None:
                y, dj = _armijo(energy, x, d, float(grad @ d))
        if y is None:
            scale = np.abs(H.diagonal())
            scale[scale == 0.0] = 1.0
            d = -grad / scale
            y, dj = _armijo(energy, x, d, float(grad @ d))
        if y is None:
            stalls += 1
            if stalls > 6:
                message = "line search stalled"
                break
            eps *= 0.1
            continue
        x = y
        decrements.append(dj)
        history.append(history[-1] + dj)
    converged = rnorm <= tolerance
    return SolveReport(
        solution=MeshFunction(energy.mesh, energy.full(x)),
        iterations=it,
        final_residual_norm=rnorm,
        energy_history=history,
        regularization_final=eps,
        converged=converged,
        energy_decrements=decrements,
        message=message,
    )


def solve_resolvent(prob: ResolventProblem, initial_guess: MeshFunction | None = None,
                    newton: bool = True) -> SolveReport:
    """Minimize ``J_lam(u) = 1/2 int u^2 + lam int |grad u|^p/p - int g u``.

    With ``prob.reaction`` set, the reaction's antiderivative enters the
    energy and the problem solved is ``u + lam (-Delta_p u - f(x, u)) = g``;
    the reaction must then be nonincreasing.
    """
    require_nonincreasing(prob.reaction)
    mesh = prob.exponent.mesh
    g = prob.rhs.values
    if prob.reaction is None and not np.any(g[mesh.free]):
        zero = MeshFunction.zeros(mesh)
        return SolveReport(zero, 0, 0.0, [0.0], DEFAULT_EPS, True, [], "zero data")
    energy = _Energy(prob.exponent, 1.0, prob.lam, g, prob.reaction)
    x0 = (initial_guess.values if initial_guess is not None else g)[mesh.free]
    return _minimize(energy, x0, prob.tolerance, prob.max_iterations, newton=newton)


def _linear_torsion(mesh: Mesh, mu: float) -> np.ndarray:
    from .assembly import stiffness_matrix

    free = mesh.free
    K = stiffness_matrix(mesh)[free][:, free].tocsc()
    w = np.zeros(mesh.num_vertices)
    w[free] = spla.spsolve(K, mu * mesh.lumped_mass[free])
    return w


def _power_scaled_guess(mesh: Mesh, p: ExponentField, mu: float) -> np.ndarray:
    """Torsion-shaped starting point with the magnitude suggested by homogeneity."""
    w1 = _linear_torsion(mesh, 1.0)
    pbar = float(np.mean(p.element_values))
    peak = max(float(w1.max()), 1e-300)
    target = (mu ** (1.0 / (pbar - 1.0))) * peak ** (1.0 / (pbar - 1.0)) if pbar != 2.0 else mu * peak
    return w1 * (target / peak)


def _check_mesh(mesh: Mesh | None, p: ExponentField) -> Mesh:
    if mesh is not None and mesh is not p.mesh:
        raise DomainError("exponent field lives on a different mesh")
    return p.mesh


def solve_stationary(f: ReactionTerm | None, p: ExponentField, mesh: Mesh | None = None,
                     tolerance: float = DEFAULT_TOLERANCE, max_iterations: int = 200,
                     allow_nonmonotone: bool = False,
                     initial_guess: MeshFunction | None = None) -> SolveReport:
    """Solve ``-Delta_{p(x)} u = f(x, u)`` with zero boundary values.

    ``f`` must be nonincreasing in ``u``; pass ``allow_nonmonotone=True`` to
    look for *a* solution (a critical point of the energy) without any
    uniqueness claim.
    """
    mesh = _check_mesh(mesh, p)
    if not allow_nonmonotone:
        require_nonincreasing(f)
    if f is None:
        return SolveReport(MeshFunction.zeros(mesh), 0, 0.0, [0.0], DEFAULT_EPS, True, [], "zero data")
    energy = _Energy(p, 0.0, 1.0, np.zeros(mesh.num_vertices), f)
    if initial_guess is not None:
        x0 = initial_guess.values[mesh.free]
    else:
        x0 = np.zeros(mesh.free.size)
    return _minimize(energy, x0, tolerance, max_iterations)


def solve_torsion(lambda_src: float, p: ExponentField, mesh: Mesh | None = None,
                  tolerance: float = DEFAULT_TOLERANCE, max_iterations: int = 200) -> SolveReport:
    """Solve ``-Delta_{p(x)} w = lambda_src`` with zero boundary values; ``w >= 0``."""
    if not lambda_src > 0.0:
        raise DomainError("torsion level must be positive")
    mesh = _check_mesh(mesh, p)
    energy = _Energy(p, 0.0, 1.0, np.full(mesh.num_vertices, float(lambda_src)), None)
    x0 = _power_scaled_guess(mesh, p, lambda_src)[mesh.free]
    return _minimize(energy, x0, tolerance, max_iterations)


def discrete_p_laplacian(u: MeshFunction, p: ExponentField) -> MeshFunction:
    """Nodal surrogate of ``Delta_{p(x)} u``: minus the assembled residual over the vertex masses."""
    mesh = same_mesh(u, p)
    r = PLaplaceForm(p).gradient(u.values)
    out = np.zeros(mesh.num_vertices)
    out[mesh.free] = -r[mesh.free] / mesh.lumped_mass[mesh.free]
    return MeshFunction(mesh, out)


@dataclass
class ComparisonReport:
    min_difference: float
    violation: float
    claim_min: float
    ok: bool


def comparison_check(u: MeshFunction, v: MeshFunction, p: ExponentField, tol_order: float = 1e-8) -> ComparisonReport:
    """Check ``u >= v`` nodally.

    ``claim_min`` is the smallest free entry of ``r(u) - r(v)`` (the
    assembled residual difference); it is nonnegative exactly when
    ``-Delta_p u >= -Delta_p v`` tested against nonnegative P1 functions.
    """
    mesh = same_mesh(u, v, p)
    diff = u.values - v.values
    form = PLaplaceForm(p)
    rd = (form.gradient(u.values) - form.gradient(v.values))[mesh.free]
    mn = float(diff.min())
    violation = max(0.0, -mn)
    return ComparisonReport(mn, violation, float(rd.min()) if rd.size else 0.0, violation <= tol_order)


@dataclass
class ContractionReport:
    solution_gap: float
    data_gap: float
    ok: bool
    reports: tuple = ()


def linf_contraction_check(h: MeshFunction, g: MeshFunction, lam: float, f: ReactionTerm | None,
                           p: ExponentField, tolerance: float = DEFAULT_TOLERANCE,
                           slack: float = 1e-8) -> ContractionReport:
    """Solve ``u + lam A_f u = h`` and ``v + lam A_f v = g``; check ``|u-v|_inf <= |h-g|_inf``.

    The data gap is measured over the free vertices, the only ones that
    enter the discrete problem.
    """
    mesh = same_mesh(h, g, p)
    require_nonincreasing(f)
    ru = solve_resolvent(ResolventProblem(lam, h, p, tolerance, reaction=f))
    rv = solve_resolvent(ResolventProblem(lam, g, p, tolerance, reaction=f))
    if not (ru.converged and rv.converged):
        from .errors import SolverError

        raise SolverError("resolvent solve failed in contraction check", report=ru if not ru.converged else rv)
    gap = float(np.max(np.abs(ru.solution.values - rv.solution.values)))
    data = float(np.max(np.abs(h.values - g.values)[mesh.free])) if mesh.free.size else 0.0
    return ContractionReport(gap, data, gap <= data + slack, (ru, rv))


def c1_sub_super(u0: MeshFunction, f: ReactionTerm, p: ExponentField,
                 tolerance: float = DEFAULT_TOLERANCE) -> tuple[SolveReport, SolveReport]:
    """Sub- and supersolution bracketing ``u0``, built from ``G = |Delta_p u0| + |f|``.

    Solves ``-Delta_p w = -G(x, w)`` and ``-Delta_p w = G(x, w)`` (no
    uniqueness claim).  The discrete Laplacian of ``u0`` is the assembled
    residual divided by the vertex masses.
    """
    mesh = same_mesh(u0, p)
    lap = np.abs(discrete_p_laplacian(u0, p).values)[mesh.free]

    def _lap_at(x):
        # the solver only evaluates reactions at the free vertices
        return lap

    def make(sign: float) -> ReactionTerm:
        def func(x, u):
            return sign * (_lap_at(x) + np.abs(f(x, u)))

        def derivative(x, u):
            return sign * np.sign(f(x, u)) * f.derivative(x, u)

        return ReactionTerm(func, derivative, lambda lo, hi: np.inf, nonincreasing=False,
                            description={"kind": "c1_envelope", "sign": sign})

    under = solve_stationary(make(-1.0), p, mesh, tolerance, allow_nonmonotone=True)
    over = solve_stationary(make(1.0), p, mesh, tolerance, allow_nonmonotone=True)
    return under, over
