"""Seeded invariant suites behind ``rothe-px verify``.

Every property yields a ``PropertyResult`` with a measured slack: the
distance to the failure threshold, nonnegative exactly when the property
holds.
"""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass

import numpy as np
from scipy.integrate import trapezoid

from . import exponent as ex
from .assembly import PLaplaceForm, assemble_dirichlet_energy, mass_matrix, stiffness_matrix
from .barrier import containment_check
from .config import Problem, parse_config
from .elliptic import ResolventProblem, linf_contraction_check, solve_resolvent, solve_stationary
from .exponent import ExponentField
from .mesh import MeshFunction, interval_mesh, square_mesh
from .quadrature import power_integrals
from .reaction import polynomial_reaction
from .rothe import TimeGrid, average_source, energy_inequality_check, interpolants, run
from .stabilization import sandwich_run, stabilize

__all__ = ["SUITES", "PropertyResult", "run_verify"]


@dataclass
class PropertyResult:
    suite: str
    name: str
    passed: bool
    slack: float
    detail: str = ""


def _result(suite, name, slack, detail="") -> PropertyResult:
    slack = float(slack)
    return PropertyResult(suite, name, bool(slack >= 0.0), slack, detail)


def _random_exponent(rng, mesh, lo=1.3, hi=3.5) -> ExponentField:
    a = rng.uniform(lo, hi)
    b = rng.uniform(lo, hi)
    c = rng.uniform(0.0, 0.5 * min(a, b, hi - max(a, b)) if hi > max(a, b) else 0.0)
    k = rng.integers(1, 4)
    return ExponentField.from_function(
        mesh, lambda x: np.clip(a + (b - a) * x[:, 0] + c * np.sin(k * np.pi * x[:, 0]), lo, hi)
    )


def _random_function(rng, mesh, scale=1.0) -> MeshFunction:
    return MeshFunction(mesh, scale * rng.standard_normal(mesh.num_vertices))


def suite_norms(rng, expect_fail=False):
    s = "norms"
    out = []
    unit, bounds, const, homog = [], [], [], []
    for _ in range(40):
        mesh = interval_mesh(int(rng.integers(4, 65)))
        p = _random_exponent(rng, mesh)
        u = _random_function(rng, mesh, 10.0 ** rng.uniform(-2, 2))
        n = ex.luxemburg_norm(u, p)
        unit.append(abs(ex.semimodular(u * (1.0 / n), p) - 1.0))
        rep = ex.norm_modular_bounds_check(u, p)
        bounds.append(min(rep.lower_slack, rep.upper_slack))
        c = rng.uniform(-5, 5)
        homog.append(abs(ex.luxemburg_norm(u * c, p) - abs(c) * n) / (abs(c) * n))
        q = rng.uniform(1.3, 3.5)
        pq = ExponentField.constant(mesh, q)
        classical = float(np.sum(power_integrals(mesh, u.values, q))) ** (1.0 / q)
        const.append(abs(ex.luxemburg_norm(u, pq) - classical) / classical)
    out.append(_result(s, "unit-ball identity", 1e-8 - max(unit)))
    out.append(_result(s, "norm-modular bounds", min(bounds)))
    out.append(_result(s, "homogeneity", 1e-8 - max(homog)))
    out.append(_result(s, "constant-exponent reduction", 1e-10 - max(const)))

    mesh = interval_mesh(48)
    p = ExponentField.from_function(mesh, lambda x: 2.0 + 0.5 * np.sin(np.pi * x[:, 0]))
    worst = np.inf
    for _ in range(50):
        f, g = _random_function(rng, mesh), _random_function(rng, mesh)
        rep = ex.holder_pairing_check(f, g, p, _flip=expect_fail)
        margin = rep.constant - rep.ratio
        worst = min(worst, -margin if expect_fail else margin)
    out.append(_result(s, "Hoelder pairing (C = 2)" + (" [fault injected]" if expect_fail else ""), worst))

    pe = ExponentField.from_function(mesh, lambda x: 1.0 + 0.5 * x[:, 0], strict=False)
    qe = ExponentField.constant(mesh, 2.0)
    worst = min((lambda r: r.rhs - r.lhs)(ex.power_norm_inequality_check(_random_function(rng, mesh), pe, qe))
                for _ in range(20))
    out.append(_result(s, "power-norm inequality", worst))

    u = _random_function(rng, mesh)
    rho = [ex.semimodular(u * 0.5 ** k, p) for k in range(40)]
    nrm = [ex.luxemburg_norm(u * 0.5 ** k, p) for k in range(40)]
    mono = min(np.min(-np.diff(rho)), np.min(-np.diff(nrm)))
    vanish = 1e-6 - max(rho[-1], nrm[-1])
    out.append(_result(s, "modular and norm vanish together", min(mono, vanish)))
    return out


def suite_simon(rng, expect_fail=False):
    out = []
    for p in (1.3, 1.7, 2.5, 3.5):
        u = rng.standard_normal((10_000, 2)) * 10.0 ** rng.uniform(-3, 3, (10_000, 1))
        v = rng.standard_normal((10_000, 2)) * 10.0 ** rng.uniform(-3, 3, (10_000, 1))
        _, mono = ex.simon_vector_ops(u, v, p)
        out.append(_result("simon", f"monotone duality map p={p}", float(np.min(mono)) + 1e-14))
        c, ct = ex.fit_simon_constants(u, v, p)
        ok = np.isfinite(c) and ct > 0.0
        out.append(PropertyResult("simon", f"fitted constants p={p}", bool(ok), float(ct), f"c = {c:.6g}, c_tilde = {ct:.6g}"))
    return out


def suite_assembly(rng, expect_fail=False):
    s = "assembly"
    fd, jac, mono = [], [], []
    for k in range(20):
        mesh = interval_mesh(int(rng.integers(4, 17))) if k % 2 == 0 else square_mesh(int(rng.integers(2, 5)))
        p = _random_exponent(rng, mesh, 1.5, 3.0)
        u = _random_function(rng, mesh).with_dirichlet()
        form = PLaplaceForm(p)
        res = form.gradient(u.values)[mesh.free]
        d = np.zeros(mesh.num_vertices)
        d[mesh.free] = rng.standard_normal(mesh.free.size)
        h = 1e-6
        num = (form.energy(u.values + h * d) - form.energy(u.values - h * d)) / (2 * h)
        fd.append(abs(num - res @ d[mesh.free]) / max(abs(num), 1e-12))
        asm = assemble_dirichlet_energy(u, p, eps=1e-3)
        dres = (form.gradient(u.values + h * d, 1e-3) - form.gradient(u.values - h * d, 1e-3))[mesh.free] / (2 * h)
        jd = asm.jacobian @ d[mesh.free]
        jac.append(np.linalg.norm(dres - jd) / max(np.linalg.norm(jd), 1e-12))
        v = _random_function(rng, mesh).with_dirichlet()
        rv = form.gradient(v.values)[mesh.free]
        mono.append((res - rv) @ (u.values - v.values)[mesh.free])
    out = [
        _result(s, "residual vs finite differences", 1e-5 - max(fd)),
        _result(s, "jacobian vs directional derivative", 1e-5 - max(jac)),
        _result(s, "monotone discrete operator", min(mono) + 1e-12),
    ]
    worst = 0.0
    for mesh in (interval_mesh(16), square_mesh(4)):
        u = _random_function(rng, mesh).with_dirichlet()
        asm = assemble_dirichlet_energy(u, ExponentField.constant(mesh, 2.0))
        K = stiffness_matrix(mesh)[mesh.free][:, mesh.free]
        worst = max(worst, abs(asm.jacobian - K).max(), np.max(np.abs(asm.residual - K @ u.values[mesh.free])))
    out.append(_result(s, "p = 2 reduction to stiffness", 1e-12 - worst))
    mesh = square_mesh(4)
    u, g = _random_function(rng, mesh), _random_function(rng, mesh)
    M = mass_matrix(mesh)
    from .assembly import assemble_mass_terms

    ug, uu = assemble_mass_terms(u, g)
    out.append(_result(s, "mass terms symmetric", 1e-12 - abs(ug - g.values @ (M @ u.values))))
    return out


def suite_resolvent(rng, expect_fail=False):
    s = "resolvent"
    out = []
    mesh = interval_mesh(32)
    p = ExponentField.from_function(mesh, lambda x: 1.7 + 0.6 * x[:, 0])
    g = MeshFunction.interpolate(mesh, lambda x: np.sin(np.pi * x[:, 0]) + x[:, 0])
    prob = ResolventProblem(0.5, g, p)
    a = solve_resolvent(prob)
    b = solve_resolvent(prob, initial_guess=_random_function(rng, mesh, 3.0))
    out.append(_result(s, "uniqueness from two initial guesses",
                       10 * prob.tolerance - np.max(np.abs(a.solution.values - b.solution.values))))
    out.append(_result(s, "energy descent", -max(np.max(np.diff(a.energy_history)), np.max(np.diff(b.energy_history)))))
    M = mass_matrix(mesh)
    errs = []
    for lam in (1e-1, 1e-2, 1e-3):
        d = solve_resolvent(ResolventProblem(lam, g, p)).solution.values - g.with_dirichlet().values
        errs.append(float(np.sqrt(d @ (M @ d))))
    out.append(_result(s, "resolvent tends to identity as lambda -> 0", float(np.min(-np.diff(errs)))))
    worst = np.inf
    for _ in range(5):
        g2 = _random_function(rng, mesh)
        g1 = MeshFunction(mesh, g2.values + np.abs(rng.standard_normal(mesh.num_vertices)))
        u1 = solve_resolvent(ResolventProblem(1.0, g1, p)).solution
        u2 = solve_resolvent(ResolventProblem(1.0, g2, p)).solution
        worst = min(worst, np.min(u1.values - u2.values) + 1e-8)
    out.append(_result(s, "order preservation", worst))
    f = polynomial_reaction([0.0, 0.0, 0.0, -1.0])
    worst = np.inf
    for _ in range(5):
        h, g_ = _random_function(rng, mesh), _random_function(rng, mesh)
        rep = linf_contraction_check(h, g_, 1.0, f, p)
        worst = min(worst, rep.data_gap + 1e-8 - rep.solution_gap)
    out.append(_result(s, "L-infinity contraction", worst))
    norms = []
    for cells in (16, 32, 64):
        m = interval_mesh(cells)
        pm = ExponentField.from_function(m, lambda x: 1.7 + 0.6 * x[:, 0])
        gm = MeshFunction.interpolate(m, lambda x: np.abs(x[:, 0] - 1.0 / 3.0) ** -0.3)
        norms.append(solve_resolvent(ResolventProblem(1.0, gm, pm)).solution.linf())
    out.append(_result(s, "bounded under mesh refinement", 2.0 * norms[0] - max(norms),
                       "sup norms " + ", ".join(f"{v:.6g}" for v in norms)))
    return out


def _bundled(problem_id, **overrides):
    cfg = parse_config({"problem": problem_id, **overrides})
    return Problem(cfg), cfg


def suite_rothe(rng, expect_fail=False):
    s = "rothe"
    out = []
    for pid in ("heat-benchmark", "variable-p-source", "reaction-h1", "reaction-h2"):
        pb, cfg = _bundled(pid)
        r = run(pb.initial, TimeGrid(cfg["T"], cfg["N"]), pb.exponent, source=pb.source, reaction=pb.reaction)
        rep = energy_inequality_check(r)
        out.append(_result(s, f"energy inequality [{pid}]", rep.margin + rep.slack))
        if r.barriers:
            c = containment_check(r, r.barriers)
            out.append(_result(s, f"barrier containment [{pid}]", 1e-6 - c.worst_violation))
    pb, cfg = _bundled("heat-benchmark")
    M = mass_matrix(pb.mesh)
    incs, gaps = [], []
    for N in (8, 16, 32):
        r = run(pb.initial, TimeGrid(cfg["T"], N), pb.exponent)
        inc = max(float(np.sqrt(d @ (M @ d))) for d in
                  (r.iterates[n].values - r.iterates[n - 1].values for n in range(1, N + 1)))
        gap = 0.0
        for t in np.linspace(0.0, cfg["T"], 4 * N + 1):
            a, b = interpolants(r, float(t))
            d = a.values - b.values
            gap = max(gap, float(np.sqrt(d @ (M @ d))))
        incs.append(inc)
        gaps.append(inc - gap)
    out.append(_result(s, "interpolant gap bound", min(gaps)))
    out.append(_result(s, "increments shrink at least like dt^(1/2)",
                       min(incs[0] / incs[1], incs[1] / incs[2]) - np.sqrt(2.0)))
    a = run(pb.initial, TimeGrid(cfg["T"], 16), pb.exponent)
    b = run(pb.initial, TimeGrid(cfg["T"], 16), pb.exponent)
    same = all(np.array_equal(x.values, y.values) for x, y in zip(a.iterates, b.iterates))
    out.append(PropertyResult(s, "bitwise reproducible runs", same, 0.0 if same else -1.0))
    out.append(_result(s, "L-infinity stability without reaction",
                       a.iterates[0].linf() - max(u.linf() for u in a.iterates) + 1e-12))
    mesh = interval_mesh(16)
    grid = TimeGrid(1.0, 8)
    h = lambda t, x: np.sin(3.0 * t) * (1.0 + x[:, 0])  # noqa: E731
    hs = average_source(h, grid, mesh)
    disc = sum(grid.dt * float(v.values @ (mass_matrix(mesh) @ v.values)) for v in hs)
    tt = np.linspace(0.0, 1.0, 4001)
    cont = trapezoid([float(h(t, mesh.vertices) @ (mass_matrix(mesh) @ h(t, mesh.vertices))) for t in tt], tt)
    out.append(_result(s, "source averaging is L2 stable", np.sqrt(cont) + 1e-6 - np.sqrt(disc)))
    return out


def suite_stabilization(rng, expect_fail=False):
    s = "stabilization"
    out = []
    pb, cfg = _bundled("stabilize-monotone")
    rep = stabilize(pb.initial, pb.reaction, pb.exponent, cfg["T"], cfg["N"])
    out.append(_result(s, "no expansion toward the steady state", -rep.monotonicity_violations))
    out.append(_result(s, "sandwich ordering", min(rep.sandwich_series.min() + 1e-7, -rep.sandwich.monotonicity_violations)))
    mesh = interval_mesh(32)
    p = ExponentField.from_function(mesh, lambda x: 2.0 + 0.5 * np.sin(np.pi * x[:, 0]))
    st = solve_stationary(polynomial_reaction([1.0, -1.0]), p).solution
    out.append(_result(s, "symmetric steady state", 1e-9 - np.max(np.abs(st.values - st.values[::-1]))))
    final = np.max(np.abs(rep.run.final.values - rep.steady_state.values))
    out.append(_result(s, "long-time limit agrees with steady state", max(1e-4, 10 * cfg.tolerance) - final))
    sw = sandwich_run(polynomial_reaction([1.0, -1.0]), 4.0, ExponentField.constant(mesh, 2.0), 5.0, 100)
    out.append(_result(s, "sandwich closes", 1e-3 - sw.gap_series[-1]))
    return out


SUITES = {
    "norms": suite_norms,
    "simon": suite_simon,
    "assembly": suite_assembly,
    "resolvent": suite_resolvent,
    "rothe": suite_rothe,
    "stabilization": suite_stabilization,
}


def run_verify(selector: str = "all", seed: int = 0, expect_fail: bool = False) -> dict:
    """Run the selected suites; returns the verify.json payload."""
    if selector != "all" and selector not in SUITES:
        raise KeyError(selector)
    names = list(SUITES) if selector == "all" else [selector]
    results, timing = [], {}
    for name in names:
        rng = np.random.default_rng([seed, list(SUITES).index(name)])
        t0 = time.perf_counter()
        results.extend(SUITES[name](rng, expect_fail))
        timing[name] = time.perf_counter() - t0
    return {
        "selector": selector,
        "seed": seed,
        "expect_fail": expect_fail,
        "passed": all(r.passed for r in results),
        "properties": [asdict(r) for r in results],
        "wall_times": timing,
    }
