import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rothe_px.barrier import (
    barriers_for,
    certified_range,
    containment_check,
    growth_function,
    integrate_barrier,
)
from rothe_px.errors import ConfigError, DomainError
from rothe_px.exponent import ExponentField
from rothe_px.mesh import MeshFunction, interval_mesh
from rothe_px.reaction import polynomial_reaction
from rothe_px.rothe import TimeGrid, run


def test_zero_growth_is_constant():
    traj = integrate_barrier(lambda v: 0.0, 1.3, 1.0, 0.1)
    assert np.all(traj.values == 1.3) and not traj.blew_up


def test_exponential_barrier():
    traj = integrate_barrier(lambda v: v, 1.0, 1.0, 1e-3)
    assert traj.times[-1] == 1.0
    assert abs(traj.values[-1] - np.e) <= 1e-8


def test_quadratic_blowup_time():
    traj = integrate_barrier(lambda v: v * v, 1.0, 2.0, 1e-4)
    assert traj.blew_up and 0.99 < traj.t_max_estimate < 1.01
    assert not traj.failed and traj.times[-1] < traj.t_max_estimate


def test_lower_barrier_starts_negative():
    traj = integrate_barrier(lambda v: min(v, 0.0), 2.0, 1.0, 1e-3, kind="H2-lower")
    assert traj.values[0] == -2.0
    assert traj.values[-1] == pytest.approx(-2.0 * np.e, rel=1e-8)


def test_sample_times_are_hit_exactly():
    samples = np.array([0.0, 0.3, 0.35, 1.0])
    traj = integrate_barrier(lambda v: 1.0, 0.0, 1.0, 0.1, sample_times=samples)
    assert np.array_equal(traj.times, samples)
    assert np.allclose(traj.values, samples, atol=1e-14)


def test_invalid_arguments():
    with pytest.raises(DomainError):
        integrate_barrier(lambda v: v, 1.0, 1.0, 0.0)
    with pytest.raises(DomainError):
        integrate_barrier(lambda v: v, 1.0, 1.0, 0.1, kind="H3")
    with pytest.raises(DomainError):
        integrate_barrier(lambda v: v, -1.0, 1.0, 0.1)


@settings(max_examples=40, deadline=None)
@given(c0=st.floats(0.0, 2.0), c1=st.floats(0.0, 2.0), kappa=st.floats(0.0, 3.0))
def test_monotone_and_step_halving(c0, c1, kappa):
    L = lambda v: c0 + c1 * v  # noqa: E731
    coarse = integrate_barrier(L, kappa, 1.0, 0.02)
    fine = integrate_barrier(L, kappa, 1.0, 0.01)
    assert np.all(np.diff(coarse.values) >= 0.0)
    # v(1) for v' = c0 + c1 v, written without the c1 -> 0 cancellation
    exact = kappa * np.exp(c1) + c0 * (np.expm1(c1) / c1 if c1 > 0 else 1.0)
    e_coarse = abs(coarse.values[-1] - exact)
    e_fine = abs(fine.values[-1] - exact)
    assert e_fine <= e_coarse + 1e-12 * max(1.0, exact)
    assert e_coarse <= 1e-6 * max(1.0, exact)


def test_growth_ids():
    assert growth_function("zero")(5.0) == 0.0
    assert growth_function("affine")(2.0) == 3.0
    assert growth_function("poly:1,0,2")(3.0) == 19.0
    with pytest.raises(ConfigError):
        growth_function("poly:a,b")
    with pytest.raises(ConfigError):
        growth_function("exp")


def _sine(mesh, amp=1.0):
    return MeshFunction.interpolate(mesh, lambda x: amp * np.sin(np.pi * x[:, 0]))


def test_containment_zero_reaction():
    mesh = interval_mesh(32)
    p = ExponentField.from_function(mesh, lambda x: 1.8 + 0.4 * x[:, 0])
    r = run(_sine(mesh), TimeGrid(0.5, 20), p, reaction=polynomial_reaction([0.0]))
    assert r.completed and r.certificate.startswith("H1")
    rep = containment_check(r, r.barriers)
    assert rep.ok and rep.steps_checked == 21
    assert all(u.linf() <= 1.0 + 1e-12 for u in r.iterates)


def test_containment_affine_barrier():
    mesh = interval_mesh(32)
    p = ExponentField.from_function(mesh, lambda x: 1.8 + 0.4 * x[:, 0])
    f = polynomial_reaction([1.0], bounds={"hypothesis": "H1", "L0": [1.0]})
    grid = TimeGrid(1.0, 20)
    r = run(_sine(mesh), grid, p, reaction=f)
    b = r.barriers["H1-two-sided"]
    assert np.allclose(b.values, 1.0 + grid.times, atol=1e-12)
    assert containment_check(r, r.barriers).ok
    for t, u in zip(grid.times, r.iterates):
        assert u.linf() <= 1.0 + t + 1e-10


def test_containment_exponential_barrier():
    mesh = interval_mesh(32)
    p = ExponentField.constant(mesh, 2.0)
    f = polynomial_reaction([0.0, 1.0])
    grid = TimeGrid(1.0, 40)
    r = run(_sine(mesh), grid, p, reaction=f)
    assert r.certificate.startswith("H2") and containment_check(r, r.barriers).ok
    for t, u in zip(grid.times, r.iterates):
        assert u.linf() <= np.exp(t) + 1e-8


def test_containment_detects_violation():
    mesh = interval_mesh(16)
    p = ExponentField.constant(mesh, 2.0)
    r = run(_sine(mesh), TimeGrid(0.2, 4), p, reaction=polynomial_reaction([0.0]))
    tight = barriers_for(None, 0.5, r.grid.times)
    rep = containment_check(r, tight)
    assert not rep.ok and rep.worst_step == 0


def test_no_hypothesis_means_no_certificate():
    mesh = interval_mesh(8)
    p = ExponentField.constant(mesh, 2.0)
    f = polynomial_reaction([0.0, 0.0, -1.0])  # -u^2: no declared bound
    assert barriers_for(f, 1.0, [0.0, 0.5]) == {}
    r = run(_sine(mesh), TimeGrid(0.5, 5), p, reaction=f)
    assert r.certificate == "no containment certificate"
    with pytest.raises(DomainError):
        containment_check(r, r.barriers)


def test_certified_range():
    f = polynomial_reaction([0.0, 1.0])
    b = barriers_for(f, 2.0, np.linspace(0, 1, 11))
    lo, hi = certified_range(b)
    # the lower barrier of f = u runs down as -kappa e^t
    assert lo == pytest.approx(-2.0 * np.e, rel=1e-6)
    assert hi == pytest.approx(2.0 * np.e, rel=1e-6)
