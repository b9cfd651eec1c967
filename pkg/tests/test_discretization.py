import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rothe_px.assembly import (
    PLaplaceForm,
    assemble_dirichlet_energy,
    assemble_mass_terms,
    discrete_norms,
    mass_matrix,
    stiffness_matrix,
)
from rothe_px.errors import DomainError
from rothe_px.exponent import ExponentField
from rothe_px.mesh import MeshFunction, interval_mesh, mesh_from_config, square_mesh

from oracles import dense_stiffness_1d, five_point_stiffness, midpoint_mass_2d


def test_interval_mesh_invariants():
    mesh = interval_mesh(8)
    assert mesh.dimension == 1 and mesh.num_vertices == 9
    assert np.all(mesh.volumes > 0) and mesh.volumes.sum() == pytest.approx(1.0)
    assert list(mesh.boundary_vertices) == [0, 8]


def test_square_mesh_invariants():
    mesh = square_mesh(5)
    assert mesh.num_elements == 50
    assert np.all(mesh.volumes > 0) and mesh.volumes.sum() == pytest.approx(1.0, rel=1e-14)
    x = mesh.vertices
    on_edge = (x[:, 0] == 0) | (x[:, 0] == 1) | (x[:, 1] == 0) | (x[:, 1] == 1)
    assert set(mesh.boundary_vertices) == set(np.nonzero(on_edge)[0])
    # conforming: every interior edge is shared by exactly two triangles
    edges = {}
    for tri in mesh.elements:
        for a, b in ((0, 1), (1, 2), (2, 0)):
            key = tuple(sorted((tri[a], tri[b])))
            edges[key] = edges.get(key, 0) + 1
    assert set(edges.values()) <= {1, 2}
    boundary_edges = [e for e, c in edges.items() if c == 1]
    assert len(boundary_edges) == 4 * 5


def test_mesh_from_config():
    assert mesh_from_config({"dimension": 1, "cells": 3}).num_vertices == 4
    assert mesh_from_config({"dimension": 2, "cells_per_side": 3}).num_vertices == 16
    with pytest.raises(DomainError):
        mesh_from_config({"dimension": 3})


def test_mesh_function_masks():
    mesh = interval_mesh(4)
    u = MeshFunction.constant(mesh, 2.0)
    assert not u.is_in_x()
    v = u.with_dirichlet()
    assert v.is_in_x() and v.values[0] == 0.0 and v.values[2] == 2.0
    with pytest.raises(DomainError):
        MeshFunction(mesh, np.zeros(3))
    with pytest.raises(ValueError):
        v.values[1] = 1.0


def test_zero_energy_and_residual():
    mesh = square_mesh(3)
    asm = assemble_dirichlet_energy(MeshFunction.zeros(mesh), ExponentField.constant(mesh, 3.0))
    assert asm.energy == 0.0 and np.all(asm.residual == 0.0)


def test_p2_jacobian_is_classical_stiffness_1d():
    mesh = interval_mesh(12)
    u = MeshFunction.interpolate(mesh, lambda x: np.sin(3 * x[:, 0])).with_dirichlet()
    asm = assemble_dirichlet_energy(u, ExponentField.constant(mesh, 2.0))
    K = dense_stiffness_1d(12)
    assert np.array_equal(asm.jacobian.toarray() == 0, K == 0)
    assert np.max(np.abs(asm.jacobian.toarray() - K)) <= 1e-12
    assert np.max(np.abs(asm.residual - K @ u.values[mesh.free])) <= 1e-12


def test_p2_jacobian_is_five_point_stencil_2d():
    n = 6
    mesh = square_mesh(n)
    asm = assemble_dirichlet_energy(MeshFunction.zeros(mesh), ExponentField.constant(mesh, 2.0))
    assert np.max(np.abs(asm.jacobian.toarray() - five_point_stiffness(n))) <= 1e-12


def test_full_stiffness_and_mass_reproduce_constants():
    mesh = square_mesh(4)
    one = np.ones(mesh.num_vertices)
    assert np.max(np.abs(stiffness_matrix(mesh) @ one)) <= 1e-12
    assert one @ (mass_matrix(mesh) @ one) == pytest.approx(1.0, rel=1e-14)


def test_residual_matches_finite_differences_p_2_plus_x():
    mesh = interval_mesh(8)
    p = ExponentField.from_function(mesh, lambda x: 2 + x[:, 0])
    rng = np.random.default_rng(7)
    u = MeshFunction(mesh, rng.standard_normal(9)).with_dirichlet()
    form = PLaplaceForm(p)
    res = form.gradient(u.values)[mesh.free]
    h = 1e-6
    for i, node in enumerate(mesh.free):
        e = np.zeros(9)
        e[node] = h
        fd = (form.energy(u.values + e) - form.energy(u.values - e)) / (2 * h)
        assert fd == pytest.approx(res[i], rel=1e-6, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), two_d=st.booleans(), a=st.floats(1.4, 3.5), b=st.floats(-0.4, 0.4))
def test_gradient_and_jacobian_consistency(seed, two_d, a, b):
    rng = np.random.default_rng(seed)
    mesh = square_mesh(3) if two_d else interval_mesh(int(rng.integers(3, 20)))
    p = ExponentField.from_function(mesh, lambda x: a + b * np.sin(3 * x[:, 0]))
    u = MeshFunction(mesh, rng.standard_normal(mesh.num_vertices)).with_dirichlet()
    d = np.zeros(mesh.num_vertices)
    d[mesh.free] = rng.standard_normal(mesh.free.size)
    form = PLaplaceForm(p)
    h = 1e-6
    fd = (form.energy(u.values + h * d) - form.energy(u.values - h * d)) / (2 * h)
    an = form.gradient(u.values)[mesh.free] @ d[mesh.free]
    assert abs(fd - an) <= 1e-5 * max(abs(fd), 1e-8)
    eps = 1e-2
    asm = assemble_dirichlet_energy(u, p, eps)
    jd = asm.jacobian @ d[mesh.free]
    dres = (form.gradient(u.values + h * d, eps) - form.gradient(u.values - h * d, eps))[mesh.free] / (2 * h)
    assert np.linalg.norm(dres - jd) <= 1e-5 * max(np.linalg.norm(jd), 1e-8)
    J = asm.jacobian.toarray()
    assert np.allclose(J, J.T, atol=1e-12 * max(1.0, np.abs(J).max()))
    assert np.linalg.eigvalsh(J).min() >= -1e-10 * max(1.0, np.abs(J).max())
    v = MeshFunction(mesh, rng.standard_normal(mesh.num_vertices)).with_dirichlet()
    diff = (form.gradient(u.values) - form.gradient(v.values)) @ (u.values - v.values)
    assert diff >= -1e-12


def test_singular_jacobian_flag():
    mesh = interval_mesh(4)
    p = ExponentField.constant(mesh, 1.5)
    u = MeshFunction.zeros(mesh)
    asm = assemble_dirichlet_energy(u, p, eps=0.0)
    assert asm.singular and asm.jacobian is None and np.all(asm.residual == 0.0)
    assert not assemble_dirichlet_energy(u, p, eps=1e-8).singular
    assert not assemble_dirichlet_energy(u, ExponentField.constant(mesh, 2.5), eps=0.0).singular
    with pytest.raises(ValueError):
        assemble_dirichlet_energy(u, p, eps=-1.0)


def test_mass_terms_examples():
    mesh = interval_mesh(5)
    one = MeshFunction.constant(mesh, 1.0)
    assert assemble_mass_terms(one, one) == pytest.approx((1.0, 1.0), rel=1e-14)
    assert assemble_mass_terms(one, -one)[0] == pytest.approx(-1.0, rel=1e-14)


def test_mass_terms_match_quadrature_oracle_2d():
    mesh = square_mesh(4)
    rng = np.random.default_rng(9)
    u = MeshFunction(mesh, rng.standard_normal(mesh.num_vertices))
    g = MeshFunction(mesh, rng.standard_normal(mesh.num_vertices))
    ug, uu = assemble_mass_terms(u, g)
    assert ug == pytest.approx(midpoint_mass_2d(mesh, u.values, g.values), abs=1e-12)
    assert uu == pytest.approx(midpoint_mass_2d(mesh, u.values, u.values), abs=1e-12)


def test_discrete_norms_examples():
    mesh = interval_mesh(10)
    p2 = ExponentField.constant(mesh, 2.0)
    assert discrete_norms(MeshFunction.zeros(mesh), p2) == (0.0, 0.0, 0.0)
    x = MeshFunction.interpolate(mesh, lambda x: x[:, 0])
    assert discrete_norms(x, p2)[2] == pytest.approx(1.0, rel=1e-14)
    rng = np.random.default_rng(4)
    u = MeshFunction(mesh, rng.standard_normal(11))
    assert discrete_norms(u, p2)[0] == max(abs(v) for v in u.values)


def test_energy_difference_is_accurate_for_tiny_steps():
    mesh = interval_mesh(16)
    p = ExponentField.from_function(mesh, lambda x: 1.7 + 0.6 * x[:, 0])
    u = MeshFunction.interpolate(mesh, lambda x: np.sin(np.pi * x[:, 0])).values
    form = PLaplaceForm(p)
    d = np.zeros_like(u)
    d[5] = 1e-13
    g = form.gradient(u)
    # first-order model is exact to O(d^2) ~ 1e-26
    assert form.energy_difference(u, u + d) == pytest.approx(g @ d, rel=1e-6)
    v = np.array(u)
    assert form.energy_difference(v, u + 0.3) == pytest.approx(form.energy(u + 0.3) - form.energy(v), rel=1e-12)
