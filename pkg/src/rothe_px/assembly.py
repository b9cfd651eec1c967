"""P1 assembly of the variable-exponent Dirichlet energy and the mass terms.

The Dirichlet energy is

    Phi_eps(u) = sum_e |e| (|grad u_e|^2 + eps^2)^{p_e/2} / p_e,

with ``grad u_e`` the elementwise-constant P1 gradient.  Its gradient and
Hessian with respect to the nodal values are assembled exactly.  All
reductions go through ``np.bincount`` / COO summation in element order, so
repeated assemblies are bitwise identical.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .exponent import ExponentField
from .mesh import Mesh, MeshFunction, same_mesh

__all__ = [
    "PLaplaceForm",
    "EnergyAssembly",
    "assemble_dirichlet_energy",
    "assemble_mass_terms",
    "discrete_norms",
    "mass_matrix",
    "stiffness_matrix",
]


@lru_cache(maxsize=32)
def _sparsity(mesh: Mesh):
    """COO row/col indices of all local (a, b) pairs, plus the free-free filter."""
    nl = mesh.dimension + 1
    el = mesh.elements
    rows = np.repeat(el, nl, axis=1).ravel()
    cols = np.tile(el, (1, nl)).ravel()
    index = np.full(mesh.num_vertices, -1)
    index[mesh.free] = np.arange(mesh.free.size)
    keep = (index[rows] >= 0) & (index[cols] >= 0)
    return rows, cols, index[rows[keep]], index[cols[keep]], keep


class PLaplaceForm:
    """Energy, gradient and Hessian of the p(x)-Dirichlet energy on a fixed mesh.

    All methods take and return full nodal vectors (boundary included); use
    ``mesh.free`` to restrict.  Hessians are returned restricted to the free
    vertices.
    """

    def __init__(self, p: ExponentField):
        self.mesh = p.mesh
        self.p = p.element_values
        self._B = self.mesh.grad_basis  # (ne, d, nl)
        self._vol = self.mesh.volumes

    def gradients(self, values: np.ndarray) -> np.ndarray:
        """(ne, d) elementwise-constant gradients."""
        return np.einsum("edk,ek->ed", self._B, values[self.mesh.elements])

    def energy(self, values: np.ndarray, eps: float = 0.0) -> float:
        g = self.gradients(values)
        s = np.einsum("ed,ed->e", g, g) + eps * eps
        return float(np.sum(self._vol * s ** (0.5 * self.p) / self.p))

    def energy_difference(self, values: np.ndarray, new_values: np.ndarray) -> float:
        """``Phi(new) - Phi(old)`` at eps = 0, free of the cancellation in the naive difference.

        The gradient increment is taken from the nodal increment directly so
        tiny steps keep full relative accuracy.
        """
        g0 = self.gradients(values)
        dg = self.gradients(new_values - values)
        s0 = np.einsum("ed,ed->e", g0, g0)
        ds = np.einsum("ed,ed->e", dg, 2.0 * g0 + dg)
        out = np.empty_like(s0)
        pos = s0 > 0.0
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.log1p(ds[pos] / s0[pos])
        out[pos] = s0[pos] ** (0.5 * self.p[pos]) * np.expm1(0.5 * self.p[pos] * ratio)
        s1 = np.einsum("ed,ed->e", dg, dg)
        out[~pos] = s1[~pos] ** (0.5 * self.p[~pos])
        return float(np.sum(self._vol * out / self.p))

    def flux_coefficients(self, values: np.ndarray, eps: float = 0.0):
        """Return ``(g, a)`` with ``a = (|g|^2+eps^2)^{(p-2)/2}``, using 0 |0|^{p-2} = 0 at eps = 0."""
        g = self.gradients(values)
        s = np.einsum("ed,ed->e", g, g) + eps * eps
        with np.errstate(divide="ignore"):
            a = np.where(s > 0.0, s ** (0.5 * self.p - 1.0), 0.0)
        return g, a, s

    def gradient(self, values: np.ndarray, eps: float = 0.0) -> np.ndarray:
        """Full nodal gradient of ``Phi_eps``."""
        g, a, _ = self.flux_coefficients(values, eps)
        flux = (self._vol * a)[:, None] * g  # (ne, d)
        local = np.einsum("ed,edk->ek", flux, self._B)
        nv = self.mesh.num_vertices
        out = np.zeros(nv)
        for k in range(local.shape[1]):
            out += np.bincount(self.mesh.elements[:, k], weights=local[:, k], minlength=nv)
        return out

    def local_hessians(self, values: np.ndarray, eps: float, majorize: bool = False):
        """(ne, nl, nl) element Hessians and a mask of elements where they are singular.

        With ``majorize`` the rank-one term is dropped on elements with
        ``p < 2``; the result ``a B^T B`` then dominates the true Hessian
        there (lagged diffusivity), which gives a much better step when
        ``|s|^{p/2}`` is concave in ``s``.
        """
        g, a, s = self.flux_coefficients(values, eps)
        p = self.p
        singular = (s == 0.0) & (p < 2.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            c = np.where(s > 0.0, (p - 2.0) * s ** (0.5 * p - 2.0), 0.0)
        if majorize:
            c = np.where(p < 2.0, 0.0, c)
        a = np.where(s == 0.0, np.where(p == 2.0, 1.0, 0.0), a)
        B = self._B
        BtB = np.einsum("edk,edl->ekl", B, B)
        Bg = np.einsum("edk,ed->ek", B, g)
        H = self._vol[:, None, None] * (a[:, None, None] * BtB + c[:, None, None] * Bg[:, :, None] * Bg[:, None, :])
        return H, singular

    def hessian(self, values: np.ndarray, eps: float, majorize: bool = False) -> sp.csr_matrix:
        """Free-vertex Hessian of ``Phi_eps`` (sparse, symmetric)."""
        H, _ = self.local_hessians(values, eps, majorize)
        return self._assemble_free(H.ravel())

    def _assemble_free(self, data: np.ndarray) -> sp.csr_matrix:
        _, _, fr, fc, keep = _sparsity(self.mesh)
        n = self.mesh.free.size
        return sp.coo_matrix((data[keep], (fr, fc)), shape=(n, n)).tocsr()


@dataclass
class EnergyAssembly:
    energy: float
    residual: np.ndarray
    jacobian: sp.csr_matrix | None
    singular: bool


def assemble_dirichlet_energy(u: MeshFunction, p: ExponentField, eps: float = 0.0) -> EnergyAssembly:
    """Energy, free-vertex residual and Jacobian of the regularized p(x)-Dirichlet energy.

    With ``eps = 0`` the Jacobian is undefined on zero-gradient elements
    where p < 2; the assembly is then returned with ``singular=True`` and
    ``jacobian=None``.
    """
    if eps < 0.0:
        raise ValueError("eps must be nonnegative")
    mesh = same_mesh(u, p)
    form = PLaplaceForm(p)
    energy = form.energy(u.values, eps)
    residual = form.gradient(u.values, eps)[mesh.free]
    H, singular = form.local_hessians(u.values, eps)
    if eps == 0.0 and np.any(singular):
        return EnergyAssembly(energy, residual, None, True)
    return EnergyAssembly(energy, residual, form._assemble_free(H.ravel()), False)


def _local_mass(d: int) -> np.ndarray:
    n = d + 1
    return (np.ones((n, n)) + np.eye(n)) / ((d + 1) * (d + 2))


@lru_cache(maxsize=32)
def mass_matrix(mesh: Mesh) -> sp.csr_matrix:
    """Exact (consistent) P1 mass matrix over all vertices."""
    rows, cols, *_ = _sparsity(mesh)
    data = (mesh.volumes[:, None, None] * _local_mass(mesh.dimension)[None]).ravel()
    n = mesh.num_vertices
    return sp.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()


@lru_cache(maxsize=32)
def stiffness_matrix(mesh: Mesh) -> sp.csr_matrix:
    """P1 stiffness matrix over all vertices."""
    rows, cols, *_ = _sparsity(mesh)
    B = mesh.grad_basis
    data = (mesh.volumes[:, None, None] * np.einsum("edk,edl->ekl", B, B)).ravel()
    n = mesh.num_vertices
    return sp.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()


def assemble_mass_terms(u: MeshFunction, g: MeshFunction):
    """Exact ``(int u g, int u^2)`` for P1 functions."""
    mesh = same_mesh(u, g)
    M = mass_matrix(mesh)
    return float(u.values @ (M @ g.values)), float(u.values @ (M @ u.values))


def discrete_norms(u: MeshFunction, p: ExponentField):
    """``(max|u|, ||u||_{L^2}, int |grad u|^{p(x)})``."""
    mesh = same_mesh(u, p)
    linf = u.linf()
    l2 = float(np.sqrt(max(u.values @ (mass_matrix(mesh) @ u.values), 0.0)))
    g = PLaplaceForm(p).gradients(u.values)
    modular = float(np.sum(mesh.volumes * np.linalg.norm(g, axis=1) ** p.element_values))
    return linf, l2, modular
