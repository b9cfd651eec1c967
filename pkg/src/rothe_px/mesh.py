"""Simplicial P1 meshes on the unit interval and the unit square.

Only the two built-in uniform generators are supported.  A mesh is
immutable once built; geometric quantities (element measures, barycentric
gradients, centroids, lumped vertex weights) are computed lazily and cached.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DomainError

__all__ = ["Mesh", "MeshFunction", "interval_mesh", "square_mesh", "mesh_from_config"]


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming simplicial mesh.

    Parameters
    ----------
    vertices : (nv, d) float array
    elements : (ne, d+1) int array of vertex indices
    boundary : (nv,) bool array, True on the Dirichlet boundary
    """

    vertices: np.ndarray
    elements: np.ndarray
    boundary: np.ndarray
    description: dict

    def __post_init__(self):
        for arr in (self.vertices, self.elements, self.boundary):
            arr.setflags(write=False)
        if np.any(self.volumes <= 0.0):
            raise DomainError("mesh has an element with nonpositive measure")

    @property
    def dimension(self) -> int:
        return self.vertices.shape[1]

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_elements(self) -> int:
        return self.elements.shape[0]

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        return np.flatnonzero(self.boundary)

    @cached_property
    def free(self) -> np.ndarray:
        """Indices of the vertices carrying unknowns."""
        return np.flatnonzero(~self.boundary)

    @cached_property
    def _jacobians(self) -> np.ndarray:
        v = self.vertices[self.elements]  # (ne, d+1, d)
        return np.transpose(v[:, 1:, :] - v[:, :1, :], (0, 2, 1))  # columns are edge vectors

    @cached_property
    def volumes(self) -> np.ndarray:
        d = self.dimension
        det = np.linalg.det(self._jacobians)
        return np.abs(det) / (1.0 if d == 1 else 2.0)

    @cached_property
    def grad_basis(self) -> np.ndarray:
        """(ne, d, d+1) gradients of the element's barycentric coordinates."""
        d = self.dimension
        inv = np.linalg.inv(self._jacobians)  # (ne, d, d): rows are grads of lambda_1..lambda_d
        out = np.empty((self.num_elements, d, d + 1))
        out[:, :, 1:] = np.transpose(inv, (0, 2, 1))
        out[:, :, 0] = -out[:, :, 1:].sum(axis=2)
        out.setflags(write=False)
        return out

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.elements].mean(axis=1)

    @cached_property
    def lumped_mass(self) -> np.ndarray:
        """Vertex quadrature weights: each vertex gets |e|/(d+1) from every element it touches."""
        w = np.zeros(self.num_vertices)
        share = self.volumes / (self.dimension + 1)
        for k in range(self.dimension + 1):
            w += np.bincount(self.elements[:, k], weights=share, minlength=self.num_vertices)
        w.setflags(write=False)
        return w

    @cached_property
    def diameter(self) -> float:
        lo, hi = self.vertices.min(axis=0), self.vertices.max(axis=0)
        return float(np.linalg.norm(hi - lo))

    @cached_property
    def h(self) -> float:
        """Largest element edge length."""
        v = self.vertices[self.elements]
        n = self.dimension + 1
        longest = 0.0
        for a in range(n):
            for b in range(a + 1, n):
                longest = max(longest, float(np.max(np.linalg.norm(v[:, a] - v[:, b], axis=1))))
        return longest

    @property
    def area(self) -> float:
        return float(self.volumes.sum())


def interval_mesh(cells: int) -> Mesh:
    """Uniform mesh of (0, 1) with ``cells`` intervals."""
    if cells < 1:
        raise DomainError("cells must be >= 1")
    x = np.linspace(0.0, 1.0, cells + 1)[:, None]
    elements = np.column_stack([np.arange(cells), np.arange(1, cells + 1)])
    boundary = np.zeros(cells + 1, dtype=bool)
    boundary[[0, -1]] = True
    return Mesh(x, elements, boundary, {"dimension": 1, "cells": cells})


def square_mesh(cells_per_side: int) -> Mesh:
    """Uniform right-triangle mesh of the unit square.

    Each square cell is split along the diagonal running from its lower-left
    to its upper-right corner.  Vertices are numbered row by row, x fastest.
    """
    n = cells_per_side
    if n < 1:
        raise DomainError("cells_per_side must be >= 1")
    s = np.linspace(0.0, 1.0, n + 1)
    xx, yy = np.meshgrid(s, s)
    vertices = np.column_stack([xx.ravel(), yy.ravel()])
    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
    v00 = idx[:-1, :-1].ravel()
    v10 = idx[:-1, 1:].ravel()
    v01 = idx[1:, :-1].ravel()
    v11 = idx[1:, 1:].ravel()
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    elements = np.empty((2 * n * n, 3), dtype=int)
    elements[0::2] = lower
    elements[1::2] = upper
    boundary = (
        np.isclose(vertices[:, 0], 0.0)
        | np.isclose(vertices[:, 0], 1.0)
        | np.isclose(vertices[:, 1], 0.0)
        | np.isclose(vertices[:, 1], 1.0)
    )
    return Mesh(vertices, elements, boundary, {"dimension": 2, "cells_per_side": n})


def mesh_from_config(desc: dict) -> Mesh:
    dim = desc.get("dimension")
    if dim == 1:
        return interval_mesh(int(desc["cells"]))
    if dim == 2:
        return square_mesh(int(desc["cells_per_side"]))
    raise DomainError(f"unsupported mesh dimension {dim!r}")


@dataclass(frozen=True, eq=False)
class MeshFunction:
    """Nodal coefficient vector of a continuous P1 function."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.mesh.num_vertices,):
            raise DomainError(
                f"expected {self.mesh.num_vertices} nodal values, got shape {values.shape}"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, mesh: Mesh) -> "MeshFunction":
        return cls(mesh, np.zeros(mesh.num_vertices))

    @classmethod
    def constant(cls, mesh: Mesh, c: float) -> "MeshFunction":
        return cls(mesh, np.full(mesh.num_vertices, float(c)))

    @classmethod
    def interpolate(cls, mesh: Mesh, func) -> "MeshFunction":
        """Nodal interpolant of ``func(x)`` where ``x`` is the (nv, d) vertex array."""
        return cls(mesh, np.broadcast_to(func(mesh.vertices), (mesh.num_vertices,)))

    @property
    def dirichlet_mask(self) -> np.ndarray:
        return self.mesh.boundary

    def with_dirichlet(self) -> "MeshFunction":
        """Copy with boundary values pinned to zero (an element of the discrete X)."""
        v = self.values.copy()
        v[self.mesh.boundary] = 0.0
        return MeshFunction(self.mesh, v)

    def is_in_x(self) -> bool:
        return bool(np.all(self.values[self.mesh.boundary] == 0.0))

    def __neg__(self):
        return MeshFunction(self.mesh, -self.values)

    def __mul__(self, c: float):
        return MeshFunction(self.mesh, self.values * c)

    __rmul__ = __mul__

    def __add__(self, other: "MeshFunction"):
        same_mesh(self, other)
        return MeshFunction(self.mesh, self.values + other.values)

    def __sub__(self, other: "MeshFunction"):
        same_mesh(self, other)
        return MeshFunction(self.mesh, self.values - other.values)

    def linf(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0


def same_mesh(*items) -> Mesh:
    """Return the shared mesh of MeshFunction/ExponentField arguments or raise DomainError."""
    mesh = items[0].mesh
    for it in items[1:]:
        if it.mesh is not mesh:
            raise DomainError("arguments live on different meshes")
    return mesh
