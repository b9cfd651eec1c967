"""Per-element integrals of nonsmooth functions of P1 data.

In 1D the integrals of ``|u|^r`` are evaluated in closed form, which is
exact even when ``u`` changes sign inside an element.  In 2D a collapsed
(Duffy) tensor Gauss rule of fixed high order is used.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from .mesh import Mesh

_GAUSS_1D = 8
_DUFFY_ORDER = 14


@lru_cache(maxsize=None)
def gauss_unit(n: int):
    """Gauss-Legendre nodes and weights mapped to [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def triangle_rule(n: int = _DUFFY_ORDER):
    """Barycentric points (m, 3) and weights (m,) on the reference triangle, weights summing to 1."""
    s, ws = gauss_unit(n)
    S, T = np.meshgrid(s, s, indexing="ij")
    W = np.outer(ws, ws) * (1.0 - S)
    xi = S.ravel()
    eta = (T * (1.0 - S)).ravel()
    bary = np.column_stack([1.0 - xi - eta, xi, eta])
    w = 2.0 * W.ravel()  # reference area 1/2 -> weights sum to 1
    return bary, w


def element_samples(mesh: Mesh, values: np.ndarray):
    """Values of a P1 function at the element quadrature points.

    Returns ``(samples, weights)`` with shapes (ne, m) and (m,) where the
    weights sum to one on each element (multiply by the element measure).
    """
    local = values[mesh.elements]
    if mesh.dimension == 1:
        s, w = gauss_unit(_GAUSS_1D)
        bary = np.column_stack([1.0 - s, s])
    else:
        bary, w = triangle_rule()
    return local @ bary.T, w


def power_integrals(mesh: Mesh, values: np.ndarray, r: np.ndarray) -> np.ndarray:
    """``int_e |u|^{r_e} dx`` for every element ``e``."""
    r = np.broadcast_to(np.asarray(r, dtype=float), (mesh.num_elements,))
    if mesh.dimension == 1:
        return mesh.volumes * _interval_mean_power(values[mesh.elements], r)
    samples, w = element_samples(mesh, values)
    return mesh.volumes * (np.abs(samples) ** r[:, None] @ w)


def _interval_mean_power(local: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Mean of |a + (b - a) s|^r over s in [0, 1], closed form with a smooth-case fallback."""
    a, b = local[:, 0], local[:, 1]
    diff = b - a
    scale = np.maximum(np.abs(a), np.abs(b))
    out = np.zeros_like(a)
    nearly_flat = (np.abs(diff) <= 1e-4 * scale) & (a * b > 0.0)
    exact = ~nearly_flat & (scale > 0.0)
    if np.any(exact):
        aa, bb, rr = a[exact], b[exact], r[exact]
        g_b = np.sign(bb) * np.abs(bb) ** (rr + 1.0)
        g_a = np.sign(aa) * np.abs(aa) ** (rr + 1.0)
        out[exact] = (g_b - g_a) / ((rr + 1.0) * (bb - aa))
    if np.any(nearly_flat):
        s, w = gauss_unit(_GAUSS_1D)
        vals = a[nearly_flat, None] + diff[nearly_flat, None] * s[None, :]
        out[nearly_flat] = np.abs(vals) ** r[nearly_flat, None] @ w
    return out


def abs_product_integrals(mesh: Mesh, f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """``int_e |f g| dx`` per element.

    In 1D each element is split at the sign changes of ``f`` and ``g`` and a
    Gauss rule exact for quadratics is applied on every piece.
    """
    if mesh.dimension != 1:
        fs, w = element_samples(mesh, f)
        gs, _ = element_samples(mesh, g)
        return mesh.volumes * (np.abs(fs * gs) @ w)
    fa, fb = f[mesh.elements].T
    ga, gb = g[mesh.elements].T
    breaks = [np.zeros_like(fa), np.ones_like(fa)]
    for a, b in ((fa, fb), (ga, gb)):
        with np.errstate(divide="ignore", invalid="ignore"):
            root = np.where(a * b < 0.0, a / (a - b), 0.0)
        breaks.append(root)
    breaks = np.sort(np.column_stack(breaks), axis=1)
    s, w = gauss_unit(3)
    total = np.zeros_like(fa)
    for k in range(breaks.shape[1] - 1):
        lo, hi = breaks[:, k], breaks[:, k + 1]
        length = hi - lo
        pts = lo[:, None] + length[:, None] * s[None, :]
        fv = fa[:, None] + (fb - fa)[:, None] * pts
        gv = ga[:, None] + (gb - ga)[:, None] * pts
        total += length * (np.abs(fv * gv) @ w)
    return mesh.volumes * total
