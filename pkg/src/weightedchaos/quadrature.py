"""Quadrature helpers on the truncated weight axis and periodic convolutions.

Weight moments are integrated against a piecewise-linear reconstruction of the
cell averages (centered slopes, second-order one-sided slopes at the two ends)
with 4-point Gauss-Legendre nodes per cell. Plain midpoint sums carry an
O(h^2) boundary error at m = 0 that is visible at the tolerances we test.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

_GX, _GW = np.polynomial.legendre.leggauss(4)


def m_slopes(values: np.ndarray, h: float) -> np.ndarray:
    """Cell slopes along the last axis."""
    v = values
    s = np.empty_like(v)
    s[..., 1:-1] = (v[..., 2:] - v[..., :-2]) / (2 * h)
    s[..., 0] = (-3 * v[..., 0] + 4 * v[..., 1] - v[..., 2]) / (2 * h)
    s[..., -1] = (3 * v[..., -1] - 4 * v[..., -2] + v[..., -3]) / (2 * h)
    return s


def m_moment(values: np.ndarray, m_max: float, q: float, p: int = 1) -> np.ndarray:
    """int_0^m_max m^q * psi^p dm for each x-cell (last axis is m)."""
    G = values.shape[-1]
    h = m_max / G
    mc = (np.arange(G) + 0.5) * h
    s = m_slopes(values, h)
    tot = np.zeros(values.shape[:-1])
    for xi, wi in zip(_GX, _GW):
        m = mc + 0.5 * h * xi
        rec = values + s * (0.5 * h * xi)
        tot = tot + (0.5 * h * wi) * np.sum(m ** q * rec ** p, axis=-1)
    return tot


@lru_cache(maxsize=64)
def _moment_weights(G: int, m_max: float, q: float) -> np.ndarray:
    w = m_moment(np.eye(G), m_max, q)
    w.setflags(write=False)
    return w


def moment_weights(G: int, m_max: float, q: float = 1.0) -> np.ndarray:
    """Weights w with m_moment(psi, m_max, q) == psi @ w for p = 1."""
    return _moment_weights(int(G), float(m_max), float(q))


def circ_conv(stencil: np.ndarray, field: np.ndarray, dim: int) -> np.ndarray:
    """out[k] = sum_l stencil[l] * field[k - l] over the periodic d-grid.

    stencil has shape (G,)*dim + extra, field has shape (G,)*dim. Direct sum
    in a fixed order (deterministic, no BLAS reductions).
    """
    G = field.shape[0]
    extra = stencil.shape[dim:]
    idx = np.arange(G)
    circ = (idx[:, None] - idx[None, :]) % G
    if dim == 1:
        C = stencil[circ]  # C[k, j] = stencil[k - j]
        return np.einsum("kj...,j->k...", C, field, optimize=False)
    out = np.zeros((G, G) + extra)
    for l1 in range(G):
        rolled = np.roll(field, l1, axis=0)
        C2 = stencil[l1][circ]  # (G, G) + extra
        out += np.einsum("kj...,ij->ik...", C2, rolled, optimize=False)
    return out


def circ_conv_fft(stencil: np.ndarray, field: np.ndarray, dim: int) -> np.ndarray:
    axes = tuple(range(dim))
    fs = np.fft.fftn(field, axes=axes)
    if stencil.ndim == dim:
        return np.real(np.fft.ifftn(np.fft.fftn(stencil, axes=axes) * fs, axes=axes))
    fk = np.fft.fftn(stencil, axes=axes)
    fs = fs.reshape(fs.shape + (1,) * (stencil.ndim - dim))
    return np.real(np.fft.ifftn(fk * fs, axes=axes))


def displacement_grid(G: int, dim: int, shift=None) -> np.ndarray:
    """Points l*h + shift for l in [0, G)^dim, shape (G,)*dim + (dim,)."""
    c = np.arange(G) / G
    pts = np.stack(np.meshgrid(*([c] * dim), indexing="ij"), axis=-1)
    if shift is not None:
        pts = pts + np.asarray(shift, dtype=float)
    return pts
