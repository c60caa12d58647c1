"""Donor-cell upwind sweeps shared by the mean-field and Kolmogorov solvers."""
from __future__ import annotations

import numpy as np


class CFLError(RuntimeError):
    pass


def _take(a, axis, sl):
    idx = [slice(None)] * a.ndim
    idx[axis] = sl
    return a[tuple(idx)]


def upwind_periodic(values: np.ndarray, v_face: np.ndarray, lam: float, axis: int) -> np.ndarray:
    """One donor-cell step along a periodic axis.

    v_face[..., i, ...] is the velocity on the face between cell i and i+1
    (broadcastable against values). lam = dt / h.
    """
    vp = np.maximum(v_face, 0.0)
    vm = np.minimum(v_face, 0.0)
    flux = vp * values + vm * np.roll(values, -1, axis=axis)
    return values - lam * (flux - np.roll(flux, 1, axis=axis))


def upwind_walls(values: np.ndarray, v_face: np.ndarray, lam: float, axis: int) -> np.ndarray:
    """One donor-cell step along a bounded axis with zero-flux walls.

    v_face has G+1 entries along `axis` (faces 0..G); the two wall faces are
    ignored.
    """
    G = values.shape[axis]
    vin = _take(v_face, axis, slice(1, G))  # interior faces 1..G-1
    left = _take(values, axis, slice(0, G - 1))
    right = _take(values, axis, slice(1, G))
    flux_int = np.maximum(vin, 0.0) * left + np.minimum(vin, 0.0) * right
    zshape = list(flux_int.shape)
    zshape[axis] = 1
    z = np.zeros(zshape)
    flux = np.concatenate([z, flux_int, z], axis=axis)
    return values - lam * (_take(flux, axis, slice(1, G + 1)) - _take(flux, axis, slice(0, G)))


def cfl_number(v_face: np.ndarray, dt: float, h: float) -> float:
    vmax = float(np.max(np.abs(v_face))) if np.size(v_face) else 0.0
    return dt * vmax / h


def max_stable_dt(pairs, cfl: float) -> float:
    """Largest dt with dt*|v|/h <= cfl for every (v_face, h) pair."""
    dt = np.inf
    for v, h in pairs:
        vmax = float(np.max(np.abs(v))) if np.size(v) else 0.0
        if vmax > 0:
            dt = min(dt, cfl * h / vmax)
    return dt
