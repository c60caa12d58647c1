"""Weighted particle system

    dx_i/dt = (1/N) sum_j m_j a(x_j - x_i),
    dm_i/dt = (1/N) sum_j S(x_i, m_i, x_j, m_j),

with the j = i terms kept in both sums.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .densities import ModalDensity, ProductDensity
from .kernels import Kernels, wrap, wrap_centered

DEFAULT_TILE = 256


class NumericalAbort(RuntimeError):
    def __init__(self, msg: str, step: int):
        super().__init__(msg)
        self.step = step


@dataclass
class ParticleEnsemble:
    positions: np.ndarray   # (N, d) in [0, 1)^d
    weights: np.ndarray     # (N,)
    time: float = 0.0

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        if self.positions.ndim == 1:
            self.positions = self.positions[:, None]
        self.weights = np.asarray(self.weights, dtype=float)
        if self.positions.shape[0] != self.weights.shape[0]:
            raise ValueError("positions and weights disagree on N")
        if np.any(self.weights < 0):
            raise ValueError("weights must be nonnegative")

    @property
    def N(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def copy(self) -> "ParticleEnsemble":
        return ParticleEnsemble(self.positions.copy(), self.weights.copy(), self.time)

    def permuted(self, perm) -> "ParticleEnsemble":
        return ParticleEnsemble(self.positions[perm], self.weights[perm], self.time)


@dataclass
class WeightedEmpirical:
    positions: np.ndarray
    masses: np.ndarray
    total_mass: float

    @property
    def atoms(self) -> list:
        return list(zip(map(tuple, self.positions), self.masses))


def weighted_empirical(ens: ParticleEnsemble) -> WeightedEmpirical:
    masses = ens.weights / ens.N
    return WeightedEmpirical(ens.positions.copy(), masses, math.fsum(masses))


def empirical(ens: ParticleEnsemble) -> WeightedEmpirical:
    """Unweighted empirical measure (mass 1/N per atom)."""
    masses = np.full(ens.N, 1.0 / ens.N)
    return WeightedEmpirical(ens.positions.copy(), masses, 1.0)


# ---------------------------------------------------------------------------
# right-hand side


def _displacements(kernels: Kernels, xi: np.ndarray, xj: np.ndarray) -> np.ndarray:
    z = xj[None, :, :] - xi[:, None, :]
    if kernels.interaction.family == "tabulated":
        return wrap_centered(z)
    return z


def _drift_rows(ens: ParticleEnsemble, kernels: Kernels, rows: slice):
    x, m = ens.positions, ens.weights
    a = kernels.interaction
    S = kernels.influence
    N = ens.N
    xi, mi = x[rows], m[rows]
    if a.is_zero:
        dx = np.zeros(xi.shape)
    elif a.family == "constant":
        dx = np.broadcast_to(np.asarray(a.params) * (math.fsum(m) / N), xi.shape).copy()
    else:
        av = a.evaluate(_displacements(kernels, xi, x))  # (r, N, d)
        dx = np.einsum("rjd,j->rd", av, m, optimize=False) / N
    if S.is_zero:
        dm = np.zeros(mi.shape)
    else:
        Sv, _, _ = S.evaluate(xi[:, None, :], mi[:, None], x[None, :, :], m[None, :])
        dm = Sv.sum(axis=1) / N
    return dx, dm


def drift(ens: ParticleEnsemble, kernels: Kernels, tile: int | None = None, threads: int = 1):
    """(dx, dm) for every particle.

    tile=None evaluates the full N x N pair table at once (reference); a tile
    size splits the outer index into row blocks, optionally on a thread pool.
    Each row's sum runs over all j in one reduction, so the result does not
    depend on the tiling or the number of threads.
    """
    N = ens.N
    if tile is None or tile >= N:
        return _drift_rows(ens, kernels, slice(0, N))
    blocks = [slice(s, min(s + tile, N)) for s in range(0, N, tile)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda b: _drift_rows(ens, kernels, b), blocks))
    else:
        parts = [_drift_rows(ens, kernels, b) for b in blocks]
    return (np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]))


def drift_reference(ens: ParticleEnsemble, kernels: Kernels):
    """Plain double loop; slow, used only to check `drift`."""
    N, d = ens.N, ens.dim
    dx = np.zeros((N, d))
    dm = np.zeros(N)
    a, S = kernels.interaction, kernels.influence
    for i in range(N):
        for j in range(N):
            z = ens.positions[j] - ens.positions[i]
            if a.family == "tabulated":
                z = wrap_centered(z)
            dx[i] += ens.weights[j] * a.evaluate(z)
            if not S.is_zero:
                dm[i] += float(S.evaluate(ens.positions[i], ens.weights[i],
                                          ens.positions[j], ens.weights[j])[0])
    return dx / N, dm / N


# ---------------------------------------------------------------------------
# time stepping


def _step(ens: ParticleEnsemble, kernels: Kernels, dt: float, scheme: str, tile, threads):
    x, m = ens.positions, ens.weights
    k1x, k1m = drift(ens, kernels, tile, threads)
    if scheme == "euler":
        x_new = x + dt * k1x
        m_new = m + dt * k1m
    elif scheme == "heun":
        mid = ParticleEnsemble(wrap(x + dt * k1x), np.maximum(m + dt * k1m, 0.0), ens.time + dt)
        k2x, k2m = drift(mid, kernels, tile, threads)
        x_new = x + 0.5 * dt * (k1x + k2x)
        m_new = m + 0.5 * dt * (k1m + k2m)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    if not (np.all(np.isfinite(x_new)) and np.all(np.isfinite(m_new))):
        return None
    # weights can only cross zero by O(dt^2) roundoff; clip to keep the invariant
    return ParticleEnsemble(wrap(x_new), np.maximum(m_new, 0.0), ens.time + dt)


def simulate(init: ParticleEnsemble, kernels: Kernels, T: float, dt: float, scheme: str = "heun",
             store_every: int = 1, tile: int | None = DEFAULT_TILE, threads: int = 1) -> list:
    """Fixed-step integration on n = ceil(T/dt) steps of size T/n.

    Returns the stored ensembles; t = 0 and t = T are always included."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if T < dt * (1 - 1e-12):
        raise ValueError("need T >= dt")
    n = int(math.ceil(T / dt - 1e-9))
    h = T / n
    ens = init.copy()
    traj = [ens.copy()]
    for k in range(1, n + 1):
        nxt = _step(ens, kernels, h, scheme, tile, threads)
        if nxt is None:
            raise NumericalAbort(f"non-finite state at step {k}", k)
        ens = nxt
        ens.time = k * h
        if k % store_every == 0 or k == n:
            traj.append(ens.copy())
    return traj


# ---------------------------------------------------------------------------
# sampling


class SamplingError(ValueError):
    pass


def _factor_check(values: np.ndarray, tol: float):
    """Marginals of a nonnegative array and the max relative deviation from
    their outer product."""
    total = values.sum()
    margs = []
    for ax in range(values.ndim):
        other = tuple(i for i in range(values.ndim) if i != ax)
        margs.append(values.sum(axis=other) / total)
    prod = margs[0]
    for mg in margs[1:]:
        prod = np.multiply.outer(prod, mg)
    dev = float(np.max(np.abs(values / total - prod)) / np.max(values / total))
    return margs, dev


def _sample_cells(p: np.ndarray, u: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(p)
    cdf /= cdf[-1]
    return np.minimum(np.searchsorted(cdf, u, side="right"), p.size - 1)


def sample_initial(density, N: int, seed: int, factor_tol: float = 1e-8,
                   joint: bool = False) -> ParticleEnsemble:
    """N i.i.d. draws from an analytic density or a product-form DensityField.

    joint=True drops the product-form requirement and samples a cell from the
    full cell-mass table, then a uniform point inside it."""
    rng = np.random.default_rng(seed)
    if isinstance(density, (ProductDensity, ModalDensity)):
        x, m = density.sample(N, rng)
        return ParticleEnsemble(x, m, 0.0)
    vals = np.asarray(density.values)
    if not density.has_m:
        raise SamplingError("need a field with a weight axis")
    if joint:
        return _sample_joint(density, N, rng)
    margs, dev = _factor_check(vals, factor_tol)
    if dev > factor_tol:
        raise SamplingError(f"field is not of product form (deviation {dev:.3g} > {factor_tol:g})")
    d = density.dim
    # piecewise-constant inverse CDF per axis
    u = rng.random((N, d + 1))
    x = np.empty((N, d))
    for q in range(d):
        cell = _sample_cells(margs[q], u[:, q])
        x[:, q] = _within_cell(margs[q], cell, u[:, q]) * density.h_x
    cell = _sample_cells(margs[d], u[:, d])
    m = _within_cell(margs[d], cell, u[:, d]) * density.h_m
    return ParticleEnsemble(wrap(x), m, density.time)


def _within_cell(p: np.ndarray, cell: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Exact inverse of the piecewise-constant CDF, in cell units."""
    cdf = np.concatenate([[0.0], np.cumsum(p)])
    cdf /= cdf[-1]
    lo, hi = cdf[cell], cdf[cell + 1]
    frac = np.where(hi > lo, (u - lo) / np.where(hi > lo, hi - lo, 1.0), 0.5)
    return cell + np.clip(frac, 0.0, 1.0 - 1e-12)


def _sample_joint(density, N: int, rng: np.random.Generator) -> ParticleEnsemble:
    vals = np.clip(np.asarray(density.values), 0.0, None)
    shape = vals.shape
    u = rng.random(N)
    flat = _sample_cells(vals.ravel(), u)
    idx = np.unravel_index(flat, shape)
    jitter = rng.random((N, len(shape)))
    d = density.dim
    x = np.stack([(idx[q] + jitter[:, q]) * density.h_x for q in range(d)], axis=1)
    m = (idx[d] + jitter[:, d]) * density.h_m
    return ParticleEnsemble(wrap(x), m, density.time)
