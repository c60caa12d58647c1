"""Grid solver for the Kolmogorov (Liouville) equation of the weighted particle
system at N in {1, 2}, d = 1.

The field lives on T^N x [0, m_max]^N with axis order (x_1..x_N, m_1..m_N).
Particle i is transported with

    v_{x_i} = (1/N) sum_j m_j a(x_i - x_j),   v_{m_i} = (1/N) sum_j S(x_i, m_i, x_j, m_j).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernels import Kernels
from .meanfield import DEFAULT_CFL, DensityField, frame_schedule
from .transport import CFLError, max_stable_dt, upwind_periodic, upwind_walls

DEFAULT_BUDGET = 32 ** 4
ENTROPY_FLOOR = 1e-30


class MemoryBudgetError(MemoryError):
    pass


@dataclass
class KolmogorovField:
    values: np.ndarray
    N: int
    m_max: float
    time: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.N not in (1, 2):
            raise ValueError("N must be 1 or 2")
        if self.values.ndim != 2 * self.N:
            raise ValueError("values need 2N axes (x_1..x_N, m_1..m_N), d = 1")

    @property
    def G_x(self) -> int:
        return self.values.shape[0]

    @property
    def G_m(self) -> int:
        return self.values.shape[self.N]

    @property
    def h_x(self) -> float:
        return 1.0 / self.G_x

    @property
    def h_m(self) -> float:
        return self.m_max / self.G_m

    @property
    def cell_volume(self) -> float:
        return (self.h_x * self.h_m) ** self.N

    def mass(self) -> float:
        return math.fsum(self.values.ravel()) * self.cell_volume

    def copy(self) -> "KolmogorovField":
        return KolmogorovField(self.values.copy(), self.N, self.m_max, self.time)

    def swapped(self) -> "KolmogorovField":
        """Exchange particles 1 and 2."""
        if self.N == 1:
            return self.copy()
        return KolmogorovField(np.transpose(self.values, (1, 0, 3, 2)).copy(), 2, self.m_max, self.time)


def tensor_power(psi: DensityField, N: int) -> KolmogorovField:
    if psi.dim != 1:
        raise ValueError("Kolmogorov grids are d = 1 only")
    v = psi.values
    if N == 1:
        return KolmogorovField(v.copy(), 1, psi.m_max, psi.time)
    return KolmogorovField(np.einsum("am,bn->abmn", v, v), 2, psi.m_max, psi.time)


def marginal(psiN: KolmogorovField, k: int):
    """k-th marginal: integrate out particles k+1..N by cell sums."""
    if not 1 <= k <= psiN.N:
        raise ValueError(f"k must lie in [1, {psiN.N}]")
    if k == psiN.N:
        if k == 1:
            return DensityField(psiN.values.copy(), psiN.m_max, psiN.time)
        return psiN.copy()
    v = psiN.values.sum(axis=(1, 3)) * psiN.h_x * psiN.h_m
    return DensityField(v, psiN.m_max, psiN.time)


# ---------------------------------------------------------------------------
# velocities


def _coords(psiN: KolmogorovField, face_axis: int | None):
    """Broadcastable coordinate arrays (X[i], M[i]); `face_axis` uses face positions."""
    N, G, Gm = psiN.N, psiN.G_x, psiN.G_m
    nd = 2 * N
    X, M = [], []
    for ax in range(nd):
        shape = [1] * nd
        if ax < N:
            if ax == face_axis:
                c = (np.arange(G) + 1.0) * psiN.h_x        # face between k and k+1
            else:
                c = (np.arange(G) + 0.5) * psiN.h_x
        else:
            if ax == face_axis:
                c = np.arange(Gm + 1) * psiN.h_m
            else:
                c = (np.arange(Gm) + 0.5) * psiN.h_m
        shape[ax] = c.size
        (X if ax < N else M).append(c.reshape(shape))
    return X, M


def _a1(kernels: Kernels, z):
    return kernels.interaction.evaluate(np.asarray(z)[..., None])[..., 0]


def _S(kernels: Kernels, x, m, y, n):
    return kernels.influence.evaluate(np.asarray(x)[..., None], m, np.asarray(y)[..., None], n)


def velocity(psiN: KolmogorovField, kernels: Kernels, axis: int, at_faces: bool = True) -> np.ndarray:
    """Velocity component for coordinate `axis` (x_i for axis < N, m_i else)."""
    N = psiN.N
    X, M = _coords(psiN, axis if at_faces else None)
    v = 0.0
    if axis < N:
        i = axis
        for j in range(N):
            z = 0.0 if j == i else X[i] - X[j]
            v = v + M[j] * _a1(kernels, z)
        return np.asarray(v) / N
    i = axis - N
    if kernels.influence.is_zero:
        return np.zeros(1)
    for j in range(N):
        v = v + _S(kernels, X[i], M[i], X[j], M[j])[0]
    v = np.asarray(v) / N
    if at_faces:
        shape = list(psiN.values.shape)
        shape[axis] += 1
        v = np.array(np.broadcast_to(v, shape))
        lead = (slice(None),) * axis
        v[lead + (0,)] = 0.0
        v[lead + (-1,)] = 0.0
    return v


def _sweep(values, psiN, kernels, axis, dt, vcache):
    v = vcache[axis]
    if axis < psiN.N:
        return upwind_periodic(values, v, dt / psiN.h_x, axis=axis)
    if v.size == 1:
        return values
    return upwind_walls(values, v, dt / psiN.h_m, axis=axis)


def _particle_op(values, psiN, kernels, i, dt, vcache):
    values = _sweep(values, psiN, kernels, i, dt, vcache)
    return _sweep(values, psiN, kernels, psiN.N + i, dt, vcache)


def step(psiN: KolmogorovField, kernels: Kernels, dt: float, vcache=None,
         cfl: float = DEFAULT_CFL) -> KolmogorovField:
    """One split step. For N = 2 the two particle orderings are averaged,
    which makes the step commute exactly with the particle swap."""
    if vcache is None:
        vcache = velocity_cache(psiN, kernels)
    lim = stable_dt(psiN, vcache, cfl)
    if dt > lim * (1 + 1e-12):
        raise CFLError(f"dt={dt:g} exceeds the CFL limit {lim:g}")
    v = psiN.values
    if psiN.N == 1:
        out = _particle_op(v, psiN, kernels, 0, dt, vcache)
    else:
        a = _particle_op(_particle_op(v, psiN, kernels, 1, dt, vcache), psiN, kernels, 0, dt, vcache)
        b = _particle_op(_particle_op(v, psiN, kernels, 0, dt, vcache), psiN, kernels, 1, dt, vcache)
        out = 0.5 * (a + b)
    return KolmogorovField(out, psiN.N, psiN.m_max, psiN.time + dt)


def velocity_cache(psiN: KolmogorovField, kernels: Kernels) -> dict:
    """Velocities depend on coordinates only, so they are computed once per grid."""
    return {ax: velocity(psiN, kernels, ax) for ax in range(2 * psiN.N)}


def stable_dt(psiN: KolmogorovField, vcache: dict, cfl: float = DEFAULT_CFL) -> float:
    N = psiN.N
    pairs = [(vcache[ax], psiN.h_x if ax < N else psiN.h_m) for ax in range(2 * N)]
    # each particle operator applies its x and m sweeps back to back
    return max_stable_dt(pairs, cfl)


def solve_kolmogorov(psiN0: KolmogorovField, kernels: Kernels, T: float, cfl: float = DEFAULT_CFL,
                     n_frames: int = 10, frame_times=None, budget: int = DEFAULT_BUDGET) -> list:
    if kernels.dim != 1:
        raise ValueError("Kolmogorov solver is d = 1 only")
    if psiN0.values.size > budget:
        raise MemoryBudgetError(f"{psiN0.values.size} cells exceed the budget of {budget}")
    times = frame_schedule(T, n_frames, frame_times)
    vcache = velocity_cache(psiN0, kernels)
    dt_max = stable_dt(psiN0, vcache, cfl)
    psi = psiN0.copy()
    frames = [psi.copy()]
    for t_next in times[1:]:
        while psi.time < t_next - 1e-14 * max(1.0, t_next):
            dt = min(dt_max, t_next - psi.time)
            psi = step(psi, kernels, dt, vcache, cfl)
        psi.time = t_next
        frames.append(psi.copy())
    return frames


# ---------------------------------------------------------------------------
# entropy diagnostics


def entropy(psiN) -> float:
    """int psi log psi with x log x = 0 below the floor."""
    v = psiN.values.ravel()
    pos = v > ENTROPY_FLOOR
    return math.fsum(v[pos] * np.log(v[pos])) * psiN.cell_volume


def dS_dm_total(psiN: KolmogorovField, kernels: Kernels) -> np.ndarray:
    """sum_{i,j} d/dm_i [S(x_i, m_i, x_j, m_j)] at cell centers.

    For j = i both weight slots carry m_i, so the derivative is dS/dm + dS/dn."""
    N = psiN.N
    X, M = _coords(psiN, None)
    S = kernels.influence
    tot = np.zeros(psiN.values.shape)
    if S.is_zero:
        return tot
    xs = [np.asarray(x)[..., None] for x in X]
    for i in range(N):
        for j in range(N):
            _, dS, _ = S.evaluate(xs[i], M[i], xs[j], M[j])
            tot = tot + dS
            if i == j:
                tot = tot + S.dS_dn(xs[i], M[i], xs[j], M[j])
    return tot


@dataclass
class EntropyReport:
    t: list
    entropy: list
    rhs: list
    satisfied: bool
    tol: float
    worst_margin: float

    def to_dict(self) -> dict:
        return {"t": self.t, "entropy": self.entropy, "rhs": self.rhs,
                "satisfied": self.satisfied, "tol": self.tol, "worst_margin": self.worst_margin}


def entropy_inequality_check(frames: list, kernels: Kernels, tol: float = 1e-2) -> EntropyReport:
    """E(t) <= E(0) - int_0^t (1/N) sum_{i,j} int d_{m_i} S psi_N, trapezoid in time."""
    if len(frames) < 10:
        raise ValueError("need at least 10 frames for the time quadrature")
    N = frames[0].N
    D = dS_dm_total(frames[0], kernels)
    rate = [-math.fsum((D * f.values).ravel()) * f.cell_volume / N for f in frames]
    ts = [f.time for f in frames]
    E = [entropy(f) for f in frames]
    rhs = [E[0]]
    acc = 0.0
    for k in range(1, len(frames)):
        acc += 0.5 * (rate[k] + rate[k - 1]) * (ts[k] - ts[k - 1])
        rhs.append(E[0] + acc)
    margins = [r + tol - e for e, r in zip(E, rhs)]
    return EntropyReport(ts, E, rhs, all(m >= 0 for m in margins), tol, min(margins))


def exp_decay_check(psiN) -> float:
    """max over cells of e^{(1/2) sum_k m_k} psi_N at cell centers."""
    if isinstance(psiN, DensityField):
        mc = psiN.m_centers
        return float(np.max(np.exp(0.5 * mc) * psiN.values))
    _, M = _coords(psiN, None)
    w = sum(M)
    return float(np.max(np.exp(0.5 * w) * psiN.values))


def relative_entropy_N(psiN: KolmogorovField, psi: DensityField) -> float:
    """(1/N) int psi_N log(psi_N / psi^{tensor N})."""
    q = tensor_power(psi, psiN.N).values.ravel()
    p = psiN.values.ravel()
    pos = p > ENTROPY_FLOOR
    if np.any(q[pos] <= 0):
        return math.inf
    return math.fsum(p[pos] * np.log(p[pos] / q[pos])) * psiN.cell_volume / psiN.N


@dataclass
class GronwallReport:
    t: list
    H: list
    kappa: float
    bound: list
    holds: bool


def gronwall_shape_check(kframes: list, mframes: list, margin: float = 0.1) -> GronwallReport:
    """H_N(t) <= (H_N(0) + t kappa) e^{t(1 + margin)} with kappa measured on the first step."""
    H = [relative_entropy_N(k, m) for k, m in zip(kframes, mframes)]
    ts = [f.time for f in kframes]
    t1 = ts[1]
    kappa = max(0.0, (H[1] * math.exp(-t1 * (1 + margin)) - H[0]) / t1)
    bound = [(H[0] + t * kappa) * math.exp(t * (1 + margin)) for t in ts]
    holds = all(h <= b * (1 + 1e-9) + 1e-14 for h, b in zip(H, bound))
    return GronwallReport(ts, H, kappa, bound, holds)
