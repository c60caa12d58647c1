"""Finite-volume solver for the limit equation

    d_t psi + div_x(psi a*mu) + d_m(psi S[psi]) = 0,   mu = int n psi dn,

on the periodic x-grid times a truncated weight interval [0, m_max], plus the
reduced mu-equation with product weights and the diagnostics used by the
verification suite.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .bounds import BoundsLedger, BoundsParams, bounds_ledger  # noqa: F401  (re-exported)
from .kernels import Kernels
from .quadrature import (circ_conv, circ_conv_fft, displacement_grid, m_moment,
                         moment_weights)
from .transport import CFLError, max_stable_dt, upwind_periodic, upwind_walls

DEFAULT_CFL = 0.45
LOG_FLOOR = 1e-12
BAND = 5


class EnvelopeError(ValueError):
    pass


class MassDriftError(RuntimeError):
    pass


@dataclass
class DensityField:
    """Cell averages on (T^d) x [0, m_max]; with m_max None the field lives on T^d only."""
    values: np.ndarray
    m_max: float | None = 30.0
    time: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")
        if len(set(self.values.shape[: self.dim])) != 1:
            raise ValueError("x-grid must be square")

    @property
    def has_m(self) -> bool:
        return self.m_max is not None

    @property
    def dim(self) -> int:
        return self.values.ndim - (1 if self.has_m else 0)

    @property
    def G_x(self) -> int:
        return self.values.shape[0]

    @property
    def G_m(self) -> int:
        return self.values.shape[-1] if self.has_m else 0

    @property
    def h_x(self) -> float:
        return 1.0 / self.G_x

    @property
    def h_m(self) -> float:
        return self.m_max / self.G_m

    @property
    def cell_volume(self) -> float:
        return self.h_x ** self.dim * (self.h_m if self.has_m else 1.0)

    @property
    def x_centers(self) -> np.ndarray:
        return (np.arange(self.G_x) + 0.5) * self.h_x

    @property
    def m_centers(self) -> np.ndarray:
        return (np.arange(self.G_m) + 0.5) * self.h_m

    @property
    def m_faces(self) -> np.ndarray:
        return np.arange(self.G_m + 1) * self.h_m

    def mass(self) -> float:
        return math.fsum(self.values.ravel()) * self.cell_volume

    def copy(self) -> "DensityField":
        return DensityField(self.values.copy(), self.m_max, self.time)

    def with_values(self, values, time=None) -> "DensityField":
        return DensityField(values, self.m_max, self.time if time is None else time)

    def mu(self) -> "DensityField":
        """mu(x) = int n psi(x, n) dn as an x-only field."""
        w = moment_weights(self.G_m, self.m_max, 1.0)
        return DensityField(self.values @ w, None, self.time)


def product_field(density, G_x: int, G_m: int, m_max: float) -> DensityField:
    """Exact cell averages of a ProductDensity."""
    return DensityField(density.cell_averages(G_x, G_m, m_max), m_max, 0.0)


# ---------------------------------------------------------------------------
# velocities


@dataclass
class VelocityFields:
    A: np.ndarray            # (G,)*d + (d,) at cell centers
    Smean: np.ndarray        # (G,)*d + (G_m,)
    dSmean_dm: np.ndarray
    mu: np.ndarray           # (G,)*d
    A_faces: list = field(default_factory=list)   # per axis q: (G,)*d, normal component on faces i+1/2
    S_faces: np.ndarray | None = None             # (G,)*d + (G_m+1,), walls zeroed
    sconv: np.ndarray | None = None               # (s * nu)(x), the x-factor of Smean


def _interaction_conv(kernels: Kernels, mu: np.ndarray, d: int, G: int, shift=None, fft=False):
    a = kernels.interaction
    hx = 1.0 / G
    if a.family == "constant":
        total = math.fsum(mu.ravel()) * hx ** d
        return np.broadcast_to(np.asarray(a.params) * total, mu.shape + (d,)).copy()
    st = a.evaluate(displacement_grid(G, d, shift))
    conv = circ_conv_fft if fft else circ_conv
    return conv(st, mu, d) * hx ** d


def s_convolution(kernels: Kernels, nu: np.ndarray, d: int, G: int, fft=False) -> np.ndarray:
    """(s * nu)(x_k) = h^d sum_j s(x_k - y_j) nu_j."""
    S = kernels.influence
    if S.is_zero:
        return np.zeros(nu.shape)
    hx = 1.0 / G
    if S.s.type == "const":
        return np.full(nu.shape, S.s(np.zeros(d)) * math.fsum(nu.ravel()) * hx ** d)
    st = S.s(displacement_grid(G, d))
    conv = circ_conv_fft if fft else circ_conv
    return conv(st, nu, d) * hx ** d


def velocity_fields(psi: DensityField, kernels: Kernels, fft: bool = False) -> VelocityFields:
    d, G = psi.dim, psi.G_x
    if kernels.influence.form != "separable":
        raise ValueError("the psi-solver needs a bounded separable influence kernel")
    if kernels.dim != d:
        raise ValueError("kernel dim does not match the field")
    mu = psi.mu().values
    A = _interaction_conv(kernels, mu, d, G, fft=fft)
    A_faces = []
    for q in range(d):
        shift = np.zeros(d)
        shift[q] = 0.5 / G
        A_faces.append(_interaction_conv(kernels, mu, d, G, shift, fft=fft)[..., q])
    S = kernels.influence
    mc, mf = psi.m_centers, psi.m_faces
    nu = psi.values @ (S.chi2(mc) * psi.h_m)
    sc = s_convolution(kernels, nu, d, G, fft=fft)
    Smean = sc[..., None] * S.chi1(mc)
    dS = sc[..., None] * S.chi1(mc, 1)
    Sf = sc[..., None] * S.chi1(mf)
    Sf[..., 0] = 0.0
    Sf[..., -1] = 0.0
    return VelocityFields(A=A, Smean=Smean, dSmean_dm=dS, mu=mu, A_faces=A_faces,
                          S_faces=Sf, sconv=sc)


def stable_dt(psi: DensityField, fields: VelocityFields, cfl: float = DEFAULT_CFL) -> float:
    pairs = [(f, psi.h_x) for f in fields.A_faces] + [(fields.S_faces, psi.h_m)]
    return max_stable_dt(pairs, cfl)


def advance(psi: DensityField, fields: VelocityFields, dt: float, cfl: float = DEFAULT_CFL) -> DensityField:
    """One split donor-cell step: each x axis, then m."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if dt > stable_dt(psi, fields, cfl) * (1 + 1e-12):
        raise CFLError(f"dt={dt:g} exceeds the CFL limit {stable_dt(psi, fields, cfl):g}")
    v = psi.values
    for q in range(psi.dim):
        v = upwind_periodic(v, fields.A_faces[q][..., None], dt / psi.h_x, axis=q)
    v = upwind_walls(v, fields.S_faces, dt / psi.h_m, axis=psi.dim)
    return psi.with_values(v, psi.time + dt)


# ---------------------------------------------------------------------------
# diagnostics


@dataclass
class MomentReport:
    time: float
    table: dict            # (b, p) -> M_{b,p}
    mu_l1: float
    mu_linf: float
    psi_linf: float
    n0_estimate: float

    def get(self, b: int, p: int) -> float:
        return self.table[(b, p)]

    def to_dict(self) -> dict:
        return {"t": self.time,
                "moments": [{"b": b, "p": p, "value": v} for (b, p), v in sorted(self.table.items())],
                "mu_l1": self.mu_l1, "mu_linf": self.mu_linf, "psi_linf": self.psi_linf,
                "n0_estimate": self.n0_estimate}


def weighted_moment(psi: DensityField, b: float, p: int) -> float:
    """M_{b,p} = int (1 + m^{bp}) psi^p dx dm."""
    vol = psi.h_x ** psi.dim
    base = m_moment(psi.values, psi.m_max, 0.0, p)
    high = m_moment(psi.values, psi.m_max, b * p, p)
    return math.fsum((base + high).ravel()) * vol


def moment_report(psi: DensityField, b_values=(1, 2, 3, 4), p_values=(1, 2)) -> MomentReport:
    table = {(b, p): weighted_moment(psi, b, p) for b in b_values for p in p_values}
    mu = psi.mu().values
    vol = psi.h_x ** psi.dim
    n0 = max(weighted_moment(psi, b, 1) ** (1.0 / b) / b for b in b_values)
    return MomentReport(time=psi.time, table=table, mu_l1=math.fsum(np.abs(mu).ravel()) * vol,
                        mu_linf=float(np.max(np.abs(mu))), psi_linf=float(np.max(psi.values)),
                        n0_estimate=n0)


@dataclass
class LogGradReport:
    time: float
    dm_log: float
    dx_log: float
    cells_used: int


def _valid_mask(psi: DensityField, floor: float) -> np.ndarray:
    return psi.values > floor * np.exp(-psi.m_centers)


def log_gradients(psi: DensityField, floor: float = LOG_FLOOR, band: int = BAND) -> LogGradReport:
    """Centered-difference sup norms of d_m log psi and grad_x log psi.

    Cells need all stencil neighbours above floor*e^{-m}; the last `band`
    m-cells are excluded."""
    v = psi.values
    ok = _valid_mask(psi, floor)
    L = np.log(np.where(ok, v, 1.0))
    Gm = psi.G_m
    keep = np.zeros(Gm, dtype=bool)
    keep[: Gm - band] = True
    # m-derivative on interior cells
    dm = (L[..., 2:] - L[..., :-2]) / (2 * psi.h_m)
    okm = ok[..., 2:] & ok[..., :-2] & ok[..., 1:-1] & keep[1:-1]
    dm_max = float(np.max(np.abs(dm[okm]))) if np.any(okm) else 0.0
    grad2 = np.zeros(v.shape)
    okx = ok & keep
    for q in range(psi.dim):
        dq = (np.roll(L, -1, axis=q) - np.roll(L, 1, axis=q)) / (2 * psi.h_x)
        grad2 += dq * dq
        okx &= np.roll(ok, -1, axis=q) & np.roll(ok, 1, axis=q)
    dx_max = float(np.sqrt(np.max(grad2[okx]))) if np.any(okx) else 0.0
    return LogGradReport(time=psi.time, dm_log=dm_max, dx_log=dx_max, cells_used=int(np.sum(okx)))


def grad_x(values: np.ndarray, dim: int, h: float) -> np.ndarray:
    """Euclidean norm of the centered periodic x-gradient."""
    g2 = np.zeros(values.shape)
    for q in range(dim):
        dq = (np.roll(values, -1, axis=q) - np.roll(values, 1, axis=q)) / (2 * h)
        g2 += dq * dq
    return np.sqrt(g2)


def envelope_constant(psi: DensityField) -> float:
    """Smallest C with C^{-1} e^{-m} <= psi <= C e^{-m} and |d_m psi|, |grad_x psi| <= C e^{-m}
    at cell centers."""
    v = psi.values
    em = np.exp(psi.m_centers)
    with np.errstate(divide="ignore"):
        lower = np.max(np.where(v > 0, 1.0 / (v * em), np.inf))
    upper = np.max(v * em)
    dm = np.gradient(v, psi.h_m, axis=-1, edge_order=2)
    gx = grad_x(v, psi.dim, psi.h_x)
    return float(max(1.0, lower, upper, np.max(np.abs(dm) * em), np.max(gx * em)))


def positivity_band(psi: DensityField, C: float, S0: float, S1: float, band: int = BAND,
                    eps: float = 1e-3):
    """Check C^{-1} e^{-m} e^{-(S0+S1)t}(1-eps) <= psi <= C e^{-m} e^{(S0+S1)t}(1+eps)
    on cells below the truncation band."""
    t = psi.time
    em = np.exp(-psi.m_centers[: psi.G_m - band])
    v = psi.values[..., : psi.G_m - band]
    g = math.exp((S0 + S1) * t)
    lo = em / (C * g) * (1 - eps)
    hi = em * C * g * (1 + eps)
    ok = bool(np.all(v >= lo) and np.all(v <= hi))
    return ok, float(np.min(v / (em / (C * g)))), float(np.max(v / (em * C * g))), eps


def gradient_l1(psi: DensityField) -> tuple[float, float]:
    """(||grad_x psi||_1, ||grad_x mu||_1) by centered differences."""
    g = grad_x(psi.values, psi.dim, psi.h_x)
    mu = psi.mu()
    gm = grad_x(mu.values, psi.dim, psi.h_x)
    return (math.fsum(g.ravel()) * psi.cell_volume, math.fsum(gm.ravel()) * mu.cell_volume)


def ledger_params(psi0: DensityField, kernels: Kernels, Lam: float = 1.0, T: float = 1.0,
                  M_in: float | None = None, b: int = 1, p: int = 1) -> BoundsParams:
    """Ledger inputs measured on the initial field."""
    S = kernels.influence
    rep = moment_report(psi0)
    g_psi, g_mu = gradient_l1(psi0)
    return BoundsParams(S0=S.S0, S1=S.S1, S2=S.S2, a_sup=kernels.interaction.sup_bound,
                        C=envelope_constant(psi0), grad_psi0_l1=g_psi, grad_mu0_l1=g_mu,
                        M_in=rep.n0_estimate if M_in is None else M_in,
                        mu_bar=max(rep.mu_l1, rep.mu_linf), Lam=Lam, T=T, b=b, p=p)


# ---------------------------------------------------------------------------
# time integration


@dataclass
class SolveResult:
    frames: list
    moments: list
    loggrads: list
    masses: list
    envelope_C: float
    steps: int

    @property
    def times(self) -> list:
        return [f.time for f in self.frames]


def frame_schedule(T: float, n_frames: int = 10, frame_times=None) -> list:
    if frame_times is not None:
        ts = sorted(float(t) for t in frame_times)
        if ts[0] != 0.0:
            ts = [0.0] + ts
        return ts
    return [T * k / n_frames for k in range(n_frames + 1)]


def integrate(psi0: DensityField, kernels: Kernels, times, cfl: float = DEFAULT_CFL,
              fft: bool = False, on_frame=None, mass_tol: float = 1e-6):
    """March psi0 through `times`, yielding each frame. Returns (frames, steps)."""
    psi = psi0.copy()
    m0 = psi0.mass()
    frames = [psi.copy()]
    if on_frame:
        on_frame(frames[-1])
    steps = 0
    for t_next in times[1:]:
        while psi.time < t_next - 1e-14 * max(1.0, t_next):
            f = velocity_fields(psi, kernels, fft=fft)
            dt = min(stable_dt(psi, f, cfl), t_next - psi.time)
            psi = advance(psi, f, dt, cfl)
            steps += 1
            if not np.all(np.isfinite(psi.values)):
                raise FloatingPointError(f"non-finite density at step {steps}")
        psi.time = t_next
        if abs(psi.mass() - m0) > mass_tol * max(1.0, abs(m0)):
            raise MassDriftError(f"mass drifted from {m0:.12g} to {psi.mass():.12g} at t={t_next:g}")
        frames.append(psi.copy())
        if on_frame:
            on_frame(frames[-1])
    return frames, steps


def solve(psi0: DensityField, kernels: Kernels, T: float, cfl: float = DEFAULT_CFL,
          n_frames: int = 10, frame_times=None, require_envelope: bool = True,
          b_values=(1, 2, 3, 4), fft: bool = False) -> SolveResult:
    C = envelope_constant(psi0)
    if require_envelope and not math.isfinite(C):
        raise EnvelopeError("psi0 has no finite exponential envelope on the grid")
    times = frame_schedule(T, n_frames, frame_times)
    frames, steps = integrate(psi0, kernels, times, cfl, fft=fft)
    moments = [moment_report(f, b_values) for f in frames]
    loggrads = [log_gradients(f) for f in frames]
    masses = [f.mass() for f in frames]
    return SolveResult(frames, moments, loggrads, masses, C, steps)


def mu_equation_residual(frames: list, kernels: Kernels) -> float:
    """Mean L1 residual of d_t mu + div(mu A) = int psi S[psi] dn over frame pairs.

    The source is the m-flux integrated by parts against n (walls carry no flux).
    """
    res = []
    for f1, f2 in zip(frames[:-1], frames[1:]):
        dt = f2.time - f1.time
        mid = f1.with_values(0.5 * (f1.values + f2.values))
        vf = velocity_fields(mid, kernels)
        mu1, mu2 = f1.mu().values, f2.mu().values
        mu_mid = mid.mu().values
        div = np.zeros(mu_mid.shape)
        for q in range(mid.dim):
            F = mu_mid * vf.A[..., q]
            div += (np.roll(F, -1, axis=q) - np.roll(F, 1, axis=q)) / (2 * mid.h_x)
        src = np.sum(mid.values * vf.Smean, axis=-1) * mid.h_m
        r = (mu2 - mu1) / dt + div - src
        res.append(math.fsum(np.abs(r).ravel()) * mid.h_x ** mid.dim)
    return float(np.mean(res))


# ---------------------------------------------------------------------------
# reduced mu-equation with S = m n s(x - y)


@dataclass
class ReducedResult:
    frames: list
    totals: list
    steps: int


def _reduced_rate(mu: np.ndarray, kernels: Kernels, d: int, G: int) -> np.ndarray:
    """h[mu](x) = mu(x) int s(x - y) mu(y) dy."""
    S = kernels.influence
    if S.is_zero:
        return np.zeros(mu.shape)
    hx = 1.0 / G
    if S.s.type == "const":
        return mu * S.s(np.zeros(d)) * math.fsum(mu.ravel()) * hx ** d
    st = S.s(displacement_grid(G, d))
    return mu * circ_conv(st, mu, d) * hx ** d


def solve_mu_reduced(mu0: DensityField, kernels: Kernels, T: float, cfl: float = DEFAULT_CFL,
                     n_frames: int = 10, source_fraction: float = 0.002) -> ReducedResult:
    """Transport by A = a*mu (donor cell) and an explicit Heun step for the
    source h[mu]; dt also keeps dt*max|h/mu| <= source_fraction."""
    if mu0.has_m:
        raise ValueError("mu0 must be an x-only field")
    if kernels.influence.form != "product-weights":
        raise ValueError("the reduced equation needs the product-weights influence kernel")
    d, G = mu0.dim, mu0.G_x
    mu = mu0.copy()
    times = frame_schedule(T, n_frames)
    frames = [mu.copy()]
    steps = 0
    for t_next in times[1:]:
        while mu.time < t_next - 1e-14 * max(1.0, t_next):
            v = mu.values
            faces = []
            for q in range(d):
                shift = np.zeros(d)
                shift[q] = 0.5 / G
                faces.append(_interaction_conv(kernels, v, d, G, shift)[..., q])
            dt = max_stable_dt([(f, mu.h_x) for f in faces], cfl)
            rate = _reduced_rate(v, kernels, d, G)
            with np.errstate(divide="ignore", invalid="ignore"):
                r = np.max(np.abs(np.where(v > 0, rate / v, 0.0)))
            if r > 0:
                dt = min(dt, source_fraction / r)
            dt = min(dt, t_next - mu.time)
            for q in range(d):
                v = upwind_periodic(v, faces[q], dt / mu.h_x, axis=q)
            k1 = _reduced_rate(v, kernels, d, G)
            k2 = _reduced_rate(v + dt * k1, kernels, d, G)
            v = v + 0.5 * dt * (k1 + k2)
            mu = mu.with_values(v, mu.time + dt)
            steps += 1
        mu.time = t_next
        frames.append(mu.copy())
    return ReducedResult(frames, [f.mass() for f in frames], steps)


# ---------------------------------------------------------------------------
# stability


@dataclass
class StabilityReport:
    times: list
    D: list
    fitted_rate: float
    max_rate: float
    C_hat: float
    holds: bool
    degenerate: bool
    margin: float

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("times", "D", "fitted_rate", "max_rate", "C_hat", "holds", "degenerate", "margin")}


def distance(f1: DensityField, f2: DensityField) -> float:
    """||psi1 - psi2||_1 + ||mu1 - mu2||_1."""
    dpsi = math.fsum(np.abs(f1.values - f2.values).ravel()) * f1.cell_volume
    m1, m2 = f1.mu(), f2.mu()
    return dpsi + math.fsum(np.abs(m1.values - m2.values).ravel()) * m1.cell_volume


def stability_check(psi_a: DensityField, psi_b: DensityField, kernels: Kernels, T: float,
                    n_frames: int = 10, margin: float = 0.1, cfl: float = DEFAULT_CFL) -> StabilityReport:
    if psi_a.values.shape != psi_b.values.shape or psi_a.m_max != psi_b.m_max:
        raise ValueError("initial fields live on different grids")
    times = frame_schedule(T, n_frames)
    fa, _ = integrate(psi_a, kernels, times, cfl)
    fb, _ = integrate(psi_b, kernels, times, cfl)
    D = [distance(x, y) for x, y in zip(fa, fb)]
    distinct = not np.array_equal(psi_a.values, psi_b.values)
    if D[0] == 0.0:
        return StabilityReport(times, D, 0.0, 0.0, margin, all(d <= 1e-12 for d in D),
                               distinct, margin)
    t = np.array(times[1:])
    r = np.log(np.maximum(np.array(D[1:]), 1e-300) / D[0])
    fit = float(np.sum(t * r) / np.sum(t * t))
    max_rate = float(np.max(r / t))
    # the constant has to dominate every observed rate, not just the average
    C_hat = max(fit, max_rate) + margin
    holds = all(d <= math.exp(C_hat * tt) * D[0] * (1 + 1e-12) for d, tt in zip(D, times))
    return StabilityReport(times, D, fit, max_rate, C_hat, holds, False, margin)
