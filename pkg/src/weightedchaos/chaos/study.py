"""Monte-Carlo proxy for propagation of chaos: particle 1-marginals against the
mean-field solution on the same cells."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..kernels import Kernels
from ..meanfield import DensityField, product_field, solve
from ..particles import ParticleEnsemble, sample_initial, simulate
from .remainders import exp_moment_mc


@dataclass
class StudyConfig:
    kernels: Kernels
    density: object                       # ProductDensity or ModalDensity
    N_list: tuple = (64, 256, 1024, 4096)
    replicas: int = 4
    seeds: tuple = (0, 1, 2, 3, 4)
    T: float = 0.0
    dt: float = 0.05
    checkpoints: tuple | None = None       # default: (T,)
    G_x: int = 4
    G_m: int = 4
    m_max: float = 6.0
    cfl: float = 0.45
    scheme: str = "heun"
    threads: int = 1
    tile: int = 256
    delta_N: int = 0                       # 0 skips the exp-moment estimates
    delta_samples: int = 1000
    base_seed: int = 0


@dataclass
class ChaosReport:
    rows: list                      # per N at the final checkpoint
    slope: float | None
    delta: list = field(default_factory=list)
    checkpoints: list = field(default_factory=list)
    ckp: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"rows": self.rows, "slope": self.slope, "delta": self.delta,
                "checkpoints": self.checkpoints, "ckp": self.ckp}


def histogram_field(ensembles: list, psi: DensityField):
    """Pooled (x, m) histogram as a density on the cells of psi, plus the
    particle fraction with m >= m_max."""
    x = np.concatenate([e.positions for e in ensembles])
    m = np.concatenate([e.weights for e in ensembles])
    n = m.size
    d, G, Gm = psi.dim, psi.G_x, psi.G_m
    inside = m < psi.m_max
    ix = np.minimum((x[inside] * G).astype(int), G - 1)
    im = np.minimum((m[inside] / psi.h_m).astype(int), Gm - 1)
    flat = np.ravel_multi_index(tuple(ix.T) + (im,), psi.values.shape)
    counts = np.bincount(flat, minlength=psi.values.size).reshape(psi.values.shape)
    return counts / (n * psi.cell_volume), float(np.sum(~inside)) / n


def l1_marginal_error(ensembles: list, psi: DensityField) -> float:
    hist, outside = histogram_field(ensembles, psi)
    diff = np.abs(hist - psi.values).ravel() * psi.cell_volume
    # mass the truncated grid cannot see counts as error
    return math.fsum(diff) + outside


def _w1_step_vs_linear(atoms: np.ndarray, w: np.ndarray, cell_mass: np.ndarray) -> float:
    """int_0^1 |F_N - F| where F_N is the CDF of atoms with weights w and F the
    CDF of a piecewise-constant density with the given cell masses."""
    G = cell_mass.size
    order = np.argsort(atoms, kind="stable")
    a, w = atoms[order], w[order]
    faces = np.arange(G + 1) / G
    Fface = np.concatenate([[0.0], np.cumsum(cell_mass)])
    pts = np.union1d(faces, a)
    Fn_at = np.concatenate([[0.0], np.cumsum(w)])[np.searchsorted(a, pts[:-1], side="right")]
    F = np.interp(pts, faces, Fface)
    L = np.diff(pts)
    u0, u1 = F[:-1] - Fn_at, F[1:] - Fn_at
    same = u0 * u1 >= 0
    den = np.where(same, 1.0, np.abs(u0) + np.abs(u1))
    parts = np.where(same, 0.5 * L * (np.abs(u0) + np.abs(u1)), 0.5 * L * (u0 * u0 + u1 * u1) / den)
    return math.fsum(parts)


def w1_weighted_error(ensembles: list, psi: DensityField) -> float:
    """W1 on [0, 1) between the weight-normalized position measure of the
    particles and mu[psi] / ||mu||_1 (d = 1)."""
    if psi.dim != 1:
        raise ValueError("W1 by quantile integration needs d = 1")
    x = np.concatenate([e.positions[:, 0] for e in ensembles])
    m = np.concatenate([e.weights for e in ensembles])
    tot = math.fsum(m)
    if tot <= 0:
        return float("nan")
    mu = psi.mu().values
    cell_mass = mu / math.fsum(mu)
    return _w1_step_vs_linear(x, m / tot, cell_mass)


def _slope(Ns, errs) -> float | None:
    Ns, errs = np.asarray(Ns, float), np.asarray(errs, float)
    ok = errs > 0
    if ok.sum() < 3:
        return None
    return float(np.polyfit(np.log(Ns[ok]), np.log(errs[ok]), 1)[0])


def _run_replica(cfg: StudyConfig, N: int, seed: int, r: int, times: list) -> list:
    ss = np.random.SeedSequence([cfg.base_seed, seed, N, r])
    init_seed = int(ss.generate_state(2, np.uint64)[0] >> np.uint64(1))
    ens = sample_initial(cfg.density, N, init_seed)
    out = []
    t = 0.0
    for tc in times:
        if tc > t:
            ens = simulate(ens, cfg.kernels, tc - t, min(cfg.dt, tc - t), cfg.scheme,
                           store_every=10 ** 9, tile=cfg.tile, threads=cfg.threads)[-1]
            ens.time = tc
            t = tc
        out.append(ens.copy())
    return out


def marginal_error_study(cfg: StudyConfig, progress=None) -> ChaosReport:
    psi0 = product_field(cfg.density, cfg.G_x, cfg.G_m, cfg.m_max)
    if cfg.density.dim != 1:
        raise ValueError("the marginal study runs in d = 1")
    times = sorted(set(cfg.checkpoints or (cfg.T,)))
    if cfg.T > 0:
        res = solve(psi0, cfg.kernels, max(times), cfl=cfg.cfl, frame_times=times)
        frames = {round(f.time, 12): f for f in res.frames}
        ref = [frames[round(t, 12)] for t in times]
    else:
        ref = [psi0 for _ in times]
    for f in ref:
        if f.values.shape != psi0.values.shape:
            raise ValueError("histogram bins must equal the PDE cells")
    # errors[t][N] -> list over seeds
    l1 = [{N: [] for N in cfg.N_list} for _ in times]
    w1 = [{N: [] for N in cfg.N_list} for _ in times]
    for seed in cfg.seeds:
        for N in cfg.N_list:
            reps = [_run_replica(cfg, N, seed, r, times) for r in range(cfg.replicas)]
            for c, psi_t in enumerate(ref):
                ens_c = [rep[c] for rep in reps]
                l1[c][N].append(l1_marginal_error(ens_c, psi_t))
                w1[c][N].append(w1_weighted_error(ens_c, psi_t))
            if progress:
                progress(seed, N)
    checkpoints = []
    for c, t in enumerate(times):
        rows = [{"N": N, "replicas": cfg.replicas,
                 "l1": float(np.median(l1[c][N])), "w1": float(np.median(w1[c][N])),
                 "l1_seeds": l1[c][N], "w1_seeds": w1[c][N]} for N in cfg.N_list]
        checkpoints.append({"t": t, "rows": rows,
                            "slope": _slope(cfg.N_list, [r["l1"] for r in rows])})
    delta = []
    if cfg.delta_N > 0:
        for c, t in enumerate(times):
            est = exp_moment_mc(ref[c], cfg.kernels, cfg.delta_N, cfg.delta_samples,
                                int(np.random.SeedSequence([cfg.base_seed, c]).generate_state(1)[0]))
            delta.append({"t": t, "mean": est.delta, "ci": list(est.ci)})
    final = checkpoints[-1]
    return ChaosReport(rows=final["rows"], slope=final["slope"], delta=delta, checkpoints=checkpoints)


__all__ = ["StudyConfig", "ChaosReport", "marginal_error_study", "l1_marginal_error",
           "w1_weighted_error", "histogram_field"]
