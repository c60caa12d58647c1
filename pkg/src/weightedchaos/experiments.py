"""Subcommand bodies. Each returns a RunOutput for `emit_report`."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bounds import bounds_ledger
from .chaos import (StudyConfig, cancellation_check, ckp_check, delta_trend, exp_moment_mc,
                    gamma_bounds, marginal_error_study, product_cancellation_bruteforce,
                    relative_entropy)
from .config import ExperimentConfig
from .densities import ProductDensity
from .kolmogorov import (entropy_inequality_check, gronwall_shape_check, marginal, solve_kolmogorov,
                         tensor_power)
from .meanfield import (DensityField, ledger_params, positivity_band, product_field, solve,
                        stability_check)
from .particles import sample_initial, simulate
from .reports import Check

ROUNDOFF = 1e-12


@dataclass
class RunOutput:
    results: dict
    checks: list
    table: list                                       # main CSV
    extra: dict = field(default_factory=dict)         # suffix -> rows, written as extra CSVs


def field_rows(frames) -> list:
    """Rows t, x1[, x2], m, psi (cell centers) for each frame."""
    rows = []
    for f in frames:
        xc, mc = f.x_centers, f.m_centers
        for idx in np.ndindex(f.values.shape):
            r = {"t": f.time}
            for q in range(f.dim):
                r[f"x{q + 1}"] = float(xc[idx[q]])
            r["m"] = float(mc[idx[-1]])
            r["psi"] = float(f.values[idx])
            rows.append(r)
    return rows


def initial_field(cfg: ExperimentConfig, G_x=None, G_m=None, m_max=None) -> DensityField:
    g = cfg.grids
    m_max = g.m_max if m_max is None else m_max
    dens = cfg.initial.density(cfg.kernels.dim, m_max)
    return product_field(dens, G_x or g.G_x, G_m or g.G_m, m_max)


def _envelope_ok(cfg: ExperimentConfig, C: float) -> Check:
    C_max = cfg.initial.envelope.get("C_max")
    ok = math.isfinite(C) and (C_max is None or C <= C_max)
    return Check("initial envelope constant finite", "exponential-envelope", ok, C, C_max)


# ---------------------------------------------------------------------------
# mean field


def meanfield_checks(res, S0: float, S1: float, b_values, p_values=(1, 2)) -> list:
    """Moment propagation, max principle, L1 bound on mu, mass and positivity."""
    checks = []
    m0 = res.masses[0]
    drift = max(abs(m - m0) for m in res.masses)
    checks.append(Check("mass conserved", "conservation", drift <= 1e-10, drift, 1e-10))
    neg = min(float(np.min(f.values)) for f in res.frames)
    checks.append(Check("density nonnegative", "positivity", neg >= 0.0, neg, 0.0))
    M0 = res.moments[0]
    worst = {}
    for rep in res.moments:
        t = rep.time
        for b in b_values:
            for p in p_values:
                Mbar = (b * p + 1) * S0 + (p + 1) * S1
                bound = math.exp(Mbar * t) * M0.get(b, p) * (1 + 1e-3)
                r = rep.get(b, p) / bound
                if (b, p) not in worst or r > worst[(b, p)][0]:
                    worst[(b, p)] = (r, rep.get(b, p), bound, t)
    for (b, p), (r, v, bound, t) in sorted(worst.items()):
        checks.append(Check(f"weighted moment M_{{{b},{p}}} propagation", "moment-propagation",
                            r <= 1.0, v, bound, f"worst at t={t:g}"))
    psi0, mu_bar = M0.psi_linf, max(M0.mu_l1, M0.mu_linf)
    r_psi = max(rep.psi_linf / (math.exp(S1 * rep.time) * psi0 * (1 + 1e-3)) for rep in res.moments)
    checks.append(Check("sup norm of psi", "max-principle", r_psi <= 1.0, r_psi, 1.0, "ratio to bound"))
    r_mu = max(rep.mu_l1 - (mu_bar + S0 * rep.time + 1e-3) for rep in res.moments)
    checks.append(Check("L1 norm of mu", "mu-l1-bound", r_mu <= 0.0, r_mu, 0.0, "excess over bound"))
    return checks


def run_solve_meanfield(cfg: ExperimentConfig, **_):
    kernels = cfg.build_kernels()
    psi0 = initial_field(cfg)
    bv = tuple(cfg.bounds.b_values)
    pv = tuple(cfg.bounds.p_values)
    res = solve(psi0, kernels, cfg.times.T, cfl=cfg.times.cfl, n_frames=cfg.times.n_frames,
                require_envelope=cfg.initial.envelope.get("require", True), b_values=bv)
    S = kernels.influence
    checks = [_envelope_ok(cfg, res.envelope_C)]
    checks += meanfield_checks(res, S.S0, S.S1, bv, pv)
    table = []
    for f, rep, lg, mass in zip(res.frames, res.moments, res.loggrads, res.masses):
        row = {"t": f.time, "mass": mass, "psi_linf": rep.psi_linf, "mu_l1": rep.mu_l1,
               "dm_log": lg.dm_log, "dx_log": lg.dx_log}
        for (b, p), v in sorted(rep.table.items()):
            row[f"M_{b}_{p}"] = v
        table.append(row)
    results = {"moments": [r.to_dict() for r in res.moments], "masses": res.masses,
               "envelope_C": res.envelope_C, "steps": res.steps,
               "loggrads": [{"t": g.time, "dm_log": g.dm_log, "dx_log": g.dx_log} for g in res.loggrads]}
    return RunOutput(results, checks, table, {"field": field_rows([res.frames[0], res.frames[-1]])})


# ---------------------------------------------------------------------------
# a-priori bounds and invariants along the mean-field run


def shifted_field(cfg: ExperimentConfig, psi_a: DensityField) -> DensityField:
    """Convex perturbation (1 - s) psi_a + s psi_c with psi_c an x-modulated
    copy of the initial law; mass and positivity are preserved."""
    s = cfg.bounds.shift
    i = cfg.initial
    dens_c = ProductDensity(cfg.kernels.dim, 0.5, i.x_phase, i.m_profile, psi_a.m_max, i.m_lo, i.m_hi)
    psi_c = product_field(dens_c, psi_a.G_x, psi_a.G_m, psi_a.m_max)
    return psi_a.with_values((1 - s) * psi_a.values + s * psi_c.values)


def run_verify_bounds(cfg: ExperimentConfig, **_):
    kernels = cfg.build_kernels()
    psi0 = initial_field(cfg)
    T = cfg.times.T
    params = ledger_params(psi0, kernels, Lam=cfg.chaos.Lam, T=T, M_in=cfg.bounds.M_in,
                           b=cfg.bounds.b, p=cfg.bounds.p)
    ledger = bounds_ledger(params)
    bv = tuple(cfg.bounds.b_values)
    res = solve(psi0, kernels, T, cfl=cfg.times.cfl, n_frames=cfg.times.n_frames,
                require_envelope=cfg.initial.envelope.get("require", True), b_values=bv)
    S = kernels.influence
    checks = [_envelope_ok(cfg, res.envelope_C)]
    finite = all(math.isfinite(v) for v in (ledger.Y0, ledger.K_dm, ledger.K_logm, ledger.K_gradx))
    checks.append(Check("ledger constants finite", "bounds-ledger", finite))
    checks.append(Check("T_star positive", "bounds-ledger", ledger.T_star > 0, ledger.T_star))
    checks += meanfield_checks(res, S.S0, S.S1, bv, tuple(cfg.bounds.p_values))
    C = params.C
    band_ok, band_lo, band_hi, dm_worst, dx_worst = True, math.inf, 0.0, 0.0, 0.0
    rows = []
    for f, lg in zip(res.frames, res.loggrads):
        if f.time > ledger.T_star:
            continue
        ok, lo, hi, eps = positivity_band(f, C, S.S0, S.S1)
        band_ok, band_lo, band_hi = band_ok and ok, min(band_lo, lo), max(band_hi, hi)
        r_dm = lg.dm_log / params.K_logm(f.time)
        gx = params.gradx_log_bound(f.time)
        r_dx = lg.dx_log / gx if gx > 0 else (0.0 if lg.dx_log == 0 else math.inf)
        dm_worst, dx_worst = max(dm_worst, r_dm), max(dx_worst, r_dx)
        rows.append({"t": f.time, "dm_log": lg.dm_log, "K_logm": params.K_logm(f.time),
                     "dx_log": lg.dx_log, "gradx_bound": gx, "band_ok": ok})
    checks.append(Check("positivity band", "positivity-band", band_ok, band_hi, 1.0,
                        f"lower ratio {band_lo:.6g} (>= 1), upper ratio (<= 1), slack 1e-3"))
    checks.append(Check("d_m log psi bound", "log-gradient-m", dm_worst <= 1.0, dm_worst, 1.0, "ratio"))
    checks.append(Check("grad_x log psi bound", "log-gradient-x", dx_worst <= 1.0, dx_worst, 1.0, "ratio"))
    same = stability_check(psi0, psi0, kernels, T, cfg.times.n_frames, cfl=cfg.times.cfl)
    checks.append(Check("identical data stay identical", "stability", max(same.D) <= ROUNDOFF,
                        max(same.D), ROUNDOFF))
    shifted = stability_check(psi0, shifted_field(cfg, psi0), kernels, T, cfg.times.n_frames,
                              cfl=cfg.times.cfl)
    checks.append(Check("shifted data obey exponential stability", "stability",
                        shifted.holds and math.isfinite(shifted.C_hat), shifted.C_hat))
    results = {"ledger": ledger.to_dict(), "loggrad_rows": rows,
               "stability_identical": same.to_dict(), "stability_shifted": shifted.to_dict(),
               "moments": [r.to_dict() for r in res.moments]}
    table = [{"quantity": k, "value": v} for k, v in ledger.to_dict().items() if k != "inputs"]
    return RunOutput(results, checks, table)


# ---------------------------------------------------------------------------
# cancellation, gamma, exponential moment


def refinement_slope(coarse: float, fine: float) -> float:
    if coarse <= 0 or fine <= 0:
        return math.inf if fine < coarse else 0.0
    return math.log(coarse / fine) / math.log(2.0)


def cancellation_refinement(cfg: ExperimentConfig, kernels) -> tuple[dict, list]:
    """Single-slot identities at G_x and 2 G_x. An identity passes when it holds
    to roundoff on both grids or shrinks with log-log slope >= 0.9."""
    g = cfg.grids
    coarse = cancellation_check(initial_field(cfg), kernels)
    fine = cancellation_check(initial_field(cfg, G_x=2 * g.G_x), kernels)
    out, checks = {}, []
    for key in ("phi_second", "theta_first", "theta_second"):
        c, f = getattr(coarse, key), getattr(fine, key)
        sl = refinement_slope(c, f)
        exact = c <= ROUNDOFF and f <= ROUNDOFF
        out[key] = {"coarse": c, "fine": f, "slope": sl, "roundoff": exact}
        checks.append(Check(f"single-slot identity {key}", "cancellation", exact or sl >= 0.9,
                            max(c, f), ROUNDOFF if exact else None, f"slope={sl:.3g}"))
    return out, checks


def run_verify_cancellation(cfg: ExperimentConfig, **_):
    kernels = cfg.build_kernels()
    ch = cfg.chaos
    results, checks = {}, []
    results["single_slot"], c = cancellation_refinement(cfg, kernels)
    checks += c
    if cfg.kernels.dim == 1:
        G = ch.brute_G
        psi_f = initial_field(cfg, G_x=G, G_m=G, m_max=ch.brute_m_max or cfg.grids.m_max)
        bf = product_cancellation_bruteforce(psi_f, kernels, N=2, k=1, tol_cancel=ch.tol_cancel)
        results["bruteforce"] = bf.to_dict()
        checks.append(Check("tensor cancellation N=2 k=1", "cancellation-product", bf.passed,
                            bf.worst, ch.tol_cancel))
        ctrl = max((max(abs(p.phi), abs(p.theta)) for p in bf.controls), default=0.0)
        results["negative_control"] = ctrl
    # gamma bounds along the mean-field run
    psi0 = initial_field(cfg)
    res = solve(psi0, kernels, cfg.times.T, cfl=cfg.times.cfl, n_frames=cfg.times.n_frames,
                require_envelope=cfg.initial.envelope.get("require", True))
    picks = sorted({0, len(res.frames) // 2, len(res.frames) - 1})
    gam = []
    for k in picks:
        gr = gamma_bounds(res.frames[k], kernels, ch.b_max)
        gam.append({"t": res.frames[k].time, **gr.to_dict()})
    r1 = max(_ratio(g["gamma1_measured"], g["gamma1_bound"]) for g in gam)
    r2 = max(_ratio(g["gamma2_measured"], g["gamma2_bound"]) for g in gam)
    checks.append(Check("gamma_1 bound", "gamma-bounds", r1 <= 1.05, r1, 1.05, "measured/closed form"))
    checks.append(Check("gamma_2 bound", "gamma-bounds", r2 <= 1.05, r2, 1.05, "measured/closed form"))
    results["gamma"] = gam
    # exponential remainder moment
    params = ledger_params(psi0, kernels, Lam=ch.Lam, T=cfg.times.T, M_in=cfg.bounds.M_in)
    ledger = bounds_ledger(params)
    results["smallness"] = {"small_cond_1": ledger.small_cond_1, "small_cond_2": ledger.small_cond_2,
                            "small_lhs_1": ledger.small_lhs_1, "small_lhs_2": ledger.small_lhs_2,
                            "Lam": ch.Lam, "T_ss": ledger.T_ss}
    if ch.delta_samples > 0 and ch.delta_N_list and kernels.influence.form == "separable":
        ests = []
        for i, N in enumerate(ch.delta_N_list):
            seed = int(np.random.SeedSequence([cfg.seed, N, i]).generate_state(1)[0])
            ests.append(exp_moment_mc(psi0, kernels, N, ch.delta_samples, seed))
        results["delta"] = [e.to_dict() for e in ests]
        zero = kernels.interaction.is_zero and kernels.influence.is_zero
        if zero:
            checks.append(Check("delta equals 1 with both kernels off", "exp-moment",
                                all(e.delta == 1.0 for e in ests)))
        elif len(ests) >= 2:
            tr = delta_trend(ests, seed=cfg.seed)
            results["delta_trend"] = tr
            inside = -0.01 <= tr["ci"][0] and tr["ci"][1] <= 0.01
            checks.append(Check("no growth of delta in N", "exp-moment", abs(tr["slope"]) <= 0.01 and inside,
                                tr["slope"], 0.01, f"ci=[{tr['ci'][0]:.3g}, {tr['ci'][1]:.3g}]"))
    table = [{"t": g["t"], "gamma1_measured": g["gamma1_measured"], "gamma1_bound": g["gamma1_bound"],
              "gamma2_measured": g["gamma2_measured"], "gamma2_bound": g["gamma2_bound"]} for g in gam]
    for d in results.get("delta", []):
        table.append({"N": d["N"], "delta": d["mean"], "ci_lo": d["ci"][0], "ci_hi": d["ci"][1]})
    return RunOutput(results, checks, table)


def _ratio(a: float, b: float) -> float:
    if b > 0:
        return a / b
    return 0.0 if a == 0 else math.inf


# ---------------------------------------------------------------------------
# Kolmogorov equation at N = 2


def run_solve_kolmogorov(cfg: ExperimentConfig, **_):
    kernels = cfg.build_kernels()
    if cfg.kernels.dim != 1:
        raise ValueError("the Kolmogorov solver runs in d = 1")
    kc = cfg.kolmogorov
    psi1 = initial_field(cfg, G_x=kc.G, G_m=kc.G, m_max=kc.m_max)
    psiN0 = tensor_power(psi1, 2)
    frames = solve_kolmogorov(psiN0, kernels, cfg.times.T, cfl=cfg.times.cfl, n_frames=kc.n_frames)
    ent = entropy_inequality_check(frames, kernels, kc.tol_ent)
    checks = [Check("entropy inequality", "entropy-inequality", ent.satisfied, ent.worst_margin, 0.0,
                    f"tol={kc.tol_ent:g}")]
    swap = max(float(np.max(np.abs(f.values - f.swapped().values))) for f in frames)
    checks.append(Check("exchangeability", "exchangeability", swap <= ROUNDOFF, swap, ROUNDOFF))
    m0 = frames[0].mass()
    drift = max(abs(f.mass() - m0) for f in frames)
    checks.append(Check("mass conserved", "conservation", drift <= 1e-10, drift, 1e-10))
    # mean-field factor on the same grid and times
    mres = solve(psi1, kernels, cfg.times.T, cfl=cfg.times.cfl, n_frames=kc.n_frames,
                 require_envelope=False, b_values=(1,))
    ckp_rows = []
    for f, m in zip(frames, mres.frames):
        full_p = f.values.ravel() * f.cell_volume
        full_q = tensor_power(m, 2).values.ravel() * f.cell_volume
        H = relative_entropy(np.clip(full_p, 0, None) / full_p.sum(), full_q / full_q.sum(), 2)
        marg = marginal(f, 1)
        p1 = marg.values.ravel() * marg.cell_volume
        q1 = m.values.ravel() * m.cell_volume
        l1 = math.fsum(np.abs(p1 - q1))
        bound = math.sqrt(2 * H) if math.isfinite(H) else math.inf
        full = ckp_check(np.clip(full_p, 0, None) / full_p.sum(), full_q / full_q.sum(), 1, 1)
        ckp_rows.append({"t": f.time, "H_N": H, "l1_marginal": l1, "bound": bound,
                         "holds": l1 <= bound + 1e-12 and full["holds"]})
    checks.append(Check("CKP on marginal and factor", "ckp", all(r["holds"] for r in ckp_rows)))
    gr = gronwall_shape_check(frames, mres.frames)
    results = {"entropy": ent.to_dict(), "swap_error": swap, "mass_drift": drift,
               "ckp": ckp_rows, "gronwall": {"t": gr.t, "H": gr.H, "kappa": gr.kappa,
                                             "bound": gr.bound, "holds": gr.holds}}
    table = [{"t": t, "entropy": e, "rhs": r, "H_N": c["H_N"], "l1_marginal": c["l1_marginal"]}
             for t, e, r, c in zip(ent.t, ent.entropy, ent.rhs, ckp_rows)]
    return RunOutput(results, checks, table)


# ---------------------------------------------------------------------------
# particles and the chaos study


def run_simulate_particles(cfg: ExperimentConfig, threads: int = 1, store_every: int | None = None, **_):
    kernels = cfg.build_kernels()
    pc = cfg.particles
    ens0 = sample_initial(cfg.density(), pc.N, cfg.seed)
    traj = simulate(ens0, kernels, cfg.times.T, cfg.times.dt, pc.scheme,
                    store_every=store_every or cfg.times.store_every, tile=pc.tile, threads=threads)
    frames = []
    for e in traj:
        frames.append({"t": e.time, "total_mass": math.fsum(e.weights) / e.N,
                       "min_weight": float(np.min(e.weights)), "max_weight": float(np.max(e.weights))})
    last = traj[-1]
    checks = [Check("weights nonnegative", "positivity", all(r["min_weight"] >= 0 for r in frames)),
              Check("state finite", "finite-state", bool(np.all(np.isfinite(last.positions))
                                                         and np.all(np.isfinite(last.weights))))]
    results = {"N": pc.N, "frames": frames,
               "final": {"t": last.time, "positions": last.positions, "weights": last.weights}}
    return RunOutput(results, checks, trajectory_rows(traj))


def trajectory_rows(traj) -> list:
    """Rows t, particle, x1[, x2], m for every stored frame."""
    rows = []
    for e in traj:
        for i in range(e.N):
            r = {"t": e.time, "particle": i}
            for q in range(e.dim):
                r[f"x{q + 1}"] = float(e.positions[i, q])
            r["m"] = float(e.weights[i])
            rows.append(r)
    return rows


def study_config(cfg: ExperimentConfig, threads: int = 1) -> StudyConfig:
    ch = cfg.chaos
    return StudyConfig(kernels=cfg.build_kernels(), density=cfg.density(), N_list=tuple(ch.N_list),
                       replicas=ch.replicas, seeds=tuple(ch.seeds), T=cfg.times.T, dt=cfg.times.dt,
                       checkpoints=tuple(ch.checkpoints) or None, G_x=cfg.grids.G_x, G_m=cfg.grids.G_m,
                       m_max=cfg.grids.m_max, cfl=cfg.times.cfl, scheme=cfg.particles.scheme,
                       threads=threads, tile=cfg.particles.tile, delta_N=ch.delta_N,
                       delta_samples=ch.delta_samples, base_seed=cfg.seed)


def run_chaos_study(cfg: ExperimentConfig, threads: int = 1, **_):
    sc = study_config(cfg, threads)
    rep = marginal_error_study(sc)
    rows = rep.rows
    checks = [Check("errors nonnegative", "chaos-errors",
                    all(r["l1"] >= 0 and r["w1"] >= 0 for r in rows))]
    if len(rows) >= 3:
        checks.append(Check("slope finite", "chaos-slope", rep.slope is not None and math.isfinite(rep.slope),
                            rep.slope))
        if sc.kernels.interaction.is_zero and sc.kernels.influence.is_zero:
            checks.append(Check("free-case slope near -1/2", "chaos-slope",
                                rep.slope is not None and abs(rep.slope + 0.5) <= 0.15, rep.slope, 0.15))
        else:
            l1 = [r["l1"] for r in rows]
            checks.append(Check("median L1 error decreasing in N", "chaos-monotone",
                                all(b < a for a, b in zip(l1, l1[1:]))))
    table = [{"t": c["t"], "N": r["N"], "replicas": r["replicas"], "l1": r["l1"], "w1": r["w1"]}
             for c in rep.checkpoints for r in c["rows"]]
    return RunOutput(rep.to_dict(), checks, table)


SUBCOMMANDS = {
    "simulate-particles": run_simulate_particles,
    "solve-meanfield": run_solve_meanfield,
    "solve-kolmogorov": run_solve_kolmogorov,
    "chaos-study": run_chaos_study,
    "verify-bounds": run_verify_bounds,
    "verify-cancellation": run_verify_cancellation,
}
