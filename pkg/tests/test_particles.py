import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from weightedchaos.densities import ProductDensity
from weightedchaos.kernels import (ChiSpec, InfluenceKernel, InteractionKernel, Kernels, SSpec,
                                   constant_kernel, zero_influence, zero_kernels)
from weightedchaos.meanfield import DensityField, product_field
from weightedchaos.particles import (ParticleEnsemble, SamplingError, drift, drift_reference,
                                     sample_initial, simulate, weighted_empirical)

BUMP = ChiSpec("bump", (0.5, 5.5))


def smooth_kernels(dim=2, amp=0.05, s_amp=0.3):
    a = InteractionKernel(dim, "perp-gradient-trig", (amp,)) if dim == 2 else constant_kernel(amp)
    S = InfluenceKernel(dim, "separable", SSpec("sin", s_amp, 0.5), BUMP, BUMP)
    return Kernels(a, S)


def random_ensemble(N, dim, seed):
    rng = np.random.default_rng(seed)
    return ParticleEnsemble(rng.random((N, dim)), rng.exponential(size=N) + 0.5)


# --- drift ----------------------------------------------------------------


def test_zero_kernels_zero_drift():
    dx, dm = drift(random_ensemble(10, 2, 0), zero_kernels(2))
    assert not np.any(dx) and not np.any(dm)


def test_constant_interaction_drift():
    ens = random_ensemble(7, 1, 1)
    dx, _ = drift(ens, Kernels(constant_kernel(0.3), zero_influence()))
    assert np.allclose(dx, 0.3 * ens.weights.mean(), rtol=0, atol=1e-15)


def test_tabulated_two_particle_drift():
    # table cell k covers z in [k/G - 1/2, (k+1)/G - 1/2); fill with a sine at cell centres
    G = 20
    centres = (np.arange(G) + 0.5) / G - 0.5
    table = (0.1 * np.sin(2 * np.pi * centres))[:, None]
    a = InteractionKernel(1, "tabulated", table=table)
    ens = ParticleEnsemble(np.array([[0.1], [0.43]]), np.array([1.0, 2.0]))
    dx, _ = drift(ens, Kernels(a, zero_influence()))
    # hand lookup, points kept off cell faces: z = 0 -> cell 10 (centre 0.025);
    # z = 0.33 -> cell 16 (centre 0.325); z = -0.33 -> cell 3 (centre -0.325)
    a0, ap, am = (0.1 * math.sin(2 * math.pi * c) for c in (0.025, 0.325, -0.325))
    assert dx[0, 0] == pytest.approx(0.5 * (1.0 * a0 + 2.0 * ap), abs=1e-15)
    assert dx[1, 0] == pytest.approx(0.5 * (1.0 * am + 2.0 * a0), abs=1e-15)


def test_influence_drift_two_particles():
    S = InfluenceKernel(1, "separable", SSpec("sin", 0.4), BUMP, BUMP)
    ens = ParticleEnsemble(np.array([[0.1], [0.35]]), np.array([2.0, 3.0]))
    _, dm = drift(ens, Kernels(constant_kernel(0.0), S))

    def chi(m):
        u = (2 * m - 6.0) / 5.0
        return math.exp(1 - 1 / (1 - u * u)) if abs(u) < 1 else 0.0

    s01 = 0.4 * math.sin(2 * math.pi * (0.1 - 0.35))
    ref0 = 0.5 * (chi(2.0) * chi(2.0) * 0.0 + chi(2.0) * chi(3.0) * s01)
    ref1 = 0.5 * (chi(3.0) * chi(2.0) * (-s01))
    assert dm[0] == pytest.approx(ref0, abs=1e-15)
    assert dm[1] == pytest.approx(ref1, abs=1e-15)


@given(st.integers(1, 40), st.sampled_from([1, 3, 8, 64]), st.sampled_from([1, 4]), st.integers(0, 99))
def test_tiling_and_threads_bitwise(N, tile, threads, seed):
    ens = random_ensemble(N, 2, seed)
    k = smooth_kernels()
    full = drift(ens, k, tile=None)
    tiled = drift(ens, k, tile=tile, threads=threads)
    assert np.array_equal(full[0], tiled[0]) and np.array_equal(full[1], tiled[1])


def test_drift_matches_double_loop():
    ens = random_ensemble(12, 2, 5)
    k = smooth_kernels()
    dx, dm = drift(ens, k)
    rx, rm = drift_reference(ens, k)
    assert np.max(np.abs(dx - rx)) <= 1e-12 and np.max(np.abs(dm - rm)) <= 1e-12


# --- simulate -------------------------------------------------------------


def test_zero_kernels_state_unchanged():
    ens = random_ensemble(20, 2, 2)
    out = simulate(ens, zero_kernels(2), 1.0, 0.1)[-1]
    assert np.array_equal(out.positions, ens.positions) and np.array_equal(out.weights, ens.weights)


def test_zero_influence_keeps_weights():
    ens = random_ensemble(20, 2, 3)
    out = simulate(ens, Kernels(InteractionKernel(2, "perp-gradient-trig", (0.1,)), zero_influence(2)),
                   0.5, 0.05)[-1]
    assert np.array_equal(out.weights, ens.weights)


def _final_state(ens, k, dt, scheme):
    f = simulate(ens, k, 0.4, dt, scheme, store_every=10 ** 6)[-1]
    return np.concatenate([f.positions.ravel(), f.weights])


def test_heun_euler_gap_is_first_order():
    ens = random_ensemble(30, 2, 4)
    k = smooth_kernels(amp=0.1)
    gaps = [np.max(np.abs(_final_state(ens, k, dt, "heun") - _final_state(ens, k, dt, "euler")))
            for dt in (0.04, 0.02)]
    assert 1.5 <= gaps[0] / gaps[1] <= 2.5


def test_step_count_is_ceiling():
    traj = simulate(random_ensemble(3, 1, 0), zero_kernels(), 1.0, 0.3)
    assert len(traj) == 5 and traj[-1].time == pytest.approx(1.0, abs=1e-15)


def test_bad_step_refused():
    with pytest.raises(ValueError):
        simulate(random_ensemble(3, 1, 0), zero_kernels(), 1.0, 0.0)


@settings(max_examples=15)
@given(st.integers(2, 12), st.integers(0, 999))
def test_permutation_commutes(N, seed):
    ens = random_ensemble(N, 2, seed)
    perm = np.random.default_rng(seed).permutation(N)
    k = smooth_kernels()
    a = simulate(ens, k, 0.2, 0.05)[-1].permuted(perm)
    b = simulate(ens.permuted(perm), k, 0.2, 0.05)[-1]
    assert np.max(np.abs(a.positions - b.positions)) <= 1e-12
    assert np.max(np.abs(a.weights - b.weights)) <= 1e-12


@settings(max_examples=15)
@given(st.integers(2, 20), st.integers(0, 999), st.floats(0.01, 0.2))
def test_mass_change_per_step_bounded(N, seed, dt):
    ens = random_ensemble(N, 2, seed)
    k = smooth_kernels()
    traj = simulate(ens, k, 5 * dt, dt)
    S0 = k.influence.S0
    tot = [weighted_empirical(e).total_mass for e in traj]
    for a, b in zip(tot, tot[1:]):
        assert abs(b - a) <= S0 * dt * (1 + 1e-9) + 1e-15


@given(st.integers(1, 20), st.integers(0, 999))
def test_position_velocity_bounded(N, seed):
    ens = random_ensemble(N, 2, seed)
    k = smooth_kernels()
    dx, _ = drift(ens, k)
    bound = k.interaction.sup_bound * ens.weights.mean()
    assert np.max(np.linalg.norm(dx, axis=1)) <= bound * (1 + 1e-12)


# --- sampling -------------------------------------------------------------


def test_weighted_empirical_masses():
    e = weighted_empirical(ParticleEnsemble(np.array([[0.2], [0.7]]), np.array([1.0, 3.0])))
    assert np.array_equal(e.masses, [0.5, 1.5]) and e.total_mass == 2.0


def test_sampler_weight_moments():
    N = 20000
    dens = ProductDensity(1, 0.3, m_max=30.0)
    ens = sample_initial(dens, N, seed=11)
    m = ens.weights
    assert abs(m.mean() - 1.0) <= 3 / math.sqrt(N)
    assert abs((m * m).mean() - 2.0) <= 3 * math.sqrt(20.0 / N)
    assert abs(weighted_empirical(ens).total_mass - 1.0) <= 3 / math.sqrt(N)
    assert np.all((ens.positions >= 0) & (ens.positions < 1))


def test_sampler_is_seeded():
    dens = ProductDensity(2, 0.2, m_max=12.0)
    a, b = sample_initial(dens, 50, 3), sample_initial(dens, 50, 3)
    c = sample_initial(dens, 50, 4)
    assert np.array_equal(a.positions, b.positions) and np.array_equal(a.weights, b.weights)
    assert not np.array_equal(a.weights, c.weights)


def test_grid_field_sampling():
    psi = product_field(ProductDensity(1, 0.3, m_max=12.0), 16, 48, 12.0)
    ens = sample_initial(psi, 5000, 0)
    assert abs(ens.weights.mean() - 1.0) < 0.1


def test_non_product_field_refused():
    v = np.ones((4, 6))
    v[0, 0] = 5.0
    with pytest.raises(SamplingError):
        sample_initial(DensityField(v, 6.0), 10, 0)
    ens = sample_initial(DensityField(v, 6.0), 10, 0, joint=True)
    assert ens.N == 10
