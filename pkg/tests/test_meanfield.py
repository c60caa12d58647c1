import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from weightedchaos.densities import ProductDensity
from weightedchaos.kernels import (ChiSpec, InfluenceKernel, InteractionKernel, Kernels, SSpec,
                                   constant_kernel, zero_influence, zero_interaction, zero_kernels)
from weightedchaos.meanfield import (DensityField, EnvelopeError, advance, distance, log_gradients,
                                     moment_report, mu_equation_residual, positivity_band, product_field,
                                     solve, solve_mu_reduced, stability_check, velocity_fields,
                                     weighted_moment)
from weightedchaos.transport import CFLError

BUMP = ChiSpec("bump", (0.5, 5.5))


def sep(amp=0.1, s_type="sin", offset=0.0, dim=1):
    return InfluenceKernel(dim, "separable", SSpec(s_type, amp, offset), BUMP, BUMP)


def exp_field(G_x=16, G_m=60, m_max=12.0, amp=0.0, dim=1):
    return product_field(ProductDensity(dim, amp, m_max=m_max), G_x, G_m, m_max)


def test_mu_of_truncated_exponential():
    psi = exp_field(8, 400, 20.0)
    mu = psi.mu().values
    assert np.max(np.abs(mu - (1 - 21 * math.exp(-20)))) <= 1e-6


def test_zero_influence_gives_zero_S_fields():
    f = velocity_fields(exp_field(amp=0.3), Kernels(constant_kernel(0.2), zero_influence()))
    assert not np.any(f.Smean) and not np.any(f.dSmean_dm)


def test_x_uniform_psi_kills_odd_kernels():
    # odd s and zero-mean a integrate to zero against a constant-in-x density
    psi = exp_field(G_x=16, dim=2, G_m=20)
    k = Kernels(InteractionKernel(2, "perp-gradient-trig", (0.3,)), sep(0.2, "sin", dim=2))
    f = velocity_fields(psi, k)
    assert np.max(np.abs(f.A)) < 1e-15
    assert np.max(np.abs(f.Smean)) < 1e-15


def random_field(seed, G_x=8, G_m=12, m_max=8.0):
    v = np.random.default_rng(seed).random((G_x, G_m)) * np.exp(-np.linspace(0, m_max, G_m))
    psi = DensityField(v, m_max)
    return psi.with_values(v / psi.mass())


@given(st.integers(0, 10 ** 6), st.floats(0.01, 1.0), st.floats(-1, 1))
def test_velocity_field_bounds(seed, amp, c):
    psi = random_field(seed)
    k = Kernels(constant_kernel(c), sep(amp, "sign-sin"))
    f = velocity_fields(psi, k)
    S = k.influence
    mu_l1 = math.fsum(np.abs(f.mu)) * psi.h_x
    assert np.max(np.abs(f.Smean)) <= S.S0 * (1 + 1e-12)
    assert np.max(np.abs(f.dSmean_dm)) <= S.S1 * (1 + 1e-12)
    assert np.max(np.abs(f.A)) <= abs(c) * mu_l1 * (1 + 1e-12)


def test_fft_matches_direct():
    psi = random_field(7, 16, 10)
    k = Kernels(constant_kernel(0.1), sep(0.3, "cos"))
    a, b = velocity_fields(psi, k), velocity_fields(psi, k, fft=True)
    assert np.max(np.abs(a.Smean - b.Smean)) <= 1e-10


# --- advance --------------------------------------------------------------


def test_zero_fields_leave_psi_unchanged():
    psi = random_field(1)
    f = velocity_fields(psi, zero_kernels())
    out = advance(psi, f, 0.37)
    assert np.array_equal(out.values, psi.values)


def test_constant_shift_conserves_mass():
    psi = random_field(2, 32, 16)
    k = Kernels(constant_kernel(0.5), zero_influence())
    f = velocity_fields(psi, k)
    dt = 0.4 * psi.h_x / np.max(np.abs(f.A))
    out = advance(psi, f, dt)
    assert abs(out.mass() - psi.mass()) <= 1e-14


def test_cfl_violation_refused():
    psi = random_field(3)
    f = velocity_fields(psi, Kernels(constant_kernel(1.0), zero_influence()))
    with pytest.raises(CFLError):
        advance(psi, f, 10.0)


def _translate_back_error(G):
    # one full period at unit speed: exact solution is the initial field
    psi = product_field(ProductDensity(1, 0.5, m_max=4.0), G, 4, 4.0)
    m0 = psi.mu().values.sum() / G
    res = solve(psi, Kernels(constant_kernel(1.0 / m0), zero_influence()), 1.0, n_frames=1,
                require_envelope=False, b_values=(1,))
    return distance(res.frames[-1], psi)


def test_translate_back_first_order():
    e1, e2 = _translate_back_error(64), _translate_back_error(128)
    slope = math.log(e1 / e2) / math.log(2)
    assert 0.7 <= slope <= 1.1


# --- solve ----------------------------------------------------------------


def test_initial_third_moment_is_seven():
    psi = exp_field(4, 400, 30.0)
    assert abs(weighted_moment(psi, 3, 1) - 7.0) <= 1e-4


def test_envelope_required():
    psi = product_field(ProductDensity(1, 0.0, m_profile="bump", m_lo=1.0, m_hi=3.0, m_max=6.0), 8, 24, 6.0)
    with pytest.raises(EnvelopeError):
        solve(psi, zero_kernels(), 0.1)


def test_solve_mass_and_max_principle():
    psi = exp_field(16, 48, 12.0, amp=0.3)
    k = Kernels(constant_kernel(0.2), sep(0.3, "sin", 0.5))
    res = solve(psi, k, 0.5, n_frames=5)
    S1 = k.influence.S1
    for f, rep in zip(res.frames, res.moments):
        assert abs(f.mass() - 1.0) <= 1e-8
        assert f.values.min() >= 0.0
        assert rep.psi_linf <= math.exp(S1 * f.time) * res.moments[0].psi_linf * (1 + 1e-3)
        assert all(math.isfinite(v) and v >= 0 for v in rep.table.values())
    lg = res.loggrads[-1]
    assert math.isfinite(lg.dm_log) and math.isfinite(lg.dx_log)


def test_log_gradients_of_exponential():
    # log psi = -m + const: d_m log psi = -1 in the interior, grad_x = 0
    lg = log_gradients(exp_field(8, 60, 12.0))
    assert abs(lg.dm_log - 1.0) < 1e-3 and lg.dx_log == 0.0


def test_positivity_band_at_t0():
    psi = exp_field(8, 60, 12.0, amp=0.2)
    ok, lo, hi, _ = positivity_band(psi, 1.5, 0.1, 0.1)
    assert ok and lo >= 1.0 and hi <= 1.0


def test_mu_equation_residual_refines():
    k = Kernels(constant_kernel(0.1), sep(0.3, "sin", 0.5))
    res = []
    for G_x, G_m in ((8, 24), (16, 48)):
        psi = exp_field(G_x, G_m, 12.0, amp=0.3)
        r = solve(psi, k, 0.2, n_frames=8, b_values=(1,))
        res.append(mu_equation_residual(r.frames, k))
    assert math.log(res[0] / res[1]) / math.log(2) >= 0.7


# --- reduced mu-equation --------------------------------------------------


def reduced(s_type="const", amp=1.0, a=None):
    S = InfluenceKernel(1, "product-weights", SSpec(s_type, amp))
    return Kernels(a or zero_interaction(), S)


def test_reduced_static_when_off():
    mu0 = DensityField(1.0 + 0.3 * np.cos(2 * np.pi * (np.arange(16) + 0.5) / 16), None)
    r = solve_mu_reduced(mu0, reduced("zero", 0.0), 0.5, n_frames=2)
    assert np.array_equal(r.frames[-1].values, mu0.values)


def test_reduced_riccati():
    # s = 1, a = 0: M' = M^2, M(t) = M0 / (1 - M0 t)
    mu0 = DensityField(np.full(8, 0.8), None)
    M0 = mu0.mass()
    r = solve_mu_reduced(mu0, reduced(), 0.5 / M0, n_frames=5)
    for f, M in zip(r.frames, r.totals):
        assert abs(M - M0 / (1 - M0 * f.time)) <= 1e-3


def test_reduced_rejects_bounded_kernel():
    with pytest.raises(ValueError):
        solve_mu_reduced(DensityField(np.ones(4), None), Kernels(zero_interaction(), sep()), 0.1)


# --- stability ------------------------------------------------------------


def test_identical_data_stay_identical():
    psi = exp_field(16, 48, 12.0, amp=0.3)
    k = Kernels(constant_kernel(0.2), sep(0.3, "sin", 0.5))
    rep = stability_check(psi, psi, k, 0.3, n_frames=3)
    assert max(rep.D) <= 1e-12


def test_inert_fields_keep_distance():
    a = exp_field(16, 48, 12.0, amp=0.3)
    b = exp_field(16, 48, 12.0, amp=0.1)
    rep = stability_check(a, b, zero_kernels(), 0.3, n_frames=3)
    assert all(d == rep.D[0] for d in rep.D)


def test_shifted_data_rate_is_finite():
    a = exp_field(16, 48, 12.0, amp=0.3)
    b = a.with_values(np.roll(a.values, 1, axis=0))
    k = Kernels(constant_kernel(0.2), sep(0.3, "sin", 0.5))
    rep = stability_check(a, b, k, 0.5, n_frames=5)
    assert rep.holds and math.isfinite(rep.C_hat)
    # recorded, not a sharp constant: generous band
    assert rep.C_hat <= 5 * (0.2 + k.influence.S0 + k.influence.S1) * 10


def test_moment_report_n0():
    rep = moment_report(exp_field(4, 400, 30.0), b_values=(1, 2, 3))
    ref = max((1 + math.factorial(b)) ** (1 / b) / b for b in (1, 2, 3))
    assert abs(rep.n0_estimate - ref) < 1e-4
