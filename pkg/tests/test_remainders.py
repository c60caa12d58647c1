import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from weightedchaos.chaos.remainders import (ExpMomentEstimate, FloorError, cancellation_check,
                                            delta_trend, exp_moment_mc, gamma_bounds, phi_theta,
                                            product_cancellation_bruteforce)
from weightedchaos.densities import ProductDensity
from weightedchaos.kernels import (ChiSpec, InfluenceKernel, InteractionKernel, Kernels, SSpec,
                                   constant_kernel, zero_influence, zero_interaction, zero_kernels)
from weightedchaos.meanfield import product_field

BUMP = ChiSpec("bump", (0.5, 5.5))


def field(G=12, Gm=12, m_max=8.0, amp=0.3, dim=1):
    return product_field(ProductDensity(dim, amp, m_max=m_max), G, Gm, m_max)


def sep(s_type="sin", amp=0.3, chi=BUMP, dim=1):
    return InfluenceKernel(dim, "separable", SSpec(s_type, amp), chi, chi)


pts = st.tuples(st.floats(0, 0.999), st.floats(0.6, 6.0), st.floats(0, 0.999), st.floats(0.6, 6.0))


@settings(max_examples=20)
@given(pts)
def test_phi_vanishes_without_influence(p):
    x, m, y, n = p
    phi, _ = phi_theta(field(), Kernels(constant_kernel(0.2), zero_influence()), x, m, y, n)
    assert phi == 0.0


@settings(max_examples=20)
@given(pts)
def test_theta_vanishes_without_interaction(p):
    x, m, y, n = p
    _, theta = phi_theta(field(), Kernels(zero_interaction(), sep()), x, m, y, n)
    assert theta == 0.0


@settings(max_examples=20)
@given(pts)
def test_theta_vanishes_for_x_constant_density(p):
    x, m, y, n = p
    _, theta = phi_theta(field(amp=0.0), Kernels(constant_kernel(0.2), sep()), x, m, y, n)
    # cell averages of a flat profile agree only to roundoff, divided by 2h in the gradient
    assert abs(theta) <= 1e-13


def test_floor_error():
    psi = product_field(ProductDensity(1, 0.0, m_profile="bump", m_lo=1.0, m_hi=3.0, m_max=6.0), 8, 12, 6.0)
    with pytest.raises(FloorError):
        phi_theta(psi, Kernels(constant_kernel(0.1), sep()), 0.2, 5.0, 0.4, 2.0)


def test_cancellation_exact_zero_for_zero_kernels():
    rep = cancellation_check(field(), zero_kernels())
    assert rep.phi_second == 0.0 and rep.theta_first == 0.0 and rep.theta_second == 0.0


def test_bruteforce_zero_influence_exact():
    k = Kernels(zero_interaction(), zero_influence())
    rep = product_cancellation_bruteforce(field(8, 8), k, N=2, k=1)
    assert rep.pairs and rep.passed and rep.worst == 0.0


def test_bruteforce_limits():
    with pytest.raises(ValueError):
        product_cancellation_bruteforce(field(20, 8), zero_kernels(), N=2)
    with pytest.raises(ValueError):
        product_cancellation_bruteforce(field(8, 8), zero_kernels(), N=4)


def test_gamma_trivial():
    rep = gamma_bounds(field(), zero_kernels())
    assert rep.gamma1_measured == 0.0 and rep.gamma2_measured == 0.0 and rep.holds()
    with pytest.raises(ValueError):
        gamma_bounds(field(), zero_kernels(), b_max=4)


def test_gamma_measured_below_closed_form():
    rep = gamma_bounds(field(16, 24, 12.0), Kernels(constant_kernel(0.2), sep("sin", 0.3)))
    assert rep.holds() and rep.gamma1_measured > 0 and rep.gamma2_measured > 0


@pytest.mark.parametrize("N", [1, 2, 8, 32])
@pytest.mark.parametrize("seed", [0, 5])
def test_exp_moment_is_one_without_kernels(N, seed):
    est = exp_moment_mc(field(), zero_kernels(), N, 100, seed)
    assert est.delta == 1.0 and tuple(est.ci) == (1.0, 1.0)


def test_weight_independent_influence_has_no_remainder():
    # S = c with constant cutoffs: phi = c L (1 - mass) = 0 up to roundoff
    k = Kernels(zero_interaction(), sep("const", 0.4, ChiSpec("const")))
    est = exp_moment_mc(field(), k, 8, 400, 3)
    assert abs(est.delta - 1.0) <= 1e-10


def test_product_weights_rejected():
    k = Kernels(zero_interaction(), InfluenceKernel(1, "product-weights", SSpec("const", 1.0)))
    with pytest.raises(ValueError):
        exp_moment_mc(field(), k, 4, 10, 0)


def test_exp_moment_deterministic():
    k = Kernels(constant_kernel(0.1), sep())
    a = exp_moment_mc(field(), k, 4, 300, 9, batch=100)
    b = exp_moment_mc(field(), k, 4, 300, 9, batch=100)
    assert a.delta == b.delta and a.ci == b.ci
    assert a.delta >= 1.0 and a.ci[0] <= a.delta <= a.ci[1]


def test_delta_trend_recovers_slope():
    ests = [ExpMomentEstimate(N, 1000, math.exp(0.01 * N), (math.exp(0.01 * N) * 0.999,
                              math.exp(0.01 * N) * 1.001), 0, 0.0, 0.0) for N in (8, 16, 32, 64)]
    tr = delta_trend(ests)
    assert tr["slope"] == pytest.approx(0.01, abs=1e-12)
    assert tr["ci"][0] <= 0.01 <= tr["ci"][1]
