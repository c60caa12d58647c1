import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from weightedchaos.densities import ModalDensity, ProductDensity
from weightedchaos.quadrature import circ_conv, circ_conv_fft, m_moment, moment_weights
from weightedchaos.transport import CFLError, cfl_number, upwind_periodic, upwind_walls


def test_exp_cell_averages_are_exact():
    d = ProductDensity(1, 0.0, m_max=10.0)
    G, M = 40, 10.0
    c = d.m_cell_averages(G, M)
    e = np.linspace(0, M, G + 1)
    ref = [integrate.quad(d.g, a, b)[0] / (b - a) for a, b in zip(e[:-1], e[1:])]
    assert np.allclose(c, ref, rtol=1e-12, atol=0)


def test_x_cell_averages_mean_one():
    d = ProductDensity(1, 0.4, 0.3)
    assert abs(np.mean(d.x_cell_averages(17)) - 1.0) < 1e-14


def test_bump_profile_normalized():
    d = ProductDensity(1, 0.0, m_profile="bump", m_lo=1.0, m_hi=4.0, m_max=6.0)
    assert abs(integrate.quad(d.g, 1.0, 4.0)[0] - 1.0) < 1e-8
    assert abs(np.sum(d.m_cell_averages(30, 6.0)) * 0.2 - 1.0) < 1e-12


def test_moment_of_exp_is_gamma():
    # int m^b e^{-m} dm = b! on [0, 30], reconstruction quadrature
    d = ProductDensity(1, 0.0, m_max=30.0)
    v = d.m_cell_averages(400, 30.0)
    for b in (1, 2, 3):
        assert abs(float(m_moment(v, 30.0, b)) - math.factorial(b)) < 1e-4


def test_moment_weights_match_moment():
    rng = np.random.default_rng(3)
    v = rng.random((5, 24))
    assert np.allclose(v @ moment_weights(24, 7.0, 1.0), m_moment(v, 7.0, 1.0), rtol=1e-13)


@given(st.integers(3, 12), st.integers(0, 2 ** 32 - 1))
def test_direct_and_fft_convolutions_agree(G, seed):
    rng = np.random.default_rng(seed)
    for d in (1, 2):
        f = rng.random((G,) * d)
        st_ = rng.normal(size=(G,) * d + (d,))
        assert np.allclose(circ_conv(st_, f, d), circ_conv_fft(st_, f, d), atol=1e-10, rtol=0)


def test_circ_conv_against_loop():
    rng = np.random.default_rng(4)
    G = 6
    s, f = rng.random(G), rng.random(G)
    ref = [sum(s[(k - j) % G] * f[j] for j in range(G)) for k in range(G)]
    assert np.allclose(circ_conv(s, f, 1), ref, rtol=1e-14)


def test_modal_density_cell_averages():
    d = ModalDensity(2, (((1, 0), 0.3, 0.4), ((1, 1), 0.2, 1.0)), m_max=10.0)
    G = 8
    avg = d.x_cell_averages(G)
    # cell (2, 5) by adaptive quadrature
    ref = integrate.dblquad(lambda y, x: d.f(np.array([x, y])), 2 / G, 3 / G, 5 / G, 6 / G)[0] * G * G
    assert abs(avg[2, 5] - ref) < 1e-10
    assert abs(np.mean(avg) - 1.0) < 1e-14


def test_modal_positivity_required():
    with pytest.raises(ValueError):
        ModalDensity(1, (((1,), 0.6, 0.0), ((2,), 0.5, 0.0)))


def test_modal_sampler_moments():
    d = ModalDensity(1, (((1,), 0.5, 0.0),), m_max=30.0)
    x, m = d.sample(200000, np.random.default_rng(5))
    # E cos(2 pi x) = c/2 under 1 + c cos(2 pi x)
    assert abs(np.mean(np.cos(2 * np.pi * x[:, 0])) - 0.25) < 4 / math.sqrt(200000)
    assert abs(np.mean(m) - 1.0) < 4 / math.sqrt(200000)


# --- transport ------------------------------------------------------------


def test_upwind_zero_velocity_is_identity():
    v = np.random.default_rng(0).random((8, 5))
    assert np.array_equal(upwind_periodic(v, np.zeros((8, 1)), 0.3, 0), v)
    assert np.array_equal(upwind_walls(v, np.zeros((8, 6)), 0.3, 1), v)


speeds = st.one_of(st.just(0.0), st.floats(1e-3, 1.0), st.floats(-1.0, -1e-3))


@given(st.integers(4, 40), speeds, st.floats(0.05, 1.0), st.integers(0, 1000))
def test_upwind_conserves_and_stays_positive(G, c, cfl, seed):
    rng = np.random.default_rng(seed)
    v = rng.random(G)
    vel = np.full(G, c)
    lam = cfl / abs(c) if c else 1.0        # dt/h with |c| dt/h = cfl <= 1
    out = upwind_periodic(v, vel, lam, 0)
    assert abs(out.sum() - v.sum()) <= 1e-12 * G
    assert out.min() >= -1e-15
    # walls: random face velocities, zero wall flux
    faces = rng.normal(size=G + 1)
    lamw = 0.45 / max(np.max(np.abs(faces)), 1e-12)
    outw = upwind_walls(v, faces, lamw, 0)
    assert abs(outw.sum() - v.sum()) <= 1e-12 * G
    assert outw.min() >= -1e-15


def test_cfl_number():
    assert cfl_number(np.array([0.5, -2.0]), 0.1, 0.25) == pytest.approx(0.8)
    assert isinstance(CFLError("x"), RuntimeError)
