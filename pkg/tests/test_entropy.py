import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import rel_entr

from weightedchaos.chaos.entropy import (DiscreteDistribution, change_of_law_check, ckp_check,
                                         relative_entropy, relative_entropy_report,
                                         variational_entropy_check)


def test_identical_laws():
    p = [0.2, 0.3, 0.5]
    assert relative_entropy(p, p) == 0.0


def test_point_mass_against_uniform():
    assert relative_entropy([1.0, 0.0], [0.5, 0.5]) == pytest.approx(math.log(2), abs=1e-15)


def test_not_absolutely_continuous():
    rep = relative_entropy_report([0.5, 0.5], [1.0, 0.0])
    assert rep.value == math.inf and not rep.absolutely_continuous


def test_bad_inputs():
    with pytest.raises(ValueError):
        DiscreteDistribution([0.5, 0.6])
    with pytest.raises(ValueError):
        DiscreteDistribution([1.5, -0.5])
    with pytest.raises(ValueError):
        relative_entropy([1.0], [0.5, 0.5])


probs = st.lists(st.floats(1e-6, 1.0), min_size=2, max_size=12)


@given(probs, st.integers(0, 10 ** 6))
def test_against_scipy(w, seed):
    p = DiscreteDistribution.normalized(w)
    q = DiscreteDistribution.normalized(np.random.default_rng(seed).random(len(w)) + 1e-3)
    ref = math.fsum(rel_entr(p.probs, q.probs))
    assert abs(relative_entropy(p, q) - max(ref, 0.0)) <= 1e-12


def test_ckp_example():
    r = ckp_check([1.0, 0.0], [0.5, 0.5])
    assert r["l1"] == 1.0 and r["bound"] == pytest.approx(math.sqrt(2 * math.log(2)), abs=1e-15)
    assert r["holds"] and r["bound"] <= 1.178


@given(probs, st.integers(0, 10 ** 6), st.integers(1, 4))
def test_ckp_sweep(w, seed, k):
    p = DiscreteDistribution.normalized(w)
    q = DiscreteDistribution.normalized(np.random.default_rng(seed).random(len(w)) + 1e-3)
    # k-particle laws with entropy normalized by k
    assert ckp_check(p, q, k=k, normalizer=k)["holds"]


@given(probs, st.lists(st.lists(st.floats(-20, 20), min_size=12, max_size=12), min_size=1, max_size=5))
def test_variational_sweep(w, phis):
    p = DiscreteDistribution.normalized(w)
    cands = [np.asarray(phi[:p.size]) for phi in phis]
    r = variational_entropy_check(p, cands)
    assert r["all_below"] and r["gap"] >= -1e-12
    assert r["equality_gap"] <= 1e-12


@given(probs, st.integers(0, 10 ** 6), st.integers(1, 50), st.floats(-30, 30))
def test_change_of_law_sweep(w, seed, N, scale):
    rng = np.random.default_rng(seed)
    p = DiscreteDistribution.normalized(w)
    q = DiscreteDistribution.normalized(rng.random(len(w)) + 1e-3)
    phi = scale * rng.standard_normal(len(w))
    r = change_of_law_check(p, q, phi, N, normalizer=1.0)
    assert r["holds"] and math.isfinite(r["rhs"])


def test_change_of_law_large_exponent():
    r = change_of_law_check([0.5, 0.5], [0.5, 0.5], [800.0, 0.0], 10, normalizer=1.0)
    assert math.isfinite(r["rhs"]) and r["holds"]
