import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from weightedchaos.chaos.combinatorics import (IndexTuple, all_tuples, cancellation_case,
                                               qualifying_pairs, reduced_set)

from conftest import ROOT

# frozen by scripts/enumerate_index_sets.py, which works from the definitions alone
FIXTURE = json.loads((ROOT / "tests" / "fixtures" / "index_sets.json").read_text())


@pytest.mark.parametrize("entry", FIXTURE, ids=lambda e: f"N{e['N']}-p{e['p']}")
def test_sets_match_enumeration(entry):
    N, p = entry["N"], entry["p"]
    assert [list(I.entries) for I in reduced_set(N, p)] == entry["reduced"]
    got = [{"I": list(I.entries), "J": list(J.entries), "case": cancellation_case(I, J)}
           for I, J in qualifying_pairs(N, p)]
    assert got == entry["pairs"]


def test_multiplicities_example():
    I = IndexTuple((1, 3, 3), 3)
    assert I.multiplicities == (1, 0, 2) and I.m == 1 and I.n == 1
    assert not I.in_reduced_set()
    assert IndexTuple((2, 1, 2), 3).in_reduced_set()


def test_entries_range_checked():
    with pytest.raises(ValueError):
        IndexTuple((0, 1), 2)


@given(st.integers(2, 4), st.integers(1, 3))
def test_every_qualifying_pair_cancels(N, p):
    for I, J in qualifying_pairs(N, p):
        assert cancellation_case(I, J) != "none"


@given(st.integers(1, 4), st.integers(1, 4))
def test_tuple_count_and_mass(N, p):
    ts = list(all_tuples(N, p))
    assert len(ts) == N ** p
    assert all(sum(t.multiplicities) == p for t in ts)
    assert all(t.m + t.n == sum(1 for a in t.multiplicities if a) for t in ts)
