import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sospath import approx_factor, bell, make_rng
from sospath import combinatorics as comb


def test_partitions_small():
    assert list(comb.partitions(0)) == [()]
    assert set(comb.partitions(3)) == {(3,), (2, 1), (1, 1, 1)}
    assert len(list(comb.partitions(6))) == 11


@given(st.integers(1, 9))
def test_partitions_are_non_increasing(p):
    parts = list(comb.partitions(p))
    assert len(parts) == len(set(parts))
    for lam in parts:
        assert sum(lam) == p
        assert all(a >= b >= 1 for a, b in zip(lam, lam[1:]))


def test_bell_boundary():
    for k in range(7):
        assert bell(0, k) == 1 and bell(k, 0) == 1


def test_bell_one_dimensional():
    assert [bell(1, p) for p in range(7)] == [1, 1, 2, 5, 15, 52, 203]
    assert [bell(1, p) for p in range(7)] == [len(comb.set_partitions(p)) for p in range(7)]


def test_bell_two_dimensional():
    assert bell(2, 2) == 3 and bell(2, 3) == 12


@pytest.mark.parametrize("d", range(4))
def test_bell_matches_refinement_chains(d):
    for p in range(7):
        assert bell(d, p) == comb.refinement_chain_count(d, p)


def test_bell_is_exact_integer():
    assert isinstance(bell(6, 30), int)
    assert bell(1, 30) == 846749014511809332450147


@pytest.mark.parametrize("d", range(1, 5))
def test_egf_matches(d):
    coeffs = comb.bell_egf_coefficients(d, 8)
    assert coeffs == [bell(d, p) for p in range(9)]


def test_labeled_partition_counts():
    for p in range(1, 8):
        by_shape = Counter(tuple(sorted(map(len, blocks), reverse=True))
                           for blocks in comb.set_partitions(p))
        for lam in comb.partitions(p):
            assert comb.labeled_partition_count(lam) == by_shape[lam]
        assert sum(comb.labeled_partition_count(lam) for lam in comb.partitions(p)) == bell(1, p)


def test_approx_factor():
    assert approx_factor(1, 2) == pytest.approx(math.sqrt(2))
    for d in range(7):
        assert approx_factor(d, 1) == 1


def test_approx_factor_growth_bound():
    C = comb.asymptotic_constant(6, 6)
    for d in range(1, 7):
        for p in range(1, 7):
            assert approx_factor(d, p) <= C * p * d ** (1 - 1 / p) + 1e-12


def test_iterated_poisson_small_cases():
    rng = make_rng(1)
    assert all(comb.iterated_poisson_sample(0, rng) == 1 for _ in range(10))
    z = comb.iterated_poisson_samples(1, 200_000, rng)
    se = z.std() / math.sqrt(len(z))
    assert abs(z.mean() - 1) <= 4 * se


def test_iterated_poisson_deterministic():
    a = comb.iterated_poisson_samples(3, 1000, make_rng(9))
    b = comb.iterated_poisson_samples(3, 1000, make_rng(9))
    assert np.array_equal(a, b)


def test_majorizes():
    assert comb.majorizes((2, 0), (1, 1))
    assert comb.majorizes((3, 1), (2, 2))
    assert not comb.majorizes((1, 1), (2, 0))
    assert not comb.majorizes((2, 1), (1, 1))
    assert comb.majorizes((2, 2), (2, 2))


@given(st.lists(st.integers(0, 4), min_size=1, max_size=4))
def test_majorizes_reflexive(a):
    assert comb.majorizes(a, a)


def test_majorizing_pairs_valid():
    pairs = comb.majorizing_pairs(4)
    assert pairs
    for a, b in pairs:
        assert sum(a) == sum(b) <= 4
        assert comb.majorizes(a, b)
