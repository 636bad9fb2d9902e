import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from lshmem.hashing import (
    MERSENNE_61,
    EmptySetError,
    HashConfigError,
    MinwiseAllocator,
    MinwiseHash,
    PoweredRehashedLsh,
    UniversalHash,
    derive,
    fold_key,
    kernel_value,
    minhash,
    mix64,
    mulmod61,
    pair_hash,
    poly61,
    powered_rehash,
    sample_universal,
    universal_hash,
)

P = MERSENNE_61

# frozen from tests/oracles/make_oracles.py (plain-integer reference)
MIX64 = {0: 16294208416658607535, 1: 10451216379200822465, 12345: 2454886589211414944,
         2**64 - 1: 16490336266968443936}
LMA_2024 = {(3, 17, 40, 41): [490, 112, 187, 980, 504, 218, 176, 241],
            (0, 1, 2, 3, 4): [919, 214, 820, 775, 779, 78, 303, 139]}


def batched_mins(alloc, items):
    """Minhash values ``(..., d, n_h)`` of one set for every batched allocator."""
    vals = poly61(alloc.perm[..., None, :], np.asarray(items, dtype=np.uint64))
    return vals.min(axis=-1)


class TestUniversalHash:
    def test_examples(self):
        assert universal_hash(UniversalHash((0, 1), 7, 3), 5) == 2
        assert universal_hash(UniversalHash((2, 3), 11, 5), 4) == 3
        h = UniversalHash((3,), 7, 7)
        assert {h(x) for x in range(50)} == {3}

    @pytest.mark.parametrize("kw", [
        {"coefficients": (0, 1), "prime": 8, "range": 3},
        {"coefficients": (0, 1), "prime": 7, "range": 0},
        {"coefficients": (0, 1), "prime": 7, "range": 8},
        {"coefficients": (0, 0), "prime": 7, "range": 3},
        {"coefficients": (7, 1), "prime": 7, "range": 3},
    ])
    def test_construction_errors(self, kw):
        with pytest.raises(HashConfigError):
            UniversalHash(**kw)

    def test_negative_input(self):
        with pytest.raises(ValueError):
            UniversalHash((0, 1), 7, 3)(-1)

    def test_sample_is_deterministic(self):
        assert sample_universal(7, 2).coefficients == sample_universal(7, 2).coefficients
        assert sample_universal(7, 2).coefficients == (900399368251963081, 1008502492648441142)
        assert sample_universal(7, 2).coefficients != sample_universal(8, 2).coefficients

    def test_sample_errors(self):
        with pytest.raises(HashConfigError):
            sample_universal(1, k=0)
        with pytest.raises(HashConfigError):
            sample_universal(1, k=2, prime=15)

    def test_small_prime_through_sympy(self):
        h = sample_universal(3, k=3, prime=10007, range=10)
        assert all(0 <= h(x) < 10 for x in range(100))

    def test_chi_square_uniform(self):
        h = sample_universal(11, k=2, range=16)
        counts = np.bincount(h.hash_array(np.arange(100_000)), minlength=16)
        assert chisquare(counts).pvalue > 0.001

    def test_dict_round_trip(self):
        h = sample_universal(5, 3, range=1000)
        assert UniversalHash.from_dict(json.loads(json.dumps(h.to_dict()))) == h

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.integers(0, P - 1), min_size=1, max_size=5), st.integers(0, 2**62),
           st.integers(1, P))
    def test_vectorized_matches_scalar(self, coeffs, x, r):
        coeffs = [coeffs[0]] + [max(c, 1) for c in coeffs[1:]]
        h = UniversalHash(tuple(coeffs), range=r)
        assert int(h.hash_array(np.array([x]))[0]) == h(x)
        assert 0 <= h(x) < r


class TestArithmetic:
    def test_mix64_reference(self):
        got = mix64(np.array(list(MIX64), dtype=np.uint64))
        assert [int(v) for v in got] == list(MIX64.values())

    def test_derive_reference(self):
        assert int(derive(42, 7, 3)) == 11024099309930321735

    @settings(max_examples=300, deadline=None)
    @given(st.integers(0, P - 1), st.integers(0, P - 1))
    def test_mulmod(self, a, b):
        assert int(mulmod61(np.uint64(a), np.uint64(b))) == a * b % P


class TestMinhash:
    def test_identity_surrogate(self):
        ident = MinwiseHash(UniversalHash((0, 1)))
        assert minhash(ident, {4, 9, 2}) == 2

    def test_singleton(self):
        l = MinwiseHash(sample_universal(3, 2))
        assert minhash(l, [5]) == l.surrogate(5)

    def test_order_independent(self):
        l = MinwiseHash(sample_universal(3, 5))
        assert minhash(l, [9, 1, 4, 7]) == minhash(l, [7, 4, 1, 9]) == minhash(l, {1, 4, 7, 9})

    def test_empty(self):
        with pytest.raises(EmptySetError):
            minhash(MinwiseHash(sample_universal(3, 2)), [])
        alloc = MinwiseAllocator.from_seed(1, 4, 2, 10)
        with pytest.raises(EmptySetError):
            powered_rehash(alloc.function(0), [])
        with pytest.raises(EmptySetError):
            alloc.slots([])

    def test_collision_rate_third(self):
        alloc = MinwiseAllocator.from_seed(derive(17, np.arange(10_000, dtype=np.uint64)), 1, 1, 10)
        a = batched_mins(alloc, range(1, 11))
        b = batched_mins(alloc, range(6, 16))
        assert abs(np.mean(a == b) - 1 / 3) <= 0.02


class TestPoweredRehash:
    def test_fold_key(self):
        assert fold_key([3, 4], 10) == 34
        assert fold_key([5], 99) == 5

    def test_reference_slots(self):
        alloc = MinwiseAllocator.from_seed(2024, 8, 2, 1000)
        for items, slots in LMA_2024.items():
            assert alloc.slots(items).tolist() == slots

    def test_scalar_route_matches(self):
        alloc = MinwiseAllocator.from_seed(2024, 8, 2, 1000)
        items = [3, 17, 40, 41]
        assert [alloc.function(i)(items) for i in range(8)] == LMA_2024[tuple(items)]
        f = alloc.function(0)
        assert isinstance(f, PoweredRehashedLsh) and f.n_h == 2 and f.m == 1000

    def test_csr_matches_single_sets(self):
        alloc = MinwiseAllocator.from_seed(9, 16, 3, 5000)
        sets = [[1, 5, 9], [2], [0, 1, 2, 3, 4, 5, 100]]
        ids = np.concatenate([np.array(s) for s in sets])
        offs = np.cumsum([0] + [len(s) for s in sets])
        got = alloc.slots_csr(ids, offs)
        for row, s in zip(got, sets):
            assert row.tolist() == alloc.slots(s).tolist()

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10), st.integers(0, 10), st.integers(0, 10), st.integers(1, 4))
    def test_interval_path_matches(self, a, b, c, n_h):
        if a + c == 0 or b + c == 0:
            return
        alloc = MinwiseAllocator.from_seed(np.array([3, 4], dtype=np.uint64), 6, n_h, 97)
        ra, rb = alloc.interval_pair_slots(a, b, c)
        single = MinwiseAllocator.from_seed(4, 6, n_h, 97)
        assert ra[1].tolist() == single.slots(range(a + c)).tolist()
        assert rb[1].tolist() == single.slots(range(a, a + b + c)).tolist()

    def test_outputs_in_range(self):
        alloc = MinwiseAllocator.from_seed(5, 32, 4, 7)
        s = alloc.slots(range(20))
        assert s.min() >= 0 and s.max() < 7

    def test_rehash_kernel_n_h1(self):
        # J = 0.5 sets, tiny range: collision rate 0.5 + 0.5 / m
        m = 4
        alloc = MinwiseAllocator.from_seed(derive(5, np.arange(20_000, dtype=np.uint64)), 1, 1, m)
        ra, rb = alloc.interval_pair_slots(2, 2, 4)
        assert abs(np.mean(ra == rb) - (0.5 + 0.5 / m)) <= 0.015

    def test_power_two(self):
        alloc = MinwiseAllocator.from_seed(derive(6, np.arange(20_000, dtype=np.uint64)), 1, 2, 10**9)
        ra, rb = alloc.interval_pair_slots(2, 2, 4)
        assert abs(np.mean(ra == rb) - 0.25) <= 0.015

    @pytest.mark.slow
    def test_power_four_large_m(self):
        alloc = MinwiseAllocator.from_seed(derive(7, np.arange(100_000, dtype=np.uint64)), 1, 4, 10**6)
        ra, rb = alloc.interval_pair_slots(1, 1, 8)
        assert abs(np.mean(ra == rb) - kernel_value(0.8, 4, 10**6)) <= 0.01

    def test_descriptor_round_trip(self):
        alloc = MinwiseAllocator.from_seed(123, 8, 4, 999)
        back = MinwiseAllocator.from_json(alloc.to_json())
        assert json.loads(alloc.to_json()) == {"seed": 123, "d": 8, "n_h": 4, "k": 2, "k_perm": 5,
                                               "P": P, "r": 999}
        for name in ("perm", "fold", "rehash"):
            np.testing.assert_array_equal(getattr(back, name), getattr(alloc, name))

    def test_bad_parameters(self):
        with pytest.raises(HashConfigError):
            MinwiseAllocator.from_seed(1, 0, 1, 10)
        with pytest.raises(HashConfigError):
            MinwiseAllocator.from_seed(1, 4, 1, P + 1)
        with pytest.raises(HashConfigError):
            MinwiseAllocator.from_seed(1, 4, 1, 10, k_perm=1)


class TestKernel:
    def test_examples(self):
        assert kernel_value(1.0, 3, 17) == 1.0
        assert kernel_value(0.0, 1, 100) == pytest.approx(0.01)
        assert kernel_value(0.5, 1, 100) == pytest.approx(0.505)

    @given(st.floats(0, 1), st.integers(1, 8), st.integers(1, 10**9))
    def test_bounded(self, phi, n_h, m):
        k = kernel_value(phi, n_h, m)
        assert 0.0 <= k <= 1.0 + 1e-15

    def test_symmetry_and_reflexivity_of_collisions(self):
        alloc = MinwiseAllocator.from_seed(31, 64, 2, 50)
        a, b = [1, 2, 3, 8], [2, 3, 9]
        assert np.mean(alloc.slots(a) == alloc.slots(b)) == np.mean(alloc.slots(b) == alloc.slots(a))
        assert np.all(alloc.slots(a) == alloc.slots(list(reversed(a))))

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            kernel_value(1.5, 1, 10)
        with pytest.raises(ValueError):
            kernel_value(0.5, 1, 0)


def test_pair_hash_reference():
    h = pair_hash(99, 500)
    assert h.hash_array(7 * 4 + np.arange(4)).tolist() == [429, 112, 295, 478]
