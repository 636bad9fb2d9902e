import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from lshmem.allocation import AllocationScheme
from lshmem.memory_table import (
    MAGIC,
    LocationMatrix,
    SharedMemory,
    cosine_similarity,
    gather,
    rademacher_at,
    scatter_add,
)
from lshmem.verify import GridPoint, simulate_pair, theorem2_variance


def locs(rows):
    rows = np.asarray(rows)
    return LocationMatrix(rows, np.arange(len(rows)))


class TestGather:
    def test_example(self):
        mem = SharedMemory(np.array([0.1, 0.2, 0.3, 0.4]))
        np.testing.assert_array_equal(gather(mem, locs([[2, 0]])), [[0.3, 0.1]])

    def test_identical_rows(self):
        mem = SharedMemory.uniform(16, 1.0, seed=0)
        out = mem.gather(locs([[3, 5, 7], [3, 5, 7]]))
        np.testing.assert_array_equal(out[0], out[1])

    def test_shared_slot(self):
        mem = SharedMemory.rademacher(32, seed=1)
        out = mem.gather(locs([[4, 9], [4, 11]]))
        assert out[0, 0] == out[1, 0]

    def test_out_of_range(self):
        mem = SharedMemory(np.zeros(4))
        with pytest.raises(IndexError):
            gather(mem, locs([[0, 4]]))
        with pytest.raises(IndexError):
            gather(mem, locs([[-1, 0]]))

    def test_bad_location_shape(self):
        with pytest.raises(ValueError):
            LocationMatrix(np.zeros(3, np.int64), np.arange(3))


class TestScatterAdd:
    def test_duplicates_in_row(self):
        mem = SharedMemory(np.zeros(3))
        acc = scatter_add(mem, locs([[0, 0]]), np.array([[1.0, 2.0]]))
        assert acc[0] == 3.0 and acc[1:].tolist() == [0.0, 0.0]

    def test_disjoint_is_permutation(self):
        mem = SharedMemory(np.zeros(4))
        acc = mem.scatter_add(locs([[2, 0], [3, 1]]), np.array([[1.0, 2.0], [3.0, 4.0]]))
        np.testing.assert_array_equal(acc, [2.0, 4.0, 1.0, 3.0])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            scatter_add(SharedMemory(np.zeros(4)), locs([[0, 1]]), np.ones((1, 3)))

    def test_accumulator_reused(self):
        mem = SharedMemory(np.zeros(2))
        acc = np.ones(2)
        out = scatter_add(mem, locs([[1]]), np.array([[2.0]]), acc)
        assert out is acc and acc.tolist() == [1.0, 3.0]

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 12), st.integers(1, 6), st.integers(1, 8), st.data())
    def test_brute_force(self, m, d, b, data):
        rows = data.draw(hnp.arrays(np.int64, (b, d), elements=st.integers(0, m - 1)))
        grads = data.draw(hnp.arrays(np.float64, (b, d), elements=st.floats(-1e3, 1e3)))
        acc = scatter_add(SharedMemory(np.zeros(m)), locs(rows), grads)
        expect = np.zeros(m)
        for bi in range(b):
            for i in range(d):
                expect[rows[bi, i]] += grads[bi, i]
        np.testing.assert_array_equal(acc, expect)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 50), st.integers(1, 8), st.integers(1, 10), st.integers(0, 2**32))
    def test_adjoint(self, m, d, b, seed):
        rng = np.random.default_rng(seed)
        mem = SharedMemory(rng.normal(size=m))
        lm = locs(rng.integers(0, m, size=(b, d)))
        G = rng.normal(size=(b, d))
        lhs = np.sum(gather(mem, lm) * G)
        rhs = mem.params @ scatter_add(mem, lm, G)
        assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-12)


class TestSharedMemory:
    def test_rademacher_entries(self):
        mem = SharedMemory.rademacher(10_000, seed=3)
        assert set(np.unique(mem.params)) == {-1.0, 1.0}
        assert abs(mem.params.mean()) < 0.05
        assert mem.m == 10_000

    def test_rademacher_lazy_matches(self):
        mem = SharedMemory.rademacher(100, seed=5)
        slots = np.array([7, 3, 99, 0])
        np.testing.assert_array_equal(rademacher_at(5, slots), mem.params[slots])
        assert rademacher_at(5, np.arange(10)).tolist() == [1, 1, -1, -1, -1, 1, -1, 1, 1, -1]

    def test_uniform_range(self):
        mem = SharedMemory.uniform(1000, 0.25, seed=0)
        assert np.abs(mem.params).max() <= 0.25
        assert mem.init == ("uniform", 0.25)

    def test_lma_norm(self):
        d = 32
        scheme = AllocationScheme.lma(d=d, m=1000, seed=1, tau=1)
        mem = SharedMemory.rademacher(1000, seed=2)
        rows = np.stack([scheme.allocate(0, range(30)), scheme.allocate(1, range(5, 50))])
        e = mem.gather(LocationMatrix(rows, [0, 1]))
        np.testing.assert_array_equal(np.linalg.norm(e, axis=1), np.sqrt(d))

    def test_empty(self):
        with pytest.raises(ValueError):
            SharedMemory(np.zeros(0))

    def test_checkpoint_round_trip(self, tmp_path):
        mem = SharedMemory.uniform(17, 0.5, seed=9)
        path = tmp_path / "memory.bin"
        mem.save(path)
        raw = path.read_bytes()
        assert raw[:8] == MAGIC
        assert int.from_bytes(raw[8:16], "little") == 17
        assert len(raw) == 16 + 8 * 17
        side = json.loads((tmp_path / "memory.bin.json").read_text())
        assert side == {"m": 17, "init": ["uniform", 0.5], "seed": 9, "dtype": "<f8"}
        back = SharedMemory.load(path)
        np.testing.assert_array_equal(back.params, mem.params)
        assert back.init == mem.init and back.seed == 9

    def test_checkpoint_errors(self, tmp_path):
        bad = tmp_path / "bad.bin"
        bad.write_bytes(b"NOTMAGIC" + bytes(8))
        with pytest.raises(ValueError):
            SharedMemory.load(bad)
        mem = SharedMemory(np.arange(4.0))
        good = tmp_path / "good.bin"
        mem.save(good)
        good.write_bytes(good.read_bytes()[:-8])
        with pytest.raises(ValueError):
            SharedMemory.load(good)


class TestCosine:
    def test_examples(self):
        e = np.array([0.3, -2.0, 1.0])
        assert cosine_similarity(e, e) == pytest.approx(1.0)
        assert cosine_similarity([1, 0], [0, 1]) == 0.0

    def test_errors(self):
        with pytest.raises(ZeroDivisionError):
            cosine_similarity([0, 0], [1, 0])
        with pytest.raises(ValueError):
            cosine_similarity([1, 0], [1, 0, 0])

    @given(hnp.arrays(np.float64, 5, elements=st.floats(-10, 10)), hnp.arrays(np.float64, 5, elements=st.floats(-10, 10)))
    def test_bounded(self, a, b):
        if np.linalg.norm(a) < 1e-6 or np.linalg.norm(b) < 1e-6:
            return
        assert -1 - 1e-12 <= cosine_similarity(a, b) <= 1 + 1e-12

    def test_theorem2_moments_d64(self):
        """Cosine of +-1 embeddings of an LMA pair at d=64."""
        sample = simulate_pair(GridPoint(0.5, 64, 10**6, 1), 10_000, seed=11)
        g = sample.gamma
        assert abs(sample.cs.mean() - g) <= 0.02
        assert abs(sample.cs.var(ddof=1) - theorem2_variance(g, 64, 10**6)) <= 0.25 * theorem2_variance(g, 64, 10**6)
