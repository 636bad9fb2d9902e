import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lshmem.semantics import (
    DatasetFormatError,
    OccurrenceIndex,
    SubsampleSpec,
    UndefinedSimilarityError,
    ValueRegistry,
    ingest,
    jaccard,
    jaccard_matrix,
    jaccard_sets,
    read_table,
    sample_rows,
    subsample,
    theorem3_envelope,
    write_table,
)


def text(*lines):
    return io.StringIO("\n".join(lines) + "\n")


def sets_index(sets, n_rows):
    reg = ValueRegistry()
    vals, rows = [], []
    for v, s in enumerate(sets):
        reg.intern(0, str(v))
        vals.extend([v] * len(s))
        rows.extend(s)
    return OccurrenceIndex.from_pairs(vals, rows, n_rows, reg)


class TestIngest:
    def test_three_rows(self):
        idx = ingest(text("label\tcat_0", "0\ta", "1\tb", "0\ta"))
        a, b = idx.registry.lookup(0, "a"), idx.registry.lookup(0, "b")
        assert idx.occurrences(a).tolist() == [0, 2]
        assert idx.occurrences(b).tolist() == [1]
        assert idx.n_rows == 3

    def test_header_only(self):
        idx = ingest(text("label,int_0,cat_0"))
        assert idx.n_values == 0 and idx.n_rows == 0 and idx.nnz == 0

    def test_criteo_shape(self):
        rng = np.random.default_rng(0)
        header = ["label"] + [f"int_{i}" for i in range(13)] + [f"cat_{j}" for j in range(26)]
        rows, distinct = [], set()
        for _ in range(30):
            toks = [f"{rng.integers(0, 4):x}" for _ in range(26)]
            distinct.update((j, t) for j, t in enumerate(toks))
            rows.append("\t".join(["1"] + [str(rng.integers(0, 9)) for _ in range(13)] + toks))
        table = read_table(text("\t".join(header), *rows))
        assert table.dense.shape == (30, 13) and table.cats.shape == (30, 26)
        assert table.n_values == len(distinct)

    def test_global_registry_across_features(self):
        table = read_table(text("label,cat_0,cat_1", "1,x,x"))
        assert table.n_values == 2
        assert table.cats[0, 0] != table.cats[0, 1]

    def test_missing_values(self):
        table = read_table(text("label,int_0,cat_0,cat_1", "1,,a,", "0,7,,b"))
        np.testing.assert_array_equal(table.dense[:, 0], [0, 7])
        assert table.cats[0, 1] == -1 and table.cats[1, 0] == -1
        idx = OccurrenceIndex.from_table(table)
        assert idx.nnz == 2

    @pytest.mark.parametrize("lines, fragment", [
        (("label,cat_0,cat_0", "1,a,b"), "duplicate"),
        (("cat_0", "a"), "label"),
        (("label,foo", "1,a"), "unrecognised"),
        (("label,cat_1", "1,a"), "numbered"),
        (("label,cat_0", "1,a", "1"), "line 3"),
        (("label,cat_0", "1,a", "2,b"), "line 3"),
        (("label,int_0", "1,x"), "line 2"),
    ])
    def test_format_errors(self, lines, fragment):
        with pytest.raises(DatasetFormatError, match=fragment):
            read_table(text(*lines))

    def test_empty_stream(self):
        with pytest.raises(DatasetFormatError):
            read_table(io.StringIO(""))

    def test_registry_reuse(self):
        train = read_table(text("label,cat_0", "1,a", "0,b"))
        test = read_table(text("label,cat_0", "1,b", "0,c"), registry=train.registry)
        assert test.cats[:, 0].tolist() == [1, 2]

    def test_write_read_round_trip(self, tmp_path):
        table = read_table(text("label\tint_0\tcat_0\tcat_1", "1\t3\ta\tz", "0\t5\t\ty"))
        write_table(table, tmp_path / "t.tsv")
        back = read_table(tmp_path / "t.tsv")
        np.testing.assert_array_equal(back.labels, table.labels)
        np.testing.assert_array_equal(back.dense, table.dense)
        np.testing.assert_array_equal(back.cats, table.cats)

    def test_jsonl_round_trip(self, tmp_path):
        idx = ingest(text("label,cat_0,cat_1", "1,a,b", "0,a,c", "1,,b"))
        idx.to_jsonl(tmp_path / "index.jsonl")
        back = OccurrenceIndex.from_jsonl(tmp_path / "index.jsonl", n_rows=3)
        np.testing.assert_array_equal(back.offsets, idx.offsets)
        np.testing.assert_array_equal(back.ids, idx.ids)
        assert back.registry.keys == idx.registry.keys

    def test_sets_sorted_distinct(self):
        idx = sets_index([[5, 1, 5, 3]], 6)
        assert idx.occurrences(0).tolist() == [1, 3, 5]


class TestSubsample:
    def test_full_sample(self):
        idx = sets_index([[0, 3, 7], [1, 3]], 8)
        sub = subsample(idx, SubsampleSpec(8, seed=4))
        for v in range(2):
            np.testing.assert_array_equal(sub.occurrences(v), idx.occurrences(v))

    def test_same_seed(self):
        idx = sets_index([list(range(0, 100, 3)), list(range(0, 100, 5))], 100)
        a = subsample(idx, SubsampleSpec(40, seed=7))
        b = subsample(idx, SubsampleSpec(40, seed=7))
        np.testing.assert_array_equal(a.ids, b.ids)
        np.testing.assert_array_equal(a.offsets, b.offsets)

    def test_too_many(self):
        idx = sets_index([[0]], 5)
        with pytest.raises(ValueError):
            subsample(idx, SubsampleSpec(6))

    def test_restriction(self):
        idx = sets_index([list(range(0, 50, 2))], 50)
        kept = sample_rows(50, 20, seed=3)
        sub = subsample(idx, SubsampleSpec(20, seed=3))
        expect = [i for i, r in enumerate(kept) if r % 2 == 0]
        assert sub.occurrences(0).tolist() == expect
        assert sub.n_rows == 20

    def test_prefix_nesting(self):
        small, big = sample_rows(1000, 100, 9), sample_rows(1000, 200, 9)
        assert set(small) <= set(big)

    def test_vanished_value_kept(self):
        idx = sets_index([[0], [1, 2, 3]], 4)
        sub = subsample(idx, SubsampleSpec(0))
        assert sub.n_values == 2 and sub.nnz == 0

    def test_storage_footprint(self):
        table = read_table(text("label,cat_0,cat_1", *[f"1,a{i % 7},b{i % 11}" for i in range(200)]))
        idx = OccurrenceIndex.from_table(table)
        sub = subsample(idx, SubsampleSpec(50, seed=1))
        assert sub.nnz <= 50 * table.cats.shape[1]


class TestJaccard:
    def test_examples(self):
        assert jaccard_sets(np.array([1, 2, 3]), np.array([2, 3, 4])) == 0.5
        assert jaccard_sets(np.array([1, 2]), np.array([1, 2])) == 1.0
        assert jaccard_sets(np.array([1]), np.array([2])) == 0.0

    def test_both_empty(self):
        idx = sets_index([[], [], [1]], 3)
        with pytest.raises(UndefinedSimilarityError):
            jaccard(idx, 0, 1)
        assert jaccard(idx, 0, 2) == 0.0

    @given(st.sets(st.integers(0, 30)), st.sets(st.integers(0, 30)))
    def test_properties(self, a, b):
        if not a and not b:
            return
        idx = sets_index([sorted(a), sorted(b)], 31)
        j = jaccard(idx, 0, 1)
        assert j == jaccard(idx, 1, 0)
        assert 0.0 <= j <= 1.0
        assert j == pytest.approx(len(a & b) / len(a | b))
        if a:
            assert jaccard(idx, 0, 0) == 1.0

    def test_matrix(self):
        idx = sets_index([[1, 2, 3], [2, 3, 4], [9]], 10)
        np.testing.assert_allclose(jaccard_matrix(idx, [0, 1, 2]), [[1, 0.5, 0], [0.5, 1, 0], [0, 0, 1]])


class TestEnvelope:
    def test_example(self):
        env = theorem3_envelope(0.5, 10_000, 0.1, 0.1)
        assert env.variance_center == pytest.approx(0.00035)
        assert env.delta == pytest.approx(0.065)
        assert env.mean_band == pytest.approx(0.05)
        assert env.variance_band == pytest.approx(2 * 0.1 * (0.00035 + 0.5))

    def test_large_epsilon(self):
        assert theorem3_envelope(0.5, 1000, 0.1, 1e6).delta < 1e-12

    @given(st.floats(0.01, 1), st.integers(1, 10**6), st.floats(0.01, 1), st.floats(0.01, 1))
    def test_n_scaling(self, J, n, s, eps):
        e1, e2 = theorem3_envelope(J, n, s, eps), theorem3_envelope(J, 2 * n, s, eps)
        assert e2.variance_center == pytest.approx(e1.variance_center / 2)
        assert e2.delta == pytest.approx(e1.delta / 2)
