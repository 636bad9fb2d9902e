"""Occurrence sets of categorical values and their Jaccard similarities.

A CTR table is read into a :class:`CtrTable` (labels, integer features and
categorical ValueIds drawn from one global registry shared by every feature).
An :class:`OccurrenceIndex` then stores, for every ValueId, the sorted row ids
in which the value occurs, in CSR layout.
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, TextIO

import numpy as np


class DatasetFormatError(ValueError):
    """Malformed dataset: bad header or an unparsable row (line number included)."""


class UndefinedSimilarityError(ValueError):
    """Jaccard similarity of two empty occurrence sets."""


@dataclass
class ValueRegistry:
    """Interns ``(feature, token)`` pairs into dense ValueIds ``0..|S|-1``."""

    keys: list[tuple[int, str]] = field(default_factory=list)
    _ids: dict[tuple[int, str], int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.keys and not self._ids:
            self._ids = {k: i for i, k in enumerate(self.keys)}

    def __len__(self) -> int:
        return len(self.keys)

    def intern(self, feature: int, token: str) -> int:
        key = (feature, token)
        vid = self._ids.get(key)
        if vid is None:
            vid = len(self.keys)
            self._ids[key] = vid
            self.keys.append(key)
        return vid

    def lookup(self, feature: int, token: str) -> int:
        return self._ids[(feature, token)]

    def feature_of(self) -> np.ndarray:
        return np.array([f for f, _ in self.keys], dtype=np.int64)


@dataclass
class CtrTable:
    """Parsed CTR dataset. Missing categorical entries are ``-1``; missing integers ``0``."""

    labels: np.ndarray  # (n,) int8
    dense: np.ndarray  # (n, p) float64
    cats: np.ndarray  # (n, q) int64 ValueIds
    registry: ValueRegistry

    @property
    def n_rows(self) -> int:
        return len(self.labels)

    @property
    def n_values(self) -> int:
        return len(self.registry)

    def take(self, rows) -> "CtrTable":
        rows = np.asarray(rows)
        return CtrTable(self.labels[rows], self.dense[rows], self.cats[rows], self.registry)


def _header_layout(header: list[str]) -> tuple[int, list[int], list[int]]:
    if len(set(header)) != len(header):
        raise DatasetFormatError("line 1: duplicate column names in header")
    if "label" not in header:
        raise DatasetFormatError("line 1: header has no 'label' column")
    ints = sorted((int(h[4:]), i) for i, h in enumerate(header) if h.startswith("int_"))
    cats = sorted((int(h[4:]), i) for i, h in enumerate(header) if h.startswith("cat_"))
    known = 1 + len(ints) + len(cats)
    if known != len(header):
        raise DatasetFormatError(f"line 1: unrecognised columns in header {header}")
    if [k for k, _ in ints] != list(range(len(ints))) or [k for k, _ in cats] != list(range(len(cats))):
        raise DatasetFormatError("line 1: int_/cat_ columns must be numbered 0..p-1 / 0..q-1")
    return header.index("label"), [i for _, i in ints], [i for _, i in cats]


def read_table(source: str | os.PathLike | TextIO | Iterable[str], registry: ValueRegistry | None = None) -> CtrTable:
    """Parse delimited text with a ``label, int_*, cat_*`` header.

    Tab or comma delimiter is chosen from the header line. Passing an existing
    ``registry`` lets a test split reuse the ValueIds of the training split.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8", newline="") as fh:
            return read_table(fh, registry)
    lines = iter(source)
    try:
        first = next(lines)
    except StopIteration:
        raise DatasetFormatError("line 1: missing header") from None
    delim = "\t" if "\t" in first else ","
    header = next(csv.reader(io.StringIO(first), delimiter=delim))
    label_col, int_cols, cat_cols = _header_layout(header)
    registry = registry if registry is not None else ValueRegistry()
    labels, dense, cats = [], [], []
    for lineno, row in enumerate(csv.reader(lines, delimiter=delim), start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise DatasetFormatError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        lab = row[label_col].strip()
        if lab not in ("0", "1"):
            raise DatasetFormatError(f"line {lineno}: label must be 0 or 1, got {lab!r}")
        labels.append(int(lab))
        try:
            dense.append([int(row[c]) if row[c].strip() else 0 for c in int_cols])
        except ValueError:
            raise DatasetFormatError(f"line {lineno}: non-integer value in int_ column") from None
        cats.append([registry.intern(f, row[c]) if row[c] != "" else -1 for f, c in enumerate(cat_cols)])
    n = len(labels)
    return CtrTable(
        np.array(labels, dtype=np.int8),
        np.array(dense, dtype=np.float64).reshape(n, len(int_cols)),
        np.array(cats, dtype=np.int64).reshape(n, len(cat_cols)),
        registry,
    )


def write_table(table: CtrTable, path: str | os.PathLike, delimiter: str = "\t") -> None:
    inv = table.registry.keys
    p, q = table.dense.shape[1], table.cats.shape[1]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow(["label"] + [f"int_{i}" for i in range(p)] + [f"cat_{j}" for j in range(q)])
        for r in range(table.n_rows):
            w.writerow(
                [int(table.labels[r])]
                + [int(x) for x in table.dense[r]]
                + [inv[v][1] if v >= 0 else "" for v in table.cats[r]]
            )


@dataclass
class OccurrenceIndex:
    """Sorted occurrence sets ``D_v`` for every registered value (CSR layout)."""

    offsets: np.ndarray  # (|S| + 1,) int64
    ids: np.ndarray  # (nnz,) int64, sorted within each value
    n_rows: int
    registry: ValueRegistry

    @property
    def n_values(self) -> int:
        return len(self.offsets) - 1

    @property
    def counts(self) -> np.ndarray:
        return np.diff(self.offsets)

    @property
    def nnz(self) -> int:
        return int(self.offsets[-1])

    def occurrences(self, v: int) -> np.ndarray:
        return self.ids[self.offsets[v] : self.offsets[v + 1]]

    @classmethod
    def from_table(cls, table: CtrTable) -> "OccurrenceIndex":
        rows = np.repeat(np.arange(table.n_rows, dtype=np.int64), table.cats.shape[1])
        vals = table.cats.ravel()
        keep = vals >= 0
        return cls.from_pairs(vals[keep], rows[keep], table.n_rows, table.registry)

    @classmethod
    def from_pairs(cls, values, rows, n_rows: int, registry: ValueRegistry) -> "OccurrenceIndex":
        """Build from parallel (value, row) arrays; duplicates collapse."""
        values = np.asarray(values, dtype=np.int64)
        rows = np.asarray(rows, dtype=np.int64)
        order = np.lexsort((rows, values))
        values, rows = values[order], rows[order]
        if len(values):
            dup = np.zeros(len(values), dtype=bool)
            dup[1:] = (values[1:] == values[:-1]) & (rows[1:] == rows[:-1])
            values, rows = values[~dup], rows[~dup]
        counts = np.bincount(values, minlength=len(registry))
        offsets = np.zeros(len(registry) + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
        return cls(offsets, rows, n_rows, registry)

    def to_jsonl(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for v, (feat, tok) in enumerate(self.registry.keys):
                occ = self.occurrences(v)
                rec = {"feature": feat, "token": tok, "value_id": v, "count": int(len(occ)), "sample_ids": occ.tolist()}
                fh.write(json.dumps(rec) + "\n")

    @classmethod
    def from_jsonl(cls, path: str | os.PathLike, n_rows: int | None = None) -> "OccurrenceIndex":
        registry = ValueRegistry()
        vals, rows = [], []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                rec = json.loads(line)
                vid = registry.intern(rec["feature"], rec["token"])
                if vid != rec["value_id"]:
                    raise DatasetFormatError(f"value ids in {path} are not dense and ordered")
                vals.extend([vid] * len(rec["sample_ids"]))
                rows.extend(rec["sample_ids"])
        if n_rows is None:
            n_rows = (max(rows) + 1) if rows else 0
        return cls.from_pairs(vals, rows, n_rows, registry)


def ingest(source) -> OccurrenceIndex:
    """Parse a dataset and build its occurrence index over one global registry."""
    return OccurrenceIndex.from_table(read_table(source))


@dataclass(frozen=True)
class SubsampleSpec:
    n_s: int
    seed: int = 0
    sparsity: float | None = None  # only used by the analytic envelope


def sample_rows(n: int, n_s: int, seed: int) -> np.ndarray:
    """Sorted uniform sample of ``n_s`` distinct row ids out of ``n``."""
    if n_s > n:
        raise ValueError(f"cannot draw {n_s} samples from {n} rows")
    if n_s < 0:
        raise ValueError("n_s must be non-negative")
    rng = np.random.default_rng(seed)
    return np.sort(rng.permutation(n)[:n_s])


def subsample(index: OccurrenceIndex, spec: SubsampleSpec) -> OccurrenceIndex:
    """Restrict every occurrence set to a seeded row sample and re-index rows to ``0..n_s-1``.

    Values that vanish from the sample stay registered with empty sets.
    """
    kept = sample_rows(index.n_rows, spec.n_s, spec.seed)
    pos = np.searchsorted(kept, index.ids)
    if len(kept):
        hit = kept[np.minimum(pos, len(kept) - 1)] == index.ids
    else:
        hit = np.zeros(len(index.ids), dtype=bool)
    owner = np.repeat(np.arange(index.n_values), index.counts)
    counts = np.bincount(owner[hit], minlength=index.n_values)
    offsets = np.zeros(index.n_values + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return OccurrenceIndex(offsets, pos[hit].astype(np.int64), spec.n_s, index.registry)


def jaccard_sets(a: np.ndarray, b: np.ndarray) -> float:
    if len(a) == 0 and len(b) == 0:
        raise UndefinedSimilarityError("both occurrence sets are empty")
    inter = len(np.intersect1d(a, b, assume_unique=True))
    return inter / (len(a) + len(b) - inter)


def jaccard(index: OccurrenceIndex, v1: int, v2: int) -> float:
    return jaccard_sets(index.occurrences(v1), index.occurrences(v2))


def jaccard_matrix(index: OccurrenceIndex, values) -> np.ndarray:
    values = list(values)
    k = len(values)
    out = np.eye(k)
    for a in range(k):
        for b in range(a + 1, k):
            out[a, b] = out[b, a] = jaccard(index, values[a], values[b])
    return out


@dataclass(frozen=True)
class Theorem3Envelope:
    mean_band: float  # |E(J_hat) - J| <= mean_band
    variance_center: float  # A
    variance_band: float  # |V(J_hat) - A| <= variance_band
    delta: float


def theorem3_envelope(J: float, n: int, s: float, epsilon: float) -> Theorem3Envelope:
    """Analytic bands for a Jaccard estimate from ``n`` i.i.d. rows at sparsity ``s``."""
    ns = n * s
    A = J / (2 * ns) * (1 + J - 2 * s * J)
    return Theorem3Envelope(
        mean_band=epsilon * J,
        variance_center=A,
        variance_band=2 * epsilon * (A + 2 * J * J),
        delta=(1 + J - 2 * s) / (2 * ns * epsilon**2),
    )
