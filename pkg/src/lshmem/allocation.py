"""Allocation functions mapping each embedding cell ``(v, i)`` to a memory slot.

Three realizations share one interface:

``full``  contiguous row-major table, slot ``v * d + i``; no sharing at all.
``hash``  element-wise hashing trick, slot ``h(v * d + i)``.
``lma``   slot ``i`` is the ``i``-th rehashed power-``n_h`` minhash of the
          value's occurrence set; values seen fewer than ``tau`` times use
          the ``hash`` slots instead.

A location row is the dense encoding of the one-hot allocation matrix: a
length-``d`` int64 array of slots in ``[0, m)``.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .hashing import MinwiseAllocator, UniversalHash, pair_hash
from .memory_table import LocationMatrix
from .semantics import OccurrenceIndex


class BudgetError(ValueError):
    """Memory budget too small for the requested scheme."""


class Variant(str, Enum):
    FULL = "full"
    HASH = "hash"
    LMA = "lma"


@dataclass(eq=False)
class AllocationScheme:
    variant: Variant
    d: int
    m: int
    n_values: int | None = None
    tau: int = 5
    seed: int = 42
    n_h: int = 4
    k_rehash: int = 2
    k_perm: int = 5
    _pair: UniversalHash | None = field(default=None, init=False, repr=False)
    _lsh: MinwiseAllocator | None = field(default=None, init=False, repr=False)
    _memo: dict = field(default_factory=dict, init=False, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)

    def __post_init__(self):
        self.variant = Variant(self.variant)
        if self.d < 1 or self.m < 1:
            raise ValueError("d and m must be positive")
        if self.variant is Variant.FULL:
            if self.n_values is None:
                raise ValueError("full allocation needs n_values")
            if self.m < self.n_values * self.d:
                raise BudgetError(f"full table needs m >= |S| * d = {self.n_values * self.d}, got {self.m}")
            return
        self._pair = pair_hash(self.seed, self.m, self.k_rehash)
        if self.variant is Variant.LMA:
            self._lsh = MinwiseAllocator.from_seed(self.seed, self.d, self.n_h, self.m, self.k_rehash, self.k_perm)

    @classmethod
    def full(cls, n_values: int, d: int, m: int | None = None) -> "AllocationScheme":
        return cls(Variant.FULL, d, n_values * d if m is None else m, n_values=n_values)

    @classmethod
    def hashed(cls, d: int, m: int, seed: int = 42, **kw) -> "AllocationScheme":
        return cls(Variant.HASH, d, m, seed=seed, **kw)

    @classmethod
    def lma(cls, d: int, m: int, seed: int = 42, n_h: int = 4, tau: int = 5, **kw) -> "AllocationScheme":
        return cls(Variant.LMA, d, m, seed=seed, n_h=n_h, tau=tau, **kw)

    @property
    def allocator(self) -> MinwiseAllocator | None:
        return self._lsh

    def _pair_rows(self, values: np.ndarray) -> np.ndarray:
        keys = values[:, None].astype(np.int64) * self.d + np.arange(self.d)
        return self._pair.hash_array(keys)

    def allocate(self, v: int, occurrences=None) -> np.ndarray:
        """Location row of value ``v``.

        For ``lma`` the occurrence set ``D_v`` must be passed; rows are
        memoized per ValueId, so ``D_v`` is assumed fixed for a given id.
        """
        if v < 0 or (self.n_values is not None and v >= self.n_values):
            raise IndexError(f"value id {v} out of range")
        if self.variant is Variant.FULL:
            return v * self.d + np.arange(self.d, dtype=np.int64)
        if self.variant is Variant.HASH:
            return self._pair_rows(np.array([v]))[0]
        row = self._memo.get(v)
        if row is None:
            occ = np.asarray(occurrences if occurrences is not None else [], dtype=np.int64)
            if len(occ) >= max(self.tau, 1):
                row = self._lsh.slots(occ)
            else:
                row = self._pair_rows(np.array([v]))[0]
            row.setflags(write=False)
            # dict insert is atomic; racing writers store identical rows
            with self._lock:
                row = self._memo.setdefault(v, row)
        return row

    def uses_fallback(self, count: int) -> bool:
        return self.variant is not Variant.LMA or count < max(self.tau, 1)

    def location_table(self, index: OccurrenceIndex | None = None, n_values: int | None = None) -> np.ndarray:
        """Rows for every value ``0..|S|-1`` at once, shape ``(|S|, d)``."""
        if index is not None:
            n_values = index.n_values
        if n_values is None:
            n_values = self.n_values
        if n_values is None:
            raise ValueError("need an index or n_values")
        values = np.arange(n_values, dtype=np.int64)
        if self.variant is Variant.FULL:
            if self.m < n_values * self.d:
                raise BudgetError("full table does not fit the budget")
            return values[:, None] * self.d + np.arange(self.d)
        table = self._pair_rows(values) if n_values else np.zeros((0, self.d), np.int64)
        if self.variant is Variant.LMA:
            if index is None:
                raise ValueError("lma allocation needs the occurrence index")
            dense = np.flatnonzero(index.counts >= max(self.tau, 1))
            if len(dense):
                starts, ends = index.offsets[dense], index.offsets[dense + 1]
                ids = np.concatenate([index.ids[s:e] for s, e in zip(starts, ends)])
                offs = np.zeros(len(dense) + 1, dtype=np.int64)
                np.cumsum(ends - starts, out=offs[1:])
                table[dense] = self._lsh.slots_csr(ids, offs)
        return table

    def locations(self, values, index: OccurrenceIndex | None = None) -> LocationMatrix:
        values = np.asarray(values, dtype=np.int64)
        rows = np.stack(
            [self.allocate(int(v), index.occurrences(int(v)) if index is not None else None) for v in values]
        ) if len(values) else np.zeros((0, self.d), np.int64)
        return LocationMatrix(rows, values)

    def descriptor(self) -> dict:
        return {
            "variant": self.variant.value,
            "d": self.d,
            "m": self.m,
            "n_values": self.n_values,
            "tau": self.tau,
            "seed": self.seed,
            "n_h": self.n_h,
            "k_rehash": self.k_rehash,
            "k_perm": self.k_perm,
        }

    def to_json(self) -> str:
        return json.dumps(self.descriptor(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "AllocationScheme":
        return cls(**json.loads(text))


def shared_fraction(r1, r2) -> float:
    """Fraction of coordinates whose slots coincide: ``<A(v1), A(v2)>_F / d``."""
    r1, r2 = np.asarray(r1), np.asarray(r2)
    if r1.shape != r2.shape:
        raise ValueError(f"dimension mismatch {r1.shape} vs {r2.shape}")
    return float(np.mean(r1 == r2))


def fcsm_matrix(scheme: AllocationScheme, values, index: OccurrenceIndex | None = None) -> np.ndarray:
    rows = scheme.locations(values, index).rows
    return (rows[:, None, :] == rows[None, :, :]).mean(axis=2)
