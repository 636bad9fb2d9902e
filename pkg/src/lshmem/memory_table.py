"""The shared parameter memory and its gather / scatter-add access."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .hashing import TAG_MEMORY, derive

MAGIC = b"LSHMEM\x00\x01"


@dataclass
class LocationMatrix:
    """Stacked location rows for a batch of values, shape ``(|V_batch|, d)``."""

    rows: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.int64)
        if self.rows.ndim != 2 or len(self.rows) != len(self.values):
            raise ValueError("rows must be (len(values), d)")


def rademacher_at(seed, slots) -> np.ndarray:
    """Value of a lazily drawn +-1 memory at ``slots``; identical to ``SharedMemory.rademacher``."""
    bits = derive(seed, TAG_MEMORY, np.asarray(slots, dtype=np.uint64)) >> np.uint64(63)
    return 1.0 - 2.0 * bits.astype(np.float64)


class SharedMemory:
    """Fixed-size parameter vector of length ``m``.

    ``init`` is ``"rademacher"`` (each entry +-1 with probability 1/2) or
    ``("uniform", a)`` for entries uniform on ``[-a, a]``.
    """

    def __init__(self, params: np.ndarray, init="custom", seed: int | None = None):
        params = np.asarray(params)
        if params.ndim != 1 or params.size < 1:
            raise ValueError("memory must be a non-empty vector")
        self.params = params
        self.init = init
        self.seed = seed

    @property
    def m(self) -> int:
        return self.params.shape[0]

    @classmethod
    def rademacher(cls, m: int, seed: int) -> "SharedMemory":
        return cls(rademacher_at(seed, np.arange(m)), "rademacher", seed)

    @classmethod
    def uniform(cls, m: int, a: float, seed: int, dtype=np.float64) -> "SharedMemory":
        rng = np.random.default_rng(seed)
        return cls(rng.uniform(-a, a, size=m).astype(dtype), ("uniform", float(a)), seed)

    def gather(self, locs: LocationMatrix) -> np.ndarray:
        return gather(self, locs)

    def scatter_add(self, locs: LocationMatrix, grads, acc=None) -> np.ndarray:
        return scatter_add(self, locs, grads, acc)

    def save(self, path: str | os.PathLike) -> None:
        """Write ``MAGIC | m (<u8) | params (<f8)`` plus a ``.json`` sidecar."""
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(np.uint64(self.m).astype("<u8").tobytes())
            fh.write(self.params.astype("<f8").tobytes())
        init = list(self.init) if isinstance(self.init, tuple) else self.init
        with open(str(path) + ".json", "w", encoding="utf-8") as fh:
            json.dump({"m": self.m, "init": init, "seed": self.seed, "dtype": "<f8"}, fh, sort_keys=True)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "SharedMemory":
        with open(path, "rb") as fh:
            if fh.read(8) != MAGIC:
                raise ValueError(f"{path}: not a memory checkpoint")
            m = int(np.frombuffer(fh.read(8), dtype="<u8")[0])
            params = np.frombuffer(fh.read(8 * m), dtype="<f8").copy()
        if params.size != m:
            raise ValueError(f"{path}: truncated checkpoint")
        meta = {}
        sidecar = str(path) + ".json"
        if os.path.exists(sidecar):
            with open(sidecar, encoding="utf-8") as fh:
                meta = json.load(fh)
        init = meta.get("init", "custom")
        return cls(params, tuple(init) if isinstance(init, list) else init, meta.get("seed"))


def gather(mem: SharedMemory, locs: LocationMatrix) -> np.ndarray:
    rows = locs.rows
    if rows.size and (rows.min() < 0 or rows.max() >= mem.m):
        raise IndexError("location outside the memory budget")
    return mem.params[rows]


def scatter_add(mem: SharedMemory, locs: LocationMatrix, grads, acc=None) -> np.ndarray:
    """Accumulate ``grads[b, i]`` into ``acc[rows[b, i]]`` in row-major order.

    Duplicate slots, within a row or across rows, add up. The summation order
    per slot is the row-major order of the batch, so results are reproducible.
    """
    grads = np.asarray(grads)
    if grads.shape != locs.rows.shape:
        raise ValueError(f"gradient shape {grads.shape} does not match locations {locs.rows.shape}")
    if acc is None:
        acc = np.zeros(mem.m, dtype=np.result_type(grads.dtype, mem.params.dtype))
    np.add.at(acc, locs.rows.ravel(), grads.ravel())
    return acc


def cosine_similarity(e1, e2) -> float:
    e1, e2 = np.asarray(e1, dtype=np.float64), np.asarray(e2, dtype=np.float64)
    if e1.shape != e2.shape:
        raise ValueError("vectors differ in length")
    n1, n2 = np.linalg.norm(e1), np.linalg.norm(e2)
    if n1 == 0 or n2 == 0:
        raise ZeroDivisionError("cosine similarity of a zero vector")
    return float(e1 @ e2 / (n1 * n2))
