"""Seeded hash families: k-universal polynomial hashing, minwise hashing,
power-k composition and range rehashing.

Every function instance is a pure function of integer coefficients that are
derived from a single 64-bit seed through a counter-based mixer, so any
allocation built on top of these families can be rebuilt bit-exactly from
``(seed, k, n_h, P, r)``.

Two evaluation routes exist for the Mersenne prime ``2**61 - 1``:

* scalar evaluation on Python integers (exact, arbitrary precision), used by
  the small dataclass types below;
* vectorized ``uint64`` evaluation (:func:`mulmod61` and friends), used for
  bulk allocation. Both routes produce identical integers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

MERSENNE_61 = (1 << 61) - 1

_P64 = np.uint64(MERSENNE_61)
_LO32 = np.uint64(0xFFFFFFFF)
_LO29 = np.uint64((1 << 29) - 1)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

# domain tags for the counter-based seed split
TAG_UNIVERSAL = 1
TAG_PERM = 2
TAG_FOLD = 4
TAG_REHASH = 5
TAG_PAIR = 6
TAG_TRIAL = 7
TAG_MEMORY = 8


class HashConfigError(ValueError):
    """Invalid hash-family parameters."""


class EmptySetError(ValueError):
    """Minwise hashing of an empty set; callers fall back to the pair hash."""


# ---------------------------------------------------------------------------
# seed stream
# ---------------------------------------------------------------------------


def mix64(x):
    """splitmix64 finalizer, elementwise on ``uint64`` (wrapping arithmetic)."""
    with np.errstate(over="ignore"):
        z = np.asarray(x, dtype=np.uint64) + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


def derive(seed, *counters):
    """Counter-based split of ``seed`` into an independent 64-bit stream value.

    All arguments broadcast, so ``derive(seeds[:, None], TAG, np.arange(d))``
    yields a ``(len(seeds), d)`` table in one call.
    """
    h = mix64(np.asarray(seed, dtype=np.uint64))
    with np.errstate(over="ignore"):
        for c in counters:
            h = mix64(h ^ mix64(np.asarray(c, dtype=np.uint64) * _GOLDEN))
    return h


def seed_from(*parts: int) -> int:
    """Scalar convenience around :func:`derive` returning a Python int."""
    return int(derive(parts[0], *parts[1:]))


# ---------------------------------------------------------------------------
# vectorized arithmetic modulo 2**61 - 1
# ---------------------------------------------------------------------------


def mod61(x):
    """Reduce ``uint64`` values below ``2**63`` modulo ``2**61 - 1``."""
    x = (x & _P64) + (x >> np.uint64(61))
    with np.errstate(over="ignore"):
        return np.where(x >= _P64, x - _P64, x)


def addmod61(a, b):
    s = np.asarray(a, dtype=np.uint64) + np.asarray(b, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return np.where(s >= _P64, s - _P64, s)


def submod61(a, b):
    return addmod61(a, _P64 - np.asarray(b, dtype=np.uint64))


def mulmod61(a, b):
    """``a * b mod (2**61 - 1)`` for ``uint64`` operands below ``2**61``.

    Split into 32-bit halves; ``2**61 = 1`` and ``2**64 = 8`` modulo P keep
    every partial sum below ``2**63``.
    """
    a = np.asarray(a, dtype=np.uint64)
    b = np.asarray(b, dtype=np.uint64)
    a1, a0 = a >> np.uint64(32), a & _LO32
    b1, b0 = b >> np.uint64(32), b & _LO32
    hi = (a1 * b1) << np.uint64(3)
    mid = a1 * b0 + a0 * b1
    lo = a0 * b0
    s = (
        hi
        + (mid >> np.uint64(29))
        + ((mid & _LO29) << np.uint64(32))
        + (lo & _P64)
        + (lo >> np.uint64(61))
    )
    return mod61(s)


def poly61(coeffs, x):
    """Horner evaluation of ``sum_i coeffs[..., i] * x**i`` modulo ``2**61 - 1``.

    ``coeffs`` has the polynomial degree on its last axis; the remaining axes
    broadcast against ``x``.
    """
    coeffs = np.asarray(coeffs, dtype=np.uint64)
    x = mod61(np.asarray(x, dtype=np.uint64))
    acc = coeffs[..., -1] + np.zeros_like(x)
    for i in range(coeffs.shape[-1] - 2, -1, -1):
        acc = addmod61(mulmod61(acc, x), coeffs[..., i])
    return acc


def coefficients_from_stream(u, k: int, prime: int = MERSENNE_61):
    """Map raw stream values (last axis of length ``k``) into family ranges.

    Position 0 lands in ``[0, P)``, the others in ``[1, P)``.
    """
    u = np.asarray(u, dtype=np.uint64)
    out = u % np.uint64(prime)
    if k > 1:
        out[..., 1:] = np.uint64(1) + u[..., 1:] % np.uint64(prime - 1)
    return out


# ---------------------------------------------------------------------------
# universal hashing
# ---------------------------------------------------------------------------


def _is_prime(p: int) -> bool:
    if p == MERSENNE_61:
        return True
    from sympy import isprime

    return bool(isprime(p))


@dataclass(frozen=True)
class UniversalHash:
    """``h(x) = (a_0 + sum_{i>=1} a_i x^i) mod P mod r``."""

    coefficients: tuple[int, ...]
    prime: int = MERSENNE_61
    range: int = MERSENNE_61

    def __post_init__(self):
        object.__setattr__(self, "coefficients", tuple(int(a) for a in self.coefficients))
        if not self.coefficients:
            raise HashConfigError("need at least one coefficient")
        if self.range <= 0 or self.range > self.prime:
            raise HashConfigError(f"range must lie in [1, P], got {self.range}")
        if not _is_prime(self.prime):
            raise HashConfigError(f"{self.prime} is not prime")
        a0, *rest = self.coefficients
        if not 0 <= a0 < self.prime or any(not 1 <= a < self.prime for a in rest):
            raise HashConfigError("coefficients outside a_0 in [0,P), a_i in [1,P)")

    @property
    def k(self) -> int:
        return len(self.coefficients)

    def __call__(self, x: int) -> int:
        if x < 0:
            raise ValueError("universal hash is defined on non-negative integers")
        acc = 0
        for a in reversed(self.coefficients):
            acc = (acc * x + a) % self.prime
        return acc % self.range

    def hash_array(self, x) -> np.ndarray:
        """Vectorized evaluation; exact for P = 2**61 - 1, elementwise otherwise."""
        x = np.asarray(x)
        if self.prime == MERSENNE_61:
            v = poly61(np.array(self.coefficients, dtype=np.uint64), x.astype(np.uint64))
            return (v % np.uint64(self.range)).astype(np.int64)
        return np.array([self(int(v)) for v in x.ravel()], dtype=np.int64).reshape(x.shape)

    def to_dict(self) -> dict:
        return {"coefficients": list(self.coefficients), "prime": self.prime, "range": self.range}

    @classmethod
    def from_dict(cls, data: dict) -> "UniversalHash":
        return cls(tuple(data["coefficients"]), data["prime"], data["range"])


def universal_hash(h: UniversalHash, x: int) -> int:
    return h(x)


def sample_universal(seed: int, k: int = 2, prime: int = MERSENNE_61, range: int | None = None) -> UniversalHash:
    """Draw a member of the k-universal family from ``seed``."""
    if k < 1:
        raise HashConfigError("k must be >= 1")
    if range is None:
        range = prime
    if not _is_prime(prime):
        raise HashConfigError(f"{prime} is not prime")
    u = [int(v) for v in derive(seed, TAG_UNIVERSAL, np.arange(k))]
    coeffs = [u[0] % prime] + [1 + v % (prime - 1) for v in u[1:]]
    return UniversalHash(tuple(coeffs), prime, range)


# ---------------------------------------------------------------------------
# minwise hashing, power and rehash
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MinwiseHash:
    """Minwise hash with the permutation simulated by a universal hash of range P."""

    surrogate: UniversalHash

    def __call__(self, items: Iterable[int]) -> int:
        return minhash(self, items)


def minhash(l: MinwiseHash, items: Iterable[int]) -> int:
    values = [l.surrogate(int(x)) for x in items]
    if not values:
        raise EmptySetError("minhash of an empty set")
    return min(values)


def fold_key(values: Sequence[int], base: int, prime: int = MERSENNE_61) -> int:
    """Collapse a tuple of minhash values into one integer by Horner hashing."""
    acc = 0
    for v in values:
        acc = (acc * base + v) % prime
    return acc


@dataclass(frozen=True)
class PoweredRehashedLsh:
    """``n_h`` concatenated minwise hashes, folded and rehashed into ``[0, m)``."""

    bases: tuple[MinwiseHash, ...]
    fold_base: int
    rehasher: UniversalHash

    @property
    def n_h(self) -> int:
        return len(self.bases)

    @property
    def m(self) -> int:
        return self.rehasher.range

    def __call__(self, items: Iterable[int]) -> int:
        return powered_rehash(self, items)


def powered_rehash(f: PoweredRehashedLsh, items: Iterable[int]) -> int:
    items = list(items)
    if not items:
        raise EmptySetError("powered minhash of an empty set")
    key = fold_key([minhash(b, items) for b in f.bases], f.fold_base, f.rehasher.prime)
    return f.rehasher(key)


def kernel_value(phi_base: float, n_h: int, m: int) -> float:
    """Collision probability of a rehashed power-``n_h`` LSH: ``p + (1 - p) / m``."""
    if not 0.0 <= phi_base <= 1.0:
        raise ValueError("phi_base must lie in [0, 1]")
    if m < 1:
        raise ValueError("m must be >= 1")
    p = phi_base**n_h
    return p + (1.0 - p) / m


# ---------------------------------------------------------------------------
# bulk allocator
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MinwiseAllocator:
    """``d`` independent rehashed power-``n_h`` minwise functions as coefficient arrays.

    Arrays may carry leading batch axes (one allocator per seed) which is how
    the Monte Carlo harness evaluates thousands of allocators at once.

    Attributes
    ----------
    perm : uint64 array ``(..., d, n_h, k_perm)``
        Coefficients of the permutation surrogates. A linear (``k_perm=2``)
        surrogate is badly biased on runs of consecutive ids, which is what
        occurrence sets mostly are; the default degree-4 polynomial is not.
    fold : uint64 array ``(..., d)``
        Horner base folding the ``n_h`` minhash values into one key.
    rehash : uint64 array ``(..., d, k_rehash)``
        Rehasher coefficients; the range is ``m``.
    """

    seed: object
    d: int
    n_h: int
    m: int
    perm: np.ndarray
    fold: np.ndarray
    rehash: np.ndarray

    @classmethod
    def from_seed(cls, seed, d: int, n_h: int, m: int, k_rehash: int = 2, k_perm: int = 5) -> "MinwiseAllocator":
        if d < 1 or n_h < 1 or m < 1:
            raise HashConfigError("d, n_h and m must be positive")
        if m > MERSENNE_61:
            raise HashConfigError("m exceeds the prime")
        if k_rehash < 1 or k_perm < 2:
            raise HashConfigError("need rehash universality >= 1 and surrogate universality >= 2")
        s = np.asarray(seed, dtype=np.uint64)[..., None, None]
        i = np.arange(d, dtype=np.uint64)[:, None]
        j = np.arange(n_h, dtype=np.uint64)[None, :]
        u = derive(s[..., None], TAG_PERM, i[..., None], j[..., None], np.arange(k_perm, dtype=np.uint64))
        perm = coefficients_from_stream(u, k_perm)
        fold = np.uint64(1) + derive(s[..., 0], TAG_FOLD, np.arange(d, dtype=np.uint64)) % np.uint64(
            MERSENNE_61 - 1
        )
        r = derive(s, TAG_REHASH, i, np.arange(k_rehash, dtype=np.uint64)[None, :])
        rehash = coefficients_from_stream(r, k_rehash)
        return cls(seed, d, n_h, m, perm, fold, rehash)

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.fold.shape[:-1]

    @property
    def k_perm(self) -> int:
        return self.perm.shape[-1]

    @property
    def k_rehash(self) -> int:
        return self.rehash.shape[-1]

    def function(self, i: int, index: tuple[int, ...] = ()) -> PoweredRehashedLsh:
        """The ``i``-th coordinate function as a scalar :class:`PoweredRehashedLsh`."""
        perm = self.perm[index + (i,)]
        bases = tuple(MinwiseHash(UniversalHash(tuple(int(a) for a in row))) for row in perm)
        rehasher = UniversalHash(tuple(int(a) for a in self.rehash[index + (i,)]), range=self.m)
        return PoweredRehashedLsh(bases, int(self.fold[index + (i,)]), rehasher)

    def finish(self, mins):
        """Fold minhash values ``(..., d, n_h)`` and rehash them into slots ``(..., d)``."""
        key = mins[..., 0]
        for j in range(1, self.n_h):
            key = addmod61(mulmod61(key, self.fold), mins[..., j])
        return (poly61(self.rehash, key) % np.uint64(self.m)).astype(np.int64)

    def slots_csr(self, ids: np.ndarray, offsets: np.ndarray, chunk: int = 1 << 22) -> np.ndarray:
        """Slots for many sets stored CSR-style; every set must be non-empty.

        Only valid for an unbatched allocator. Returns ``(n_sets, d)`` int64.
        """
        if self.batch_shape:
            raise ValueError("slots_csr needs an unbatched allocator")
        ids = np.asarray(ids, dtype=np.uint64)
        offsets = np.asarray(offsets, dtype=np.int64)
        n_sets = len(offsets) - 1
        if n_sets == 0:
            return np.zeros((0, self.d), dtype=np.int64)
        if np.any(np.diff(offsets) <= 0):
            raise EmptySetError("slots_csr received an empty set")
        perm = self.perm.reshape(-1, self.k_perm)
        mins = np.empty((perm.shape[0], n_sets), dtype=np.uint64)
        step = max(1, chunk // max(len(ids), 1))
        starts = offsets[:-1]
        for lo in range(0, perm.shape[0], step):
            v = poly61(perm[lo : lo + step, None, :], ids[None, :])
            mins[lo : lo + step] = np.minimum.reduceat(v, starts, axis=1)
        mins = mins.T.reshape(n_sets, self.d, self.n_h)
        return self.finish(mins)

    def slots(self, items) -> np.ndarray:
        items = np.asarray(sorted(set(int(x) for x in items)), dtype=np.uint64)
        if items.size == 0:
            raise EmptySetError("allocation of an empty set")
        return self.slots_csr(items, np.array([0, items.size]))[0]

    def interval_pair_slots(self, a: int, b: int, c: int) -> tuple[np.ndarray, np.ndarray]:
        """Slots of ``A = [0, a+c)`` and ``B = [a, a+b+c)`` for every batched allocator.

        Surrogate values over consecutive integers are walked with a forward
        difference table, so each step costs ``k_perm - 1`` modular additions
        instead of a polynomial evaluation.
        """
        n = a + b + c
        if a + c == 0 or b + c == 0:
            raise EmptySetError("interval pair with an empty side")
        k = self.k_perm
        diffs = [poly61(self.perm, np.uint64(x)) for x in range(k)]
        for order in range(1, k):
            for x in range(k - 1, order - 1, -1):
                diffs[x] = submod61(diffs[x], diffs[x - 1])
        min_a = np.full(diffs[0].shape, _P64)
        min_b = np.full(diffs[0].shape, _P64)
        tmp = np.empty_like(diffs[0])
        for x in range(n):
            if x < a + c:
                np.minimum(min_a, diffs[0], out=min_a)
            if x >= a:
                np.minimum(min_b, diffs[0], out=min_b)
            for j in range(k - 1):
                # in-place addmod61: if s < P then s - P wraps above s, so the min is exact
                np.add(diffs[j], diffs[j + 1], out=diffs[j])
                np.subtract(diffs[j], _P64, out=tmp)
                np.minimum(diffs[j], tmp, out=diffs[j])
        return self.finish(min_a), self.finish(min_b)

    def descriptor(self) -> dict:
        if self.batch_shape:
            raise ValueError("descriptor needs an unbatched allocator")
        return {
            "seed": int(self.seed),
            "d": self.d,
            "n_h": self.n_h,
            "k": self.k_rehash,
            "k_perm": self.k_perm,
            "P": MERSENNE_61,
            "r": self.m,
        }

    def to_json(self) -> str:
        return json.dumps(self.descriptor(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "MinwiseAllocator":
        data = json.loads(text)
        if data.get("P", MERSENNE_61) != MERSENNE_61:
            raise HashConfigError("only P = 2**61 - 1 is supported for bulk allocation")
        return cls.from_seed(data["seed"], data["d"], data["n_h"], data["r"], data.get("k", 2), data.get("k_perm", 5))


def pair_hash(seed: int, m: int, k: int = 2) -> UniversalHash:
    """Universal hash over cell keys ``v * d + i`` used by the element-wise hashing trick."""
    u = derive(seed, TAG_PAIR, np.arange(k, dtype=np.uint64))
    coeffs = coefficients_from_stream(u, k)
    return UniversalHash(tuple(int(a) for a in coeffs), range=m)
