"""Hash families: universal hashing, minhash, power and rehash kernels."""

import numpy as np

from lshmem.hashing import MinwiseAllocator, derive, kernel_value, poly61, sample_universal

# A 2-universal hash over the Mersenne prime 2**61 - 1, rebuilt from its seed
h = sample_universal(seed=7, k=2, range=16)
print("coefficients", h.coefficients)
print("h(0..9)     ", [h(x) for x in range(10)])
counts = np.bincount(h.hash_array(np.arange(100_000)), minlength=16)
print("bucket counts over 1e5 ids", counts)

# Collision rates over many independent function draws.
# A = {1..10}, B = {6..15} share 5 of 15 ids, so J = 1/3.
A, B = np.arange(1, 11, dtype=np.uint64), np.arange(6, 16, dtype=np.uint64)
seeds = derive(1, np.arange(20_000, dtype=np.uint64))
for n_h, m in [(1, 10**9), (2, 10**9), (4, 10**9), (1, 10), (4, 10)]:
    alloc = MinwiseAllocator.from_seed(seeds, 1, n_h, m)
    ma = poly61(alloc.perm[..., None, :], A).min(axis=-1)
    mb = poly61(alloc.perm[..., None, :], B).min(axis=-1)
    rate = np.mean(alloc.finish(ma) == alloc.finish(mb))
    print(f"n_h={n_h} m={m:<10} collision rate {rate:.4f}  kernel {kernel_value(1 / 3, n_h, m):.4f}")
