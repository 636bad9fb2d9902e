"""Shared +-1 memory: gather, scatter-add and the cosine of two LMA embeddings."""

import numpy as np

from lshmem.memory_table import LocationMatrix, SharedMemory, cosine_similarity
from lshmem.verify import GridPoint, simulate_pair, theorem2_variance

mem = SharedMemory(np.array([0.1, 0.2, 0.3, 0.4]))
locs = LocationMatrix(np.array([[2, 0], [0, 0]]), np.array([0, 1]))
print("gather        ", mem.gather(locs).tolist())
print("scatter-add   ", mem.scatter_add(locs, np.array([[1.0, 2.0], [3.0, 4.0]])).tolist())
print("cosine (1,0),(0,1):", cosine_similarity([1, 0], [0, 1]))

# Embeddings read from a +-1 memory through LMA rows; one memory and one allocator per trial.
print("\n phi    d   mean C_s   Gamma    var C_s   predicted")
for phi in (0.1, 0.5, 0.9):
    for d in (16, 64, 256):
        s = simulate_pair(GridPoint(phi, d, 10**6, 1), trials=5000, seed=1)
        print(f"{s.phi:.3f} {d:4d}   {s.cs.mean():.4f}   {s.gamma:.4f}   {s.cs.var(ddof=1):.5f}   "
              f"{theorem2_variance(s.gamma, d, 10**6):.5f}")
