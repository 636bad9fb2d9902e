"""Allocation schemes and how much memory two values share."""

import numpy as np

from lshmem.allocation import AllocationScheme, fcsm_matrix
from lshmem.semantics import OccurrenceIndex, ValueRegistry, jaccard_matrix

# Five values; the first three occur in overlapping row ranges, the last two elsewhere.
spans = [(0, 40), (5, 45), (10, 50), (100, 140), (200, 240)]
reg = ValueRegistry()
vals, rows = [], []
for v, (lo, hi) in enumerate(spans):
    reg.intern(0, f"token{v}")
    vals += [v] * (hi - lo)
    rows += list(range(lo, hi))
index = OccurrenceIndex.from_pairs(vals, rows, 300, reg)
values = range(len(spans))

np.set_printoptions(precision=2, suppress=True)
print("Jaccard similarity of the occurrence sets")
print(jaccard_matrix(index, values))

d, m = 64, 1000
print("\nfull table: rows never share a slot")
print(fcsm_matrix(AllocationScheme.full(n_values=5, d=d), values))

# averaged over seeds so the expectation shows through
for name, make in [("hash", lambda s: AllocationScheme.hashed(d, m, seed=s)),
                   ("lma", lambda s: AllocationScheme.lma(d, m, seed=s, n_h=1))]:
    avg = np.mean([fcsm_matrix(make(s), values, index) for s in range(100)], axis=0)
    print(f"\n{name}: mean shared fraction over 100 seeds (m={m})")
    print(avg)

scheme = AllocationScheme.lma(d=8, m=m, seed=3)
print("\nlma row of value 0:", scheme.allocate(0, index.occurrences(0)))
print("rare value falls back to the hashing trick:", scheme.allocate(1, [7, 9]))
print("descriptor:", scheme.to_json())
