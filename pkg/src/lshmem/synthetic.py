"""Planted data generators with known similarity structure."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .semantics import CtrTable, OccurrenceIndex, ValueRegistry


class InfeasibleError(ValueError):
    """Requested (J, s) combination cannot be planted over n rows."""


def realize_jaccard(target: float, max_total: int = 64) -> tuple[int, int, int]:
    """Closest ``J = c / (a + b + c)`` with ``a + b + c <= max_total``.

    Returns ``(a, b, c)``; ties prefer the smallest union. ``A = [0, a+c)`` and
    ``B = [a, a+b+c)`` then have exactly that Jaccard similarity.
    """
    if not 0.0 <= target <= 1.0:
        raise ValueError("Jaccard target must lie in [0, 1]")
    best = None
    for n in range(1, max_total + 1):
        c = round(target * n)
        err = abs(c / n - target)
        if best is None or err < best[0] - 1e-15:
            best = (err, n, c)
    _, n, c = best
    rest = n - c
    if c == 0 and rest < 2:
        # disjoint sets need both sides non-empty
        rest = 2
    a = (rest + 1) // 2
    return a, rest - a, c


def interval_pair(a: int, b: int, c: int) -> tuple[np.ndarray, np.ndarray]:
    return np.arange(0, a + c), np.arange(a, a + b + c)


@dataclass
class PlantedPair:
    index: OccurrenceIndex
    jaccard: float
    sparsity: float


def planted_pair(n: int, s: float, J: float, seed: int = 0) -> PlantedPair:
    """Two values each present in ``round(n*s)`` of ``n`` rows with Jaccard close to ``J``.

    Overlap counts are fixed (not sampled), so the realized Jaccard on the
    full data is deterministic; it is returned alongside.
    """
    if not (0 < s <= 1 and 0 <= J <= 1 and n >= 1):
        raise InfeasibleError("need 0 < s <= 1, 0 <= J <= 1, n >= 1")
    per_value = round(n * s)
    both = round(per_value * 2 * J / (1 + J))
    only = per_value - both
    if per_value < 1 or 2 * only + both > n:
        raise InfeasibleError(f"cannot plant J={J}, s={s} over {n} rows")
    rows = np.random.default_rng(seed).permutation(n)[: both + 2 * only]
    x_rows = np.concatenate([rows[:both], rows[both : both + only]])
    y_rows = np.concatenate([rows[:both], rows[both + only :]])
    registry = ValueRegistry()
    registry.intern(0, "x")
    registry.intern(1, "y")
    vals = np.concatenate([np.zeros(len(x_rows), np.int64), np.ones(len(y_rows), np.int64)])
    index = OccurrenceIndex.from_pairs(vals, np.concatenate([x_rows, y_rows]), n, registry)
    realized = both / (both + 2 * only) if both + only else 0.0
    return PlantedPair(index, realized, per_value / n)


@dataclass(frozen=True)
class PlantedCtrSpec:
    """Parameters of the planted-cluster CTR generator.

    Values are organised as ``n_clusters`` clusters, each holding
    ``members`` tuples with one value per categorical feature. A row draws a
    cluster and a member; each feature then carries the member's value with
    probability ``rho`` and a uniformly random value of that feature
    otherwise. Clusters are drawn with Zipf(``zipf``) popularity, so tail
    clusters are data-poor. Tuple mates therefore have Jaccard about ``rho^2 / (2 - rho^2)``
    while unrelated values are near 0. Click logits combine a cluster effect,
    a member effect and a dense-feature term.
    """

    n_rows: int = 200_000
    n_values: int = 10_000
    n_clusters: int = 100
    n_cat: int = 4
    n_dense: int = 4
    rho: float = 0.95
    cluster_scale: float = 1.5
    member_scale: float = 0.5
    dense_scale: float = 0.5
    slope_scale: float = 0.0
    bias: float = -1.0
    zipf: float = 1.1
    seed: int = 0

    @property
    def members(self) -> int:
        return self.n_values // (self.n_clusters * self.n_cat)


def planted_ctr(spec: PlantedCtrSpec, registry: ValueRegistry | None = None, rows_seed: int | None = None) -> CtrTable:
    """Draw a table from the planted model.

    ``spec.seed`` fixes the latent structure (effects, tuples); ``rows_seed``
    (default ``spec.seed``) fixes which rows are sampled, so train and test
    splits share latent structure but not rows.
    """
    C, q, K = spec.n_clusters, spec.n_cat, spec.members
    if K < 1 or C * q * K != spec.n_values:
        raise ValueError("n_values must equal n_clusters * n_cat * members")
    latent = np.random.default_rng(spec.seed)
    cluster_effect = latent.normal(0.0, spec.cluster_scale, size=C)
    member_effect = latent.normal(0.0, spec.member_scale, size=(C, K))
    dense_w = latent.normal(0.0, spec.dense_scale, size=spec.n_dense)
    dense_rate = latent.uniform(1.0, 20.0, size=spec.n_dense)
    slopes = latent.normal(0.0, spec.slope_scale, size=(C, K, spec.n_dense))
    # per feature a random bijection from (cluster, member) to the feature's token ids
    token_of = np.stack([latent.permutation(C * K) for _ in range(q)], axis=0)

    rng = np.random.default_rng(spec.seed if rows_seed is None else rows_seed)
    n = spec.n_rows
    if spec.zipf > 0:
        w = 1.0 / np.arange(1, C + 1) ** spec.zipf
        cl = rng.choice(C, size=n, p=w / w.sum())
    else:
        cl = rng.integers(0, C, size=n)
    mem = rng.integers(0, K, size=n)
    tuple_id = cl * K + mem
    noise = rng.random((n, q)) >= spec.rho
    random_tok = rng.integers(0, C * K, size=(n, q))
    tok = np.where(noise, random_tok, token_of[np.arange(q)[None, :], tuple_id[:, None]])
    dense = rng.poisson(dense_rate, size=(n, spec.n_dense)).astype(np.float64)
    z = (dense - dense_rate) / np.sqrt(dense_rate)
    logit = spec.bias + cluster_effect[cl] + member_effect[cl, mem] + z @ dense_w
    logit = logit + np.einsum("nj,nj->n", z, slopes[cl, mem])
    labels = (rng.random(n) < 1.0 / (1.0 + np.exp(-logit))).astype(np.int8)

    if registry is None:
        registry = ValueRegistry()
    if len(registry) == 0:
        for f in range(q):
            for t in range(C * K):
                registry.intern(f, f"f{f}_{t}")
    elif len(registry) != spec.n_values:
        raise ValueError("registry does not match the planted value universe")
    cats = tok + (np.arange(q) * C * K)[None, :]
    return CtrTable(labels, dense, cats.astype(np.int64), registry)


def planted_splits(spec: PlantedCtrSpec, n_test: int = 50_000) -> tuple[CtrTable, CtrTable]:
    """Train and test tables over one latent structure; the test split reuses the train registry."""
    train = planted_ctr(spec, rows_seed=spec.seed + 1000)
    test_spec = PlantedCtrSpec(**{**spec.__dict__, "n_rows": n_test})
    test = planted_ctr(test_spec, registry=train.registry, rows_seed=spec.seed + 2000)
    return train, test
