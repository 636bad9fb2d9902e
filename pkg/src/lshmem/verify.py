"""Monte Carlo checks of the LMA sharing and similarity-estimation theorems.

A grid point ``(phi, d, m, n_h)`` is realized by a pair of integer intervals
whose Jaccard similarity ``J`` satisfies ``J**n_h ~= phi``. Each trial draws a
fresh allocator (and a fresh +-1 memory) from a per-trial seed, so one pass
yields both the shared fraction ``f`` and the cosine similarity ``C_s``.

Reports are plain dataclasses that serialize to JSON and CSV; every analytic
column is a pure function of the grid point.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .allocation import AllocationScheme, fcsm_matrix
from .hashing import TAG_TRIAL, MinwiseAllocator, derive, kernel_value, seed_from
from .memory_table import SharedMemory, cosine_similarity, rademacher_at
from .semantics import OccurrenceIndex, SubsampleSpec, jaccard, jaccard_matrix, subsample, theorem3_envelope
from .synthetic import planted_pair, realize_jaccard

SCHEMA = "lshmem.report/1"
MIN_TRIALS = 2
ETAS_T1 = (0.2, 0.5, 1.0)
ETAS_T2 = (0.5, 1.0)
MEAN_TOL = {"1": 0.01, "2": 0.02}
VAR_REL_TOL = 0.25
TAIL_SLACK = 0.10


class UnrealizableError(ValueError):
    """No small interval pair reaches the requested kernel value."""


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridPoint:
    phi: float
    d: int
    m: int
    n_h: int

    def snap(self, tol: float = 0.01) -> tuple[tuple[int, int, int], float, float]:
        """Interval sizes ``(a, b, c)``, snapped ``J`` and snapped ``phi = J**n_h``."""
        if not 0.0 <= self.phi <= 1.0:
            raise UnrealizableError(f"phi={self.phi} outside [0, 1]")
        a, b, c = realize_jaccard(self.phi ** (1.0 / self.n_h))
        J = c / (a + b + c)
        phi = J**self.n_h
        if abs(phi - self.phi) > tol:
            raise UnrealizableError(f"phi={self.phi} with n_h={self.n_h}: nearest realizable is {phi:.4f}")
        return (a, b, c), J, phi


@dataclass
class PairSample:
    """Per-trial ``f`` and ``C_s`` at one grid point."""

    point: GridPoint
    sizes: tuple[int, int, int]
    jaccard: float
    phi: float
    f: np.ndarray
    cs: np.ndarray

    @property
    def gamma(self) -> float:
        return kernel_value(self.phi, 1, self.point.m)

    @property
    def trials(self) -> int:
        return len(self.f)

    def describe(self) -> dict:
        a, b, c = self.sizes
        p = self.point
        return {
            "phi": p.phi, "phi_snap": self.phi, "J": self.jaccard, "a": a, "b": b, "c": c,
            "d": p.d, "m": p.m, "n_h": p.n_h,
        }


def trial_seeds(seed: int, point: GridPoint, sizes, trials: int) -> np.ndarray:
    a, b, c = sizes
    base = seed_from(seed, TAG_TRIAL, a, b, c, point.d, point.m, point.n_h)
    return derive(base, np.arange(trials, dtype=np.uint64))


def _chunk(seeds: np.ndarray, point: GridPoint, sizes) -> tuple[np.ndarray, np.ndarray]:
    alloc = MinwiseAllocator.from_seed(seeds, point.d, point.n_h, point.m)
    ra, rb = alloc.interval_pair_slots(*sizes)
    f = (ra == rb).mean(axis=1)
    # +-1 memory redrawn per trial; embeddings have norm sqrt(d)
    ea = rademacher_at(seeds[:, None], ra)
    eb = rademacher_at(seeds[:, None], rb)
    return f, (ea * eb).mean(axis=1)


def simulate_pair(point: GridPoint, trials: int, seed: int = 42, workers: int = 1, tol: float = 0.01) -> PairSample:
    sizes, J, phi = point.snap(tol)
    seeds = trial_seeds(seed, point, sizes, trials)
    step = max(1, (1 << 15) // (point.d * point.n_h))
    parts = [seeds[i : i + step] for i in range(0, trials, step)]
    if workers > 1 and len(parts) > 1:
        with ThreadPoolExecutor(workers) as pool:
            out = list(pool.map(lambda s: _chunk(s, point, sizes), parts))
    else:
        out = [_chunk(s, point, sizes) for s in parts]
    f = np.concatenate([o[0] for o in out]) if out else np.zeros(0)
    cs = np.concatenate([o[1] for o in out]) if out else np.zeros(0)
    return PairSample(point, sizes, J, phi, f, cs)


def simulate_grid(grid, trials: int, seed: int = 42, workers: int = 1) -> list[PairSample]:
    return [simulate_pair(GridPoint(*g) if not isinstance(g, GridPoint) else g, trials, seed, workers) for g in grid]


def default_grid(phis=(0.1, 0.3, 0.5, 0.7, 0.9), ds=(16, 64, 256), m=10**6, n_hs=(1, 4)) -> list[GridPoint]:
    return [GridPoint(p, d, m, h) for h in n_hs for d in ds for p in phis]


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


def _clean(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, (np.floating, np.integer)):
        return _clean(x.item())
    return x


@dataclass
class TheoremReport:
    theorem: str
    point: dict
    trials: int
    empirical_mean: float
    empirical_var: float
    analytic_mean: float
    analytic_var: float
    tails: list[dict] = field(default_factory=list)
    checks: dict[str, bool] = field(default_factory=dict)
    notes: dict = field(default_factory=dict)

    @property
    def status(self) -> str:
        if self.trials < MIN_TRIALS:
            return "insufficient trials"
        return "pass" if all(self.checks.values()) else "fail"

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def to_dict(self) -> dict:
        return {
            "theorem": self.theorem,
            "status": self.status,
            "point": {k: _clean(v) for k, v in self.point.items()},
            "trials": self.trials,
            "empirical_mean": _clean(self.empirical_mean),
            "empirical_var": _clean(self.empirical_var),
            "analytic_mean": _clean(self.analytic_mean),
            "analytic_var": _clean(self.analytic_var),
            "tails": [{k: _clean(v) for k, v in t.items()} for t in self.tails],
            "checks": dict(self.checks),
            "notes": {k: _clean(v) for k, v in self.notes.items()},
        }

    def to_row(self) -> dict:
        row = {"theorem": self.theorem, "status": self.status, **self.point, "trials": self.trials}
        row.update(
            empirical_mean=self.empirical_mean, empirical_var=self.empirical_var,
            analytic_mean=self.analytic_mean, analytic_var=self.analytic_var,
        )
        for t in self.tails:
            row[f"tail_{t['eta']}_empirical"] = t["empirical"]
            row[f"tail_{t['eta']}_bound"] = t["bound"]
        return {k: _clean(v) for k, v in row.items()}


def _moments(x: np.ndarray) -> tuple[float, float]:
    mean = float(x.mean()) if len(x) else math.nan
    var = float(x.var(ddof=1)) if len(x) >= MIN_TRIALS else math.nan
    return mean, var


def _rel_ok(emp: float, ana: float, rel: float) -> bool:
    return abs(emp - ana) <= rel * ana


def theorem1_variance(gamma: float, d: int) -> float:
    return gamma * (1.0 - gamma) / d


def theorem2_variance(gamma: float, d: int, m: int) -> float:
    return (1.0 - gamma**2) / d + 2.0 * (1.0 - gamma) * (d - 1) / (d * m * m)


def chernoff_bound(gamma: float, d: int, eta: float) -> float:
    return 2.0 * math.exp(-d * gamma * eta * eta / 3.0)


def chebyshev_bound(gamma: float, d: int, eta: float) -> float:
    return (1.0 - gamma**2) / (d * eta * eta * gamma * gamma)


def theorem1_report(sample: PairSample) -> TheoremReport:
    p, g = sample.point, sample.gamma
    mean, var = _moments(sample.f)
    avar = theorem1_variance(g, p.d)
    tails, tail_ok = [], True
    for eta in ETAS_T1:
        emp = float(np.mean(np.abs(sample.f - g) > eta * g)) if sample.trials else math.nan
        bound = chernoff_bound(g, p.d, eta)
        tails.append({"eta": eta, "empirical": emp, "bound": bound})
        tail_ok &= emp <= bound * (1 + TAIL_SLACK)
    checks = {
        "mean": abs(mean - g) <= MEAN_TOL["1"],
        "variance": _rel_ok(var, avar, VAR_REL_TOL),
        "tail": bool(tail_ok),
    }
    notes = {"additive_term": (1 - sample.phi) / p.m, "mean_tol": MEAN_TOL["1"], "var_rel_tol": VAR_REL_TOL,
             "tail_slack": TAIL_SLACK}
    return TheoremReport("1", sample.describe(), sample.trials, mean, var, g, avar, tails, checks, notes)


def theorem2_report(sample: PairSample) -> TheoremReport:
    p, g = sample.point, sample.gamma
    mean, var = _moments(sample.cs)
    avar = theorem2_variance(g, p.d, p.m)
    tails, tail_ok = [], True
    for eta in ETAS_T2:
        thresh = eta * g + (1 - sample.phi) / p.m
        emp = float(np.mean(np.abs(sample.cs - sample.phi) >= thresh)) if sample.trials else math.nan
        bound = chebyshev_bound(g, p.d, eta)
        tails.append({"eta": eta, "empirical": emp, "bound": bound})
        tail_ok &= emp <= bound * (1 + TAIL_SLACK)
    checks = {
        "mean": abs(mean - g) <= MEAN_TOL["2"],
        "variance": _rel_ok(var, avar, VAR_REL_TOL),
        "tail": bool(tail_ok),
    }
    notes = {"mean_tol": MEAN_TOL["2"], "var_rel_tol": VAR_REL_TOL, "tail_slack": TAIL_SLACK}
    return TheoremReport("2", sample.describe(), sample.trials, mean, var, g, avar, tails, checks, notes)


def verify_theorem1(grid, trials: int = 10_000, seed: int = 42, workers: int = 1) -> list[TheoremReport]:
    return [theorem1_report(s) for s in simulate_grid(grid, trials, seed, workers)]


def verify_theorem2(grid, trials: int = 10_000, seed: int = 42, workers: int = 1) -> list[TheoremReport]:
    return [theorem2_report(s) for s in simulate_grid(grid, trials, seed, workers)]


# ---------------------------------------------------------------------------
# subsampled Jaccard
# ---------------------------------------------------------------------------


def subsampled_jaccards(index: OccurrenceIndex, n_s: int, trials: int, seed: int) -> np.ndarray:
    """``J_hat`` of values 0 and 1 over ``trials`` subsamples of ``n_s`` rows.

    Trial seeds do not depend on ``n_s``; since a subsample is a permutation
    prefix, trial ``t`` at ``n_s`` is nested inside trial ``t`` at ``2 n_s``
    (common random numbers for the scaling comparison).
    """
    seeds = derive(seed_from(seed, TAG_TRIAL, 3), np.arange(trials, dtype=np.uint64))
    out = np.empty(trials)
    for t, s in enumerate(seeds):
        sub = subsample(index, SubsampleSpec(n_s, int(s)))
        if sub.counts[0] == 0 and sub.counts[1] == 0:
            out[t] = math.nan
        else:
            out[t] = jaccard(sub, 0, 1)
    return out


def verify_theorem3(J: float, s: float, n: int, n_s: int, epsilon: float, trials: int = 500,
                    seed: int = 42) -> TheoremReport:
    """Subsampled Jaccard of a planted pair against the analytic envelope at ``n_s`` rows.

    A trial fails when ``|J_hat - J| > epsilon * J``; the failure frequency is
    compared with ``delta``. The variance check is one-sided because the
    envelope is loose.
    """
    pair = planted_pair(n, s, J, seed=seed_from(seed, 201))
    if n_s > n:
        raise ValueError("n_s exceeds the number of rows")
    est = subsampled_jaccards(pair.index, n_s, trials, seed)
    undefined = int(np.isnan(est).sum())
    est = est[~np.isnan(est)]
    Jr = pair.jaccard
    env = theorem3_envelope(Jr, n_s, pair.sparsity, epsilon)
    mean, var = _moments(est)
    fail = float(np.mean(np.abs(est - Jr) > epsilon * Jr)) if len(est) else math.nan
    checks = {
        "mean": abs(mean - Jr) <= env.mean_band,
        "failure": fail <= env.delta,
        "variance": var <= env.variance_center + env.variance_band if len(est) >= MIN_TRIALS else False,
    }
    point = {"J": J, "J_realized": Jr, "s": pair.sparsity, "n": n, "n_s": n_s, "epsilon": epsilon}
    notes = {"mean_band": env.mean_band, "variance_band": env.variance_band, "delta": env.delta,
             "undefined_trials": undefined}
    tails = [{"eta": epsilon, "empirical": fail, "bound": env.delta}]
    return TheoremReport("3", point, len(est), mean, var, Jr, env.variance_center, tails, checks, notes)


def variance_scaling(J: float, s: float, n: int, n_s: int, epsilon: float, trials: int = 500,
                     seed: int = 42) -> tuple[float, TheoremReport, TheoremReport]:
    """Ratio ``var(n_s) / var(2 n_s)`` with both reports."""
    r1 = verify_theorem3(J, s, n, n_s, epsilon, trials, seed)
    r2 = verify_theorem3(J, s, n, 2 * n_s, epsilon, trials, seed)
    return r1.empirical_var / r2.empirical_var, r1, r2


# ---------------------------------------------------------------------------
# quantile bands
# ---------------------------------------------------------------------------


def mid_quantiles(x: np.ndarray, step: float, qs=(0.025, 0.975)) -> np.ndarray:
    """Quantiles of lattice-valued data from the mid-distribution (piecewise linear) CDF.

    Each atom's mass is spread evenly over its lattice cell of width ``step``,
    which removes the jumps ordinary quantiles show on a coarse lattice.
    """
    u, c = np.unique(x, return_counts=True)
    F = np.concatenate([[0.0], np.cumsum(c)]) / len(x)
    xs = np.empty(2 * len(u))
    Fs = np.empty(2 * len(u))
    xs[0::2], xs[1::2] = u - step / 2, u + step / 2
    Fs[0::2], Fs[1::2] = F[:-1], F[1:]
    return np.interp(qs, Fs, xs)


def band_row(sample: PairSample) -> dict:
    d, g = sample.point.d, sample.gamma
    f_lo, f_hi = np.quantile(sample.f, [0.025, 0.975])
    c_lo, c_hi = np.quantile(sample.cs, [0.025, 0.975])
    fm_lo, fm_hi = mid_quantiles(sample.f, 1.0 / d)
    cm_lo, cm_hi = mid_quantiles(sample.cs, 2.0 / d)
    sigma = math.sqrt(theorem1_variance(g, d))
    inside = np.abs(sample.f - g) <= 1.96 * sigma
    return {
        **sample.describe(), "gamma": g, "trials": sample.trials,
        "f_q025": float(f_lo), "f_q975": float(f_hi), "cs_q025": float(c_lo), "cs_q975": float(c_hi),
        "f_width": float(fm_hi - fm_lo), "cs_width": float(cm_hi - cm_lo),
        "f_mean": float(sample.f.mean()), "cs_mean": float(sample.cs.mean()),
        "coverage": float(inside.mean()),
    }


def band_sweep(ds, phis, m: int = 10**6, n_h: int = 1, trials: int = 10_000, seed: int = 42,
               workers: int = 1, samples: list[PairSample] | None = None) -> list[dict]:
    """Per ``(d, phi)`` 95% bands of ``f`` and ``C_s``.

    ``f_q025``/``f_q975`` are the raw sample quantiles; ``f_width`` and
    ``cs_width`` come from :func:`mid_quantiles`. ``coverage`` is the share
    of ``f`` inside ``Gamma +- 1.96 sigma`` with the analytic sigma.
    """
    if not ds or not phis:
        raise ValueError("empty grid")
    if samples is None:
        samples = simulate_grid([GridPoint(p, d, m, n_h) for d in ds for p in phis], trials, seed, workers)
    return [band_row(s) for s in samples]


def width_ratios(rows: list[dict]) -> list[dict]:
    """``width(d) / width(4d)`` for every phi and every available ``(d, 4d)`` pair."""
    by = {(r["n_h"], r["phi"], r["d"]): r for r in rows}
    out = []
    for (n_h, phi, d), r in sorted(by.items()):
        r4 = by.get((n_h, phi, 4 * d))
        if r4 is None:
            continue
        out.append({
            "n_h": n_h, "phi": phi, "d": d,
            "f_ratio": r["f_width"] / r4["f_width"] if r4["f_width"] > 0 else math.inf,
            "cs_ratio": r["cs_width"] / r4["cs_width"] if r4["cs_width"] > 0 else math.inf,
        })
    return out


# ---------------------------------------------------------------------------
# similarity distortion
# ---------------------------------------------------------------------------


@dataclass
class SimilarityDistortion:
    target: np.ndarray
    realized: np.ndarray
    distance: float


def distortion(scheme: AllocationScheme, values, index: OccurrenceIndex | None = None, kernel: str = "fcsm",
               target: np.ndarray | None = None, memory: SharedMemory | None = None) -> SimilarityDistortion:
    """Frobenius distance between a target similarity matrix and the realized one.

    ``target`` defaults to the exact Jaccard matrix of ``values``. ``kernel``
    selects the realized matrix: ``"fcsm"`` (shared fractions) or
    ``"cosine"`` (cosines of embeddings read from ``memory``, a +-1 memory by
    default).
    """
    values = list(values)
    if len(values) > 1000:
        raise ValueError("distortion is a small-instance diagnostic (<= 1000 values)")
    if target is None:
        target = jaccard_matrix(index, values)
    target = np.asarray(target, dtype=np.float64)
    if kernel == "fcsm":
        realized = fcsm_matrix(scheme, values, index)
    elif kernel == "cosine":
        if memory is None:
            memory = SharedMemory.rademacher(scheme.m, seed_from(scheme.seed, 301))
        emb = memory.gather(scheme.locations(values, index))
        k = len(values)
        realized = np.eye(k)
        for a in range(k):
            for b in range(a + 1, k):
                realized[a, b] = realized[b, a] = cosine_similarity(emb[a], emb[b])
    else:
        raise ValueError(f"unknown kernel {kernel!r}")
    return SimilarityDistortion(target, realized, float(np.linalg.norm(target - realized)))


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def write_json(path, kind: str, records: list[dict], meta: dict | None = None) -> None:
    doc = {"schema": SCHEMA, "kind": kind, "meta": meta or {}, "records": records}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def write_csv(path, rows: list[dict]) -> None:
    fields: list[str] = []
    for r in rows:
        fields.extend(k for k in r if k not in fields)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# schema={SCHEMA}\n")
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if v is None else v) for k, v in r.items()})
