"""A small DLRM-style click model on numpy with hand-written backprop.

Dense features go through a bottom MLP; every categorical feature is looked
up in the embedding backend (a shared memory under some allocation scheme,
or the two QR tables); the pieces are concatenated and fed to a top MLP with
a sigmoid output. Training is plain mini-batch SGD on binary cross-entropy.
"""

from __future__ import annotations

import json
import math
import os
import time
import warnings
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .allocation import AllocationScheme, BudgetError, Variant
from .hashing import seed_from
from .memory_table import LocationMatrix, SharedMemory
from .semantics import CtrTable, OccurrenceIndex, SubsampleSpec, subsample

SCHEMES = ("full", "hash", "lma", "qr")


class ConfigError(ValueError):
    pass


class NumericError(FloatingPointError):
    pass


class UndefinedMetricError(ValueError):
    pass


@dataclass
class ModelConfig:
    scheme: str = "lma"
    d: int = 32
    m: int | None = None
    alpha: float | None = None
    n_h: int = 4
    tau: int = 5
    n_samples: int = 125_000
    bottom: tuple[int, ...] = (16, 16)
    top: tuple[int, ...] = (64, 32, 1)
    lr: float = 1.0
    batch_size: int = 256
    epochs: int = 5
    seed: int = 42
    qr_m: int | None = None
    dtype: str = "float64"

    def __post_init__(self):
        self.bottom = tuple(int(w) for w in self.bottom)
        self.top = tuple(int(w) for w in self.top)
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if any(w < 1 for w in self.bottom + self.top) or not self.top or self.top[-1] != 1:
            raise ConfigError("MLP widths must be >= 1 and the top MLP must end in 1")
        if self.batch_size < 1 or self.d < 1 or self.epochs < 0:
            raise ConfigError("batch size and d must be >= 1, epochs >= 0")
        if self.scheme == "full":
            if self.alpha is not None and self.alpha != 1:
                raise ConfigError("full embedding takes no expansion rate")
        elif (self.m is None) == (self.alpha is None):
            raise ConfigError("give exactly one of m and alpha")

    def budget(self, n_values: int) -> int:
        if self.scheme == "full":
            need = n_values * self.d
            if self.m is not None and self.m < need:
                raise BudgetError(f"full embedding needs m >= {need}")
            return need if self.m is None else self.m
        if self.m is not None:
            return self.m
        return max(1, math.ceil(n_values * self.d / self.alpha))


@dataclass
class Batch:
    dense: np.ndarray
    cats: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if not (len(self.dense) == len(self.cats) == len(self.labels)):
            raise ValueError("batch parts differ in row count")


def batch_of(table: CtrTable, rows=None) -> Batch:
    if rows is None:
        return Batch(table.dense, table.cats, table.labels)
    return Batch(table.dense[rows], table.cats[rows], table.labels[rows])


# ---------------------------------------------------------------------------
# embedding backends
# ---------------------------------------------------------------------------


class MemoryEmbedding:
    """Embeddings read from one common memory through a precomputed location table."""

    def __init__(self, scheme: AllocationScheme, memory: SharedMemory, table: np.ndarray):
        self.scheme = scheme
        self.memory = memory
        self.table = np.asarray(table, dtype=np.int64)
        self.d = scheme.d

    @property
    def n_params(self) -> int:
        return self.memory.m

    def parameters(self) -> list[np.ndarray]:
        return [self.memory.params]

    def _locs(self, cats: np.ndarray) -> tuple[LocationMatrix, np.ndarray]:
        flat = cats.ravel()
        if flat.size and flat.max() >= len(self.table):
            raise IndexError(f"unregistered value id {int(flat.max())}")
        missing = flat < 0
        rows = self.table[np.where(missing, 0, flat)]
        return LocationMatrix(rows, np.where(missing, 0, flat)), missing

    def lookup(self, cats: np.ndarray) -> np.ndarray:
        locs, missing = self._locs(cats)
        out = self.memory.gather(locs)
        out[missing] = 0.0
        return out.reshape(cats.shape + (self.d,))

    def gradients(self, cats: np.ndarray, grad: np.ndarray) -> list[np.ndarray]:
        locs, missing = self._locs(cats)
        g = grad.reshape(-1, self.d).copy()
        g[missing] = 0.0
        return [self.memory.scatter_add(locs, g)]


class QrEmbedding:
    """Quotient-remainder compositional embedding ``R[v % m_q] * Q[v // m_q]``."""

    def __init__(self, n_values: int, d: int, m_q: int, seed: int, dtype=np.float64):
        if m_q < 1:
            raise ValueError("m_q must be >= 1")
        self.n_values, self.d, self.m_q = n_values, d, m_q
        rng = np.random.default_rng(seed)
        a = math.sqrt(1.0 / d)
        self.remainder = rng.uniform(-a, a, size=(m_q, d)).astype(dtype)
        # quotient table starts near 1 so early products keep the remainder's scale
        self.quotient = (1.0 + rng.uniform(-a, a, size=(-(-n_values // m_q), d))).astype(dtype)

    @classmethod
    def for_budget(cls, n_values: int, d: int, m: int, seed: int, dtype=np.float64) -> "QrEmbedding":
        best = None
        for m_q in range(1, n_values + 1):
            if (m_q + -(-n_values // m_q)) * d <= m:
                best = m_q
        if best is None:
            raise BudgetError(f"no QR split of {n_values} values fits {m} parameters")
        return cls(n_values, d, best, seed, dtype)

    @property
    def n_params(self) -> int:
        return self.remainder.size + self.quotient.size

    def parameters(self) -> list[np.ndarray]:
        return [self.remainder, self.quotient]

    def _split(self, cats):
        flat = cats.ravel()
        if flat.size and flat.max() >= self.n_values:
            raise IndexError(f"unregistered value id {int(flat.max())}")
        missing = flat < 0
        v = np.where(missing, 0, flat)
        return v % self.m_q, v // self.m_q, missing

    def lookup(self, cats: np.ndarray) -> np.ndarray:
        j, k, missing = self._split(cats)
        out = self.remainder[j] * self.quotient[k]
        out[missing] = 0.0
        return out.reshape(cats.shape + (self.d,))

    def gradients(self, cats: np.ndarray, grad: np.ndarray) -> list[np.ndarray]:
        j, k, missing = self._split(cats)
        g = grad.reshape(-1, self.d).copy()
        g[missing] = 0.0
        gr = np.zeros_like(self.remainder)
        gq = np.zeros_like(self.quotient)
        np.add.at(gr, j, g * self.quotient[k])
        np.add.at(gq, k, g * self.remainder[j])
        return [gr, gq]


def qr_lookup(qr: QrEmbedding, v: int) -> np.ndarray:
    return qr.remainder[v % qr.m_q] * qr.quotient[v // qr.m_q]


# ---------------------------------------------------------------------------
# MLP and the full model
# ---------------------------------------------------------------------------


class Mlp:
    def __init__(self, widths: Sequence[int], n_in: int, rng: np.random.Generator, last_relu: bool, dtype=np.float64):
        self.weights, self.biases = [], []
        for w in widths:
            a = 1.0 / math.sqrt(n_in)
            self.weights.append(rng.uniform(-a, a, size=(n_in, w)).astype(dtype))
            self.biases.append(rng.uniform(-a, a, size=w).astype(dtype))
            n_in = w
        self.last_relu = last_relu

    def parameters(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.parameters())

    def forward(self, x):
        acts = [x]
        n = len(self.weights)
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            x = x @ W + b
            if i < n - 1 or self.last_relu:
                x = np.maximum(x, 0.0)
            acts.append(x)
        return x, acts

    def backward(self, acts, grad):
        grads = []
        n = len(self.weights)
        for i in range(n - 1, -1, -1):
            if i < n - 1 or self.last_relu:
                grad = grad * (acts[i + 1] > 0)
            grads.append(grad.sum(axis=0))
            grads.append(acts[i].T @ grad)
            grad = grad @ self.weights[i].T
        return grads[::-1], grad


def _log_loss(logits, labels):
    # mean BCE from logits, stable for large |logit|
    return float(np.mean(np.logaddexp(0.0, logits) - labels * logits))


class CtrModel:
    def __init__(self, embedding, n_dense: int, n_cat: int, bottom: Sequence[int], top: Sequence[int], seed: int, dtype=np.float64):
        rng = np.random.default_rng(seed)
        self.embedding = embedding
        self.n_dense, self.n_cat = n_dense, n_cat
        self.bottom = Mlp(bottom, n_dense, rng, last_relu=True, dtype=dtype) if bottom and n_dense else None
        width = (bottom[-1] if self.bottom else n_dense) + n_cat * embedding.d
        self.top = Mlp(top, width, rng, last_relu=False, dtype=dtype)

    def parameters(self) -> list[np.ndarray]:
        return (self.bottom.parameters() if self.bottom else []) + self.top.parameters() + self.embedding.parameters()

    @property
    def n_params(self) -> int:
        return (self.bottom.n_params if self.bottom else 0) + self.top.n_params + self.embedding.n_params

    @staticmethod
    def dense_transform(dense):
        return np.log1p(np.maximum(dense, 0.0))

    def _forward(self, batch: Batch):
        x = self.dense_transform(batch.dense)
        if self.bottom:
            h, bacts = self.bottom.forward(x)
        else:
            h, bacts = x, None
        emb = self.embedding.lookup(batch.cats)
        z = np.concatenate([h, emb.reshape(len(emb), -1)], axis=1)
        out, tacts = self.top.forward(z)
        return out[:, 0], (bacts, tacts, h.shape[1])

    def logits(self, batch: Batch) -> np.ndarray:
        return self._forward(batch)[0]

    def forward(self, batch: Batch) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.logits(batch)))

    def loss_and_gradients(self, batch: Batch):
        """Mean BCE and gradients aligned with :meth:`parameters`."""
        logit, (bacts, tacts, h_width) = self._forward(batch)
        y = batch.labels.astype(logit.dtype)
        loss = _log_loss(logit, y)
        p = 1.0 / (1.0 + np.exp(-logit))
        g = ((p - y) / len(y))[:, None]
        top_grads, gz = self.top.backward(tacts, g)
        bottom_grads = []
        if self.bottom:
            bottom_grads, _ = self.bottom.backward(bacts, gz[:, :h_width])
        gemb = gz[:, h_width:].reshape(len(y), self.n_cat, self.embedding.d)
        emb_grads = self.embedding.gradients(batch.cats, gemb)
        return loss, bottom_grads + top_grads + emb_grads

    def backward_step(self, batch: Batch, lr: float, batch_id=None) -> float:
        loss, grads = self.loss_and_gradients(batch)
        if not math.isfinite(loss):
            raise NumericError(f"non-finite loss {loss} at batch {batch_id}")
        if lr:
            for p, g in zip(self.parameters(), grads):
                p -= lr * g
        return loss


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


def roc_auc(labels, scores) -> float:
    """Rank-sum AUC with midranks for ties."""
    labels = np.asarray(labels).astype(bool)
    scores = np.asarray(scores, dtype=np.float64)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs both classes")
    ranks = rankdata(scores, method="average")
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


@dataclass
class Metrics:
    loss: float
    accuracy: float
    auc: float | None


def evaluate(model: CtrModel, table: CtrTable, batch_size: int = 8192) -> Metrics:
    if table.n_rows == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    logits = np.concatenate(
        [model.logits(batch_of(table, slice(i, i + batch_size))) for i in range(0, table.n_rows, batch_size)]
    )
    y = table.labels.astype(np.float64)
    loss = _log_loss(logits, y)
    acc = float(np.mean((logits > 0) == (y > 0.5)))
    try:
        auc = roc_auc(y, logits)
    except UndefinedMetricError as exc:
        warnings.warn(str(exc))
        auc = None
    return Metrics(loss, acc, auc)


# ---------------------------------------------------------------------------
# construction and training
# ---------------------------------------------------------------------------


def build_embedding(config: ModelConfig, n_values: int, index: OccurrenceIndex | None):
    dtype = np.dtype(config.dtype)
    m = config.budget(n_values)
    init_seed = seed_from(config.seed, 101)
    if config.scheme == "qr":
        if config.qr_m is not None:
            return QrEmbedding(n_values, config.d, config.qr_m, init_seed, dtype)
        return QrEmbedding.for_budget(n_values, config.d, m, init_seed, dtype)
    variant = Variant(config.scheme)
    scheme = AllocationScheme(
        variant, config.d, m, n_values=n_values if variant is Variant.FULL else None,
        tau=config.tau, seed=seed_from(config.seed, 102), n_h=config.n_h,
    )
    if variant is Variant.LMA:
        if index is None:
            raise ValueError("lma needs an occurrence index")
        if index.n_rows > config.n_samples:
            index = subsample(index, SubsampleSpec(config.n_samples, seed_from(config.seed, 103)))
        table = scheme.location_table(index)
    else:
        table = scheme.location_table(n_values=n_values)
    memory = SharedMemory.uniform(m, math.sqrt(1.0 / config.d), init_seed, dtype)
    return MemoryEmbedding(scheme, memory, table)


def build_model(config: ModelConfig, train: CtrTable, index: OccurrenceIndex | None = None) -> CtrModel:
    n_values = train.n_values
    if index is None and config.scheme == "lma":
        index = OccurrenceIndex.from_table(train)
    emb = build_embedding(config, n_values, index)
    return CtrModel(
        emb, train.dense.shape[1], train.cats.shape[1], config.bottom, config.top,
        seed_from(config.seed, 104), np.dtype(config.dtype),
    )


@dataclass
class TrainResult:
    model: CtrModel
    log: list[dict]
    step_losses: list[float] = field(default_factory=list)


def _record(epoch, metrics: Metrics, model: CtrModel, wall_ms):
    return {
        "epoch": epoch,
        "split": "test",
        "loss": metrics.loss,
        "accuracy": metrics.accuracy,
        "auc": metrics.auc,
        "params_total": model.n_params,
        "params_memory": model.embedding.n_params,
        "wall_ms": wall_ms,
    }


def train(config: ModelConfig, train_table: CtrTable, test_table: CtrTable,
          index: OccurrenceIndex | None = None, timing: bool = False, log_path=None) -> TrainResult:
    """Shuffled mini-batch SGD; evaluates the test split before training and after each epoch.

    ``wall_ms`` is only filled when ``timing`` is set so that logs of equal
    configurations are byte-identical.
    """
    t0 = time.perf_counter()
    model = build_model(config, train_table, index)
    clock = (lambda: round((time.perf_counter() - t0) * 1000.0, 3)) if timing else (lambda: None)
    log = [_record(0, evaluate(model, test_table), model, clock())]
    shuffle = np.random.default_rng(seed_from(config.seed, 105))
    losses = []
    n = train_table.n_rows
    for epoch in range(1, config.epochs + 1):
        order = shuffle.permutation(n)
        for b, lo in enumerate(range(0, n, config.batch_size)):
            batch = batch_of(train_table, order[lo : lo + config.batch_size])
            losses.append(model.backward_step(batch, config.lr, batch_id=(epoch, b)))
        log.append(_record(epoch, evaluate(model, test_table), model, clock()))
    if log_path is not None:
        write_log(log, log_path)
    return TrainResult(model, log, losses)


def write_log(log: list[dict], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in log:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def save_checkpoint(model: CtrModel, config: ModelConfig, directory) -> dict:
    """Memory (or QR tables) in the memory checkpoint format, MLP weights as flat ``<f8``, config as JSON."""
    os.makedirs(directory, exist_ok=True)
    paths = {}
    emb = model.embedding
    if isinstance(emb, MemoryEmbedding):
        paths["memory"] = os.path.join(directory, "memory.bin")
        emb.memory.save(paths["memory"])
    else:
        flat = np.concatenate([p.ravel() for p in emb.parameters()])
        paths["memory"] = os.path.join(directory, "qr_tables.bin")
        SharedMemory(flat, "qr", None).save(paths["memory"])
    mlp = [p for p in model.parameters()[: -len(emb.parameters())]]
    paths["mlp"] = os.path.join(directory, "mlp.bin")
    with open(paths["mlp"], "wb") as fh:
        fh.write(np.concatenate([p.ravel() for p in mlp]).astype("<f8").tobytes())
    paths["config"] = os.path.join(directory, "config.json")
    cfg = asdict(config)
    cfg["mlp_shapes"] = [list(p.shape) for p in mlp]
    with open(paths["config"], "w", encoding="utf-8") as fh:
        json.dump(cfg, fh, sort_keys=True, indent=1)
    return paths
