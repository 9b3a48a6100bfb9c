"""Logistic regression over hashed sparse fields.

Every field (base or cross) owns a dense weight vector of ``bucket_count``
entries and contributes exactly one active bucket per row, so a row is just a
vector of bucket ids in model field order.
"""

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .cin import cin_residual  # noqa: F401  (re-exported)

ALPHA_RANGE = (0.005, 1.0)
PENALTY_RANGE = (1e-4, 10.0)
GRID_POINTS = 6
DEFAULT_BATCH_SIZE = 256


@dataclass(frozen=True)
class LRHyperParams:
    alpha: float = 0.1
    l1: float = 1e-4
    l2: float = 1e-4
    batch_size: int = DEFAULT_BATCH_SIZE

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.l1 < 0 or self.l2 < 0:
            raise ValueError("penalties must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be a positive integer")

    def to_dict(self):
        return {"alpha": self.alpha, "l1": self.l1, "l2": self.l2, "batch_size": self.batch_size}

    @classmethod
    def from_dict(cls, doc):
        return cls(**doc)


@dataclass
class LRModel:
    """Bias plus one weight vector per field; ``weights[i]`` belongs to ``fields[i]``."""

    fields: tuple
    weights: np.ndarray
    bias: float
    hyper: LRHyperParams

    def __post_init__(self):
        self.fields = tuple(self.fields)
        if self.weights.ndim != 2 or self.weights.shape[0] != len(self.fields):
            raise ValueError("need exactly one weight vector per field")

    @property
    def bucket_count(self):
        return self.weights.shape[1]

    def field_weights(self, field):
        return self.weights[self.fields.index(field)]

    def is_finite(self):
        return bool(np.isfinite(self.weights).all() and math.isfinite(self.bias))

    def quantized(self):
        """Copy with weights rounded through float32 (the artifact's storage type)."""
        w = self.weights.astype(np.float32).astype(np.float64)
        return replace(self, weights=w)

    @classmethod
    def zeros(cls, fields, bucket_count, hyper=None, bias=0.0):
        fields = tuple(fields)
        return cls(fields, np.zeros((len(fields), bucket_count)), float(bias), hyper or LRHyperParams())


@dataclass(frozen=True)
class EvalMetric:
    auc: float
    logloss: float
    degenerate_labels: bool = False


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _as_codes(codes):
    codes = np.ascontiguousarray(codes, dtype=np.int64)
    if codes.ndim == 1:
        codes = codes[:, None]
    return codes


def linear_scores(model, codes):
    """Logits ``bias + sum_f w_f[code_f]`` for a (n, F) bucket matrix."""
    codes = _as_codes(codes)
    if codes.shape[1] != len(model.fields):
        raise ValueError(f"rows carry {codes.shape[1]} fields, model has {len(model.fields)}")
    return _kernels.linear_scores(codes, model.weights, float(model.bias))


def predict_proba(model, codes):
    return sigmoid(linear_scores(model, codes))


def predict(model, row):
    """Probability for one row given as ``{field: bucket}`` or a bucket sequence in model order."""
    if isinstance(row, dict):
        missing = [f for f in model.fields if f not in row]
        if missing or len(row) != len(model.fields):
            raise ValueError(f"row fields do not match the model (missing {missing})")
        buckets = [row[f] for f in model.fields]
    else:
        buckets = list(row)
        if len(buckets) != len(model.fields):
            raise ValueError(f"row carries {len(buckets)} buckets, model has {len(model.fields)} fields")
    z = model.bias
    for i, b in enumerate(buckets):
        z += model.weights[i, int(b)]
    return float(_kernels.sigmoid(z))


def auc(scores, labels):
    """Mann-Whitney AUC with half credit for ties.

    Returns 0.5 when only one class is present; use :func:`evaluate` to get
    that case flagged.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return 0.5
    order = np.argsort(scores, kind="mergesort")
    s = scores[order]
    # average 1-based ranks over runs of equal scores
    edges = np.flatnonzero(np.diff(s)) + 1
    starts = np.concatenate(([0], edges))
    ends = np.concatenate((edges, [s.size]))
    avg = (starts + ends + 1) / 2.0
    ranks = np.empty(s.size)
    ranks[order] = np.repeat(avg, ends - starts)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def logloss(probs, labels, eps=1e-15):
    p = np.clip(np.asarray(probs, dtype=np.float64), eps, 1.0 - eps)
    y = np.asarray(labels, dtype=np.float64)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log1p(-p)))


def evaluate_scores(logits, labels):
    labels = np.asarray(labels)
    degenerate = bool(labels.size == 0 or labels.min() == labels.max())
    if not np.isfinite(logits).all():
        return EvalMetric(auc=0.0, logloss=math.inf, degenerate_labels=degenerate)
    return EvalMetric(auc(logits, labels), logloss(sigmoid(logits), labels), degenerate)


def evaluate(model, codes, labels):
    return evaluate_scores(linear_scores(model, codes), labels)


def contiguous_batches(n_rows, batch_size):
    return np.append(np.arange(0, n_rows, batch_size, dtype=np.int64), np.int64(n_rows))


def train_full(train_codes, y_train, val_codes, y_val, fields, hyper, bucket_count,
               starts=None, train_bias=True, epochs=1):
    """Train every field jointly from zero; one pass over the rows in order.

    ``starts`` gives mini-batch boundaries (block-aligned batches come from
    :meth:`BlockPartition.batch_starts`); defaults to contiguous batches.
    """
    codes = _as_codes(train_codes)
    if codes.shape[0] == 0:
        raise ValueError("empty training data")
    if codes.shape[1] != len(fields):
        raise ValueError("code matrix does not match the field list")
    y = np.ascontiguousarray(y_train, dtype=np.float64)
    if starts is None:
        starts = contiguous_batches(codes.shape[0], hyper.batch_size)
    model = LRModel.zeros(fields, bucket_count, hyper)
    bias = np.zeros(1)
    grad = np.zeros_like(model.weights)
    frozen = np.zeros(codes.shape[0])
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(epochs):
            _kernels.sgd_pass(codes, frozen, y, model.weights, bias, np.asarray(starts, dtype=np.int64),
                              float(hyper.alpha), float(hyper.l1), float(hyper.l2), bool(train_bias), grad,
                              np.zeros_like(grad))
    model.bias = float(bias[0])
    metric = evaluate(model, val_codes, y_val) if val_codes is not None else None
    return model, metric


def train_field_wise(codes, y, partition, blocks, hyper, bucket_count, warm=None, stamp=None):
    """Train one candidate field against the frozen ``b_sum`` lane.

    ``codes`` is the candidate's bucket column over all training rows. Only the
    rows of ``blocks`` are visited, block by block, so two calls chained with
    warm-start equal one call over the concatenated block list.
    """
    rows = partition.rows(blocks)
    if stamp is not None:
        partition.bsum.check(rows, stamp)
    weights = np.zeros((1, bucket_count)) if warm is None else np.array(warm, dtype=np.float64)[None, :]
    if rows.size == 0:
        return weights[0]
    starts = partition.batch_starts(blocks, hyper.batch_size)
    sub = np.ascontiguousarray(np.asarray(codes, dtype=np.int64)[rows][:, None])
    with np.errstate(over="ignore", invalid="ignore"):
        _kernels.sgd_pass(sub, partition.bsum.train[rows], np.asarray(y, dtype=np.float64)[rows], weights,
                          np.zeros(1), starts, float(hyper.alpha), float(hyper.l1), float(hyper.l2), False,
                          np.zeros_like(weights), np.zeros_like(weights))
    return weights[0]


def field_wise_logits(weights, codes, bsum):
    """Logits of a field-wise model: ``w[code] + b_sum`` per row."""
    return _kernels.field_scores(np.asarray(codes, dtype=np.int64), weights, bsum)


def hyper_grid(points=GRID_POINTS, batch_size=DEFAULT_BATCH_SIZE):
    alphas = np.geomspace(*ALPHA_RANGE, points)
    pens = np.geomspace(*PENALTY_RANGE, points)
    return [LRHyperParams(float(a), float(l1), float(l2), batch_size)
            for a, l1, l2 in itertools.product(alphas, pens, pens)]


def tune_hyperparams(train_codes, y_train, val_codes, y_val, fields, bucket_count,
                     starts=None, grid=None, workers=1, epochs=1):
    """Log-grid search; returns the best hyper-parameters and every (hyper, auc) pair.

    Ties keep the earliest grid point. Diverged fits (non-finite weights) score 0.
    """
    grid = hyper_grid() if grid is None else list(grid)

    def fit_one(h):
        model, metric = train_full(train_codes, y_train, val_codes, y_val, fields, h, bucket_count, starts,
                                   epochs=epochs)
        return metric.auc if model.is_finite() else 0.0

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            scores = list(pool.map(fit_one, grid))
    else:
        scores = [fit_one(h) for h in grid]
    best = int(np.argmax(scores))
    return grid[best], list(zip(grid, scores))
