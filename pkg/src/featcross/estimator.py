"""scikit-learn style estimator wrapping the whole fit pipeline:

split -> fill -> discretize and filter granularities -> encode -> tune LR ->
cross-feature search -> float32 artifact.
"""

import logging
import math
import threading
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .config import RunConfig
from .exceptions import NonBinaryLabel, SchemaError
from .features import (
    DEFAULT_BUCKETS,
    EncodedData,
    FeatureSet,
    FieldEncoder,
    HashConfig,
    NumericBinning,
    default_levels,
    discretize_multi_granularity,
    filter_granularities,
    granularity_depth,
)
from .lr import DEFAULT_BATCH_SIZE, evaluate_scores, hyper_grid, linear_scores, sigmoid, tune_hyperparams
from .producer import ProducerArtifact
from .search import CrossSearch
from .tabular import (
    SMALL_DATA_THRESHOLD,
    FeatureSchema,
    FieldDef,
    Kind,
    RawTable,
    fill_missing,
    partition_blocks,
    split_train_validation,
    table_from_records,
)

log = logging.getLogger(__name__)


def infer_schema(frame, label=None):
    """Schema for a DataFrame-like object: numeric dtypes become numerical fields."""
    fields = []
    for name in frame.columns:
        if name == label:
            continue
        kind = Kind.NUMERICAL if np.dtype(frame[name].dtype).kind in "iuf" else Kind.CATEGORICAL
        fields.append(FieldDef(str(name), kind))
    return FeatureSchema(tuple(fields), label if label is not None else "label")


def as_table(X, y=None, schema=None, require_labels=False):
    """Coerce ``X`` (RawTable, DataFrame-like, or rows in schema order) to a RawTable."""
    if isinstance(X, RawTable):
        table = X if y is None else RawTable(X.schema, X.columns, _labels(y, X.n_rows))
    elif hasattr(X, "columns") and hasattr(X, "dtypes"):
        schema = schema or infer_schema(X)
        missing = [n for n in schema.names if n not in X.columns]
        if missing:
            raise SchemaError(f"frame lacks columns {missing}")
        if y is None and schema.label in X.columns:
            y = np.asarray(X[schema.label])
        cols = {}
        for f in schema.fields:
            raw = np.asarray(X[f.name], dtype=object)
            if f.kind is Kind.NUMERICAL:
                cols[f.name] = np.array([_num(v) for v in raw], dtype=np.float64)
            else:
                col = np.empty(raw.size, dtype=object)
                col[:] = [None if _is_missing(v) else str(v) for v in raw]
                cols[f.name] = col
        table = RawTable(schema, cols, None if y is None else _labels(y, len(X)))
    else:
        if schema is None:
            raise SchemaError("a schema is required for plain row input")
        rows = list(X)
        if any(len(r) != len(schema.fields) for r in rows):
            raise SchemaError(f"every row must carry {len(schema.fields)} values")
        table = table_from_records(rows, schema, None if y is None else _labels(y, len(rows)))
    if require_labels and table.labels is None:
        raise SchemaError("labels are required for fitting")
    if schema is not None and table.schema.names != schema.names:
        raise SchemaError("input columns do not match the fitted schema")
    return table


def _is_missing(v):
    return v is None or v == "" or (isinstance(v, float) and math.isnan(v))


def _num(v):
    if _is_missing(v):
        return math.nan
    try:
        v = float(v)
    except (TypeError, ValueError):
        return math.nan
    return v if math.isfinite(v) else math.nan


def _labels(y, n):
    y = np.asarray(y)
    if y.shape != (n,):
        raise SchemaError(f"expected {n} labels, got shape {y.shape}")
    if y.size and not np.isin(y, (0, 1)).all():
        raise NonBinaryLabel("labels must be 0 or 1")
    return y.astype(np.int8)


def kept_field_count(schema, levels):
    """Base field count after keeping the best half of each column's granularities."""
    keep = math.ceil(len(levels) / 2)
    return sum(keep if f.kind is Kind.NUMERICAL else 1 for f in schema.fields)


@dataclass
class Prepared:
    """Everything the search needs, derived from the training table alone."""

    schema: FeatureSchema
    rules: object
    discretization: dict
    hash: HashConfig
    encoder: FieldEncoder
    data: EncodedData


def prepare(table, cfg):
    """Split, fill, discretize (keeping the best half of each column's granularities) and encode."""
    schema = table.schema
    train, val = split_train_validation(table, cfg.validation_fraction, cfg.seed)
    train, rules = fill_missing(train)
    val, _ = fill_missing(val, rules)
    y_train = train.labels.astype(np.float64)
    y_val = val.labels.astype(np.float64)
    hcfg = HashConfig(cfg.bucket_count, cfg.seed)
    levels = cfg.granularities or default_levels(granularity_depth(table.n_rows))
    # the filter's blocks are cut as for the first search iteration
    n_fields = kept_field_count(schema, levels)
    part = partition_blocks(train.n_rows, max(1, n_fields * (n_fields - 1) // 2), cfg.block_rule, val.n_rows)
    discretization = {}
    for f in schema.fields:
        if f.kind is not Kind.NUMERICAL:
            continue
        _, binning = discretize_multi_granularity(train.columns[f.name], levels)
        kept = filter_granularities(train.columns[f.name], val.columns[f.name], y_train, y_val, binning,
                                    part, cfg.hyper_params(), hcfg)
        discretization[f.name] = NumericBinning(binning.value_min, binning.value_max, tuple(kept))
        log.info("%s: kept granularities %s", f.name, kept)
    encoder = FieldEncoder(schema, discretization, hcfg)
    data = EncodedData(encoder.encode(train), y_train, encoder.encode(val), y_val, hcfg)
    return Prepared(schema, rules, discretization, hcfg, encoder, data)


def tune_base(prep, cfg, workers=1):
    """Grid-tune LR hyper-parameters on the base fields; returns (best, [(hyper, auc), ...])."""
    data = prep.data
    grid = hyper_grid(batch_size=cfg.batch_size)
    return tune_hyperparams(data.base_train, data.y_train, data.base_val, data.y_val,
                            FeatureSet(data.n_base).members, cfg.bucket_count, grid=grid, workers=workers,
                            epochs=cfg.full_epochs)


class CrossFeatureClassifier(ClassifierMixin, BaseEstimator):
    """Binary classifier that learns hashed cross features for a logistic regression.

    Parameters mirror :class:`featcross.config.RunConfig`; ``workers`` sets
    the thread pool used for candidate training and tuning, and ``progress``
    is called with every search iteration record.

    Fitted attributes: ``artifact_`` (a :class:`ProducerArtifact`),
    ``base_artifact_`` (the same pipeline without crosses), ``search_state_``, ``hyper_``, ``tuning_scores_``, ``base_auc_``,
    ``stop_reason_`` and ``classes_``.
    """

    def __init__(self, seed=0, validation_fraction=0.2, max_runtime=None, max_cross_features=None,
                 performance_guard=True, bucket_count=DEFAULT_BUCKETS, granularities=None,
                 small_data_threshold=SMALL_DATA_THRESHOLD, small_multiplier=2, large_multiplier=5,
                 batch_size=DEFAULT_BATCH_SIZE, full_epochs=1, tune=True, hyper=None, workers=1,
                 progress=None):
        self.seed = seed
        self.validation_fraction = validation_fraction
        self.max_runtime = max_runtime
        self.max_cross_features = max_cross_features
        self.performance_guard = performance_guard
        self.bucket_count = bucket_count
        self.granularities = granularities
        self.small_data_threshold = small_data_threshold
        self.small_multiplier = small_multiplier
        self.large_multiplier = large_multiplier
        self.batch_size = batch_size
        self.full_epochs = full_epochs
        self.tune = tune
        self.hyper = hyper
        self.workers = workers
        self.progress = progress

    @classmethod
    def from_config(cls, config, **kwargs):
        params = config.to_dict()
        params.update(kwargs)
        return cls(**params)

    def run_config(self):
        names = RunConfig.__dataclass_fields__
        return RunConfig(**{k: getattr(self, k) for k in names})

    def interrupt(self):
        """Stop the search at the next safe point; ``fit`` still returns a usable model."""
        self._stop_flag().set()
        search = getattr(self, "_search", None)
        return None if search is None else search.interrupt()

    def _stop_flag(self):
        flag = self.__dict__.get("_stop")
        if flag is None:
            flag = self.__dict__.setdefault("_stop", threading.Event())
        return flag

    def fit(self, X, y=None, schema=None):
        cfg = self.run_config()
        self._stop_flag().clear()
        table = as_table(X, y, schema, require_labels=True)
        prep = prepare(table, cfg)
        data, encoder = prep.data, prep.encoder
        if cfg.tune:
            hyper, scores = tune_base(prep, cfg, self.workers)
        else:
            hyper, scores = cfg.hyper_params(), []

        search = CrossSearch(data, hyper, cfg.termination, cfg.block_rule, self.workers, cfg.full_epochs,
                             encoder.base_names, self.progress)
        self._search = search
        if self._stop_flag().is_set():
            search.interrupt()
        state = search.run()
        base_auc = search.base_auc

        metadata = {
            "seed": cfg.seed,
            "hyper": hyper.to_dict(),
            "solution_auc": state.solution_auc,
            "base_auc": base_auc,
            "stop_reason": state.stop_reason,
            "crosses": [c.name(encoder.base_names) for c in state.solution.crosses],
            "base_fields": encoder.base_names,
            "train_rows": len(data.y_train),
            "validation_rows": len(data.y_val),
        }
        self.artifact_ = ProducerArtifact(prep.schema, prep.rules, prep.discretization, prep.hash, state.solution,
                                          state.solution_model, metadata)
        self.base_artifact_ = ProducerArtifact(prep.schema, prep.rules, prep.discretization, prep.hash,
                                               FeatureSet(data.n_base), search.base_model,
                                               {**metadata, "crosses": [], "solution_auc": base_auc})
        self.search_state_ = state
        self.hyper_ = hyper
        self.tuning_scores_ = scores
        self.base_auc_ = base_auc
        self.stop_reason_ = state.stop_reason
        self.base_names_ = encoder.base_names
        self.schema_ = prep.schema
        self.classes_ = np.array([0, 1])
        self._search = None
        return self

    def _table(self, X):
        check_is_fitted(self, "artifact_")
        return as_table(X, schema=self.schema_)

    def transform(self, X):
        """Bucket ids over the learned feature set, one column per field."""
        return self.artifact_.encode(self._table(X))

    def decision_function(self, X):
        return linear_scores(self.artifact_.model, self.transform(X))

    def predict_proba(self, X):
        p = sigmoid(self.decision_function(X))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return (self.decision_function(X) > 0).astype(np.int64)

    def evaluate(self, X, y=None):
        table = as_table(X, y, self.schema_)
        if table.labels is None:
            raise SchemaError("evaluation needs labels")
        return evaluate_scores(self.decision_function(table), table.labels)
