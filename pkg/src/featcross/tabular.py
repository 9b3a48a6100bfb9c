"""Tabular ingestion: schema, CSV loading, missing-value filling, splitting and
the data-block partition with its cached ``b_sum`` lanes."""

import csv
import enum
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .lr import linear_scores
from .exceptions import (
    DegenerateColumn,
    MissingLabelColumn,
    NonBinaryLabel,
    SchemaError,
    StaleBsumError,
)

MISSING_TOKEN = "__MISSING__"
SMALL_DATA_THRESHOLD = 500_000


class Kind(str, enum.Enum):
    NUMERICAL = "numerical"
    CATEGORICAL = "categorical"


@dataclass(frozen=True)
class FieldDef:
    name: str
    kind: Kind

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered column declarations plus the name of the binary label column."""

    fields: tuple
    label: str

    def __post_init__(self):
        fields = tuple(f if isinstance(f, FieldDef) else FieldDef(**f) for f in self.fields)
        object.__setattr__(self, "fields", fields)
        names = [f.name for f in fields]
        if len(set(names)) != len(names):
            raise SchemaError("field names must be unique")
        if self.label in names:
            raise SchemaError(f"label column {self.label!r} is also declared as a feature")
        if not fields:
            raise SchemaError("schema declares no fields")

    @property
    def names(self):
        return [f.name for f in self.fields]

    def kind_of(self, name):
        for f in self.fields:
            if f.name == name:
                return f.kind
        raise SchemaError(f"unknown field {name!r}")

    def to_dict(self):
        return {
            "fields": [{"name": f.name, "kind": f.kind.value} for f in self.fields],
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, doc):
        try:
            return cls(fields=tuple(doc["fields"]), label=doc["label"])
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed schema document: {exc}") from exc

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"schema is not valid JSON: {exc}") from exc
        return cls.from_dict(doc)


@dataclass
class RawTable:
    """Column-oriented table.

    Numerical columns are ``float64`` arrays with NaN as the missing marker;
    categorical columns are ``object`` arrays of ``str`` with ``None`` as the
    missing marker. ``labels`` is an ``int8`` array or ``None`` for unlabeled
    (inference) tables.
    """

    schema: FeatureSchema
    columns: dict
    labels: np.ndarray = None

    def __post_init__(self):
        lengths = {len(self.columns[name]) for name in self.schema.names}
        if len(lengths) > 1:
            raise SchemaError("columns have different lengths")
        if self.labels is not None and len(self.labels) != self.n_rows:
            raise SchemaError("label count does not match row count")

    @property
    def n_rows(self):
        return len(self.columns[self.schema.fields[0].name])

    def take(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        cols = {name: col[indices] for name, col in self.columns.items()}
        labels = None if self.labels is None else self.labels[indices]
        return RawTable(self.schema, cols, labels)

    def row(self, i):
        """Row ``i`` as a list in schema order (the producer's raw-row layout)."""
        out = []
        for f in self.schema.fields:
            v = self.columns[f.name][i]
            if f.kind is Kind.NUMERICAL:
                v = None if math.isnan(v) else float(v)
            out.append(v)
        return out

    def rows(self):
        return [self.row(i) for i in range(self.n_rows)]


def _parse_number(text):
    try:
        v = float(text)
    except ValueError:
        return math.nan
    return v if math.isfinite(v) else math.nan


def _finite_or_nan(v):
    return v if math.isfinite(v) else math.nan


def _parse_label(text, lineno):
    t = text.strip()
    if t in ("0", "1"):
        return int(t)
    try:
        v = float(t)
    except ValueError:
        raise NonBinaryLabel(f"line {lineno}: label {text!r} is not 0 or 1") from None
    if v in (0.0, 1.0):
        return int(v)
    raise NonBinaryLabel(f"line {lineno}: label {text!r} is not 0 or 1")


def table_from_records(records, schema, labels=None):
    """Build a :class:`RawTable` from row sequences in schema order."""
    columns = {}
    for j, f in enumerate(schema.fields):
        values = [r[j] for r in records]
        if f.kind is Kind.NUMERICAL:
            col = np.array(
                [math.nan if v is None or v == "" else _parse_number(v) if isinstance(v, str)
                 else _finite_or_nan(float(v)) for v in values],
                dtype=np.float64,
            )
        else:
            col = np.empty(len(values), dtype=object)
            col[:] = [None if v is None or v == "" else str(v) for v in values]
        columns[f.name] = col
    lab = None
    if labels is not None:
        lab = np.asarray(labels)
        if lab.size and not np.isin(lab, (0, 1)).all():
            raise NonBinaryLabel("labels must be 0 or 1")
        lab = lab.astype(np.int8)
    return RawTable(schema, columns, lab)


def load_csv(path, schema, require_label=True):
    """Read an RFC-4180 CSV with a header row into a :class:`RawTable`.

    The header must contain exactly the schema's fields, plus the label column
    (mandatory when ``require_label``). Unparseable numerical cells become
    missing; category tokens are kept verbatim and empty cells are missing.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, header row required") from None
        header = [h.strip() for h in header]
        if len(set(header)) != len(header):
            raise SchemaError(f"{path}: duplicate header names")
        has_label = schema.label in header
        if require_label and not has_label:
            raise MissingLabelColumn(f"{path}: label column {schema.label!r} not in header")
        expected = set(schema.names) | ({schema.label} if has_label else set())
        if set(header) != expected:
            missing = sorted(set(schema.names) - set(header))
            extra = sorted(set(header) - expected)
            raise SchemaError(f"{path}: header/schema mismatch (missing={missing}, unexpected={extra})")
        pos = {h: i for i, h in enumerate(header)}
        raw = {name: [] for name in schema.names}
        labels = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise SchemaError(f"{path}: line {lineno} has {len(rec)} cells, expected {len(header)}")
            for name in schema.names:
                raw[name].append(rec[pos[name]])
            if has_label:
                labels.append(_parse_label(rec[pos[schema.label]], lineno))
    columns = {}
    for f in schema.fields:
        cells = raw[f.name]
        if f.kind is Kind.NUMERICAL:
            columns[f.name] = np.array([_parse_number(c) for c in cells], dtype=np.float64)
        else:
            col = np.empty(len(cells), dtype=object)
            col[:] = [c if c != "" else None for c in cells]
            columns[f.name] = col
    lab = np.array(labels, dtype=np.int8) if has_label else None
    return RawTable(schema, columns, lab)


@dataclass
class FillRules:
    """Replayable missing-value rules: medians for numerical columns, a token
    for categorical ones."""

    medians: dict = field(default_factory=dict)
    token: str = MISSING_TOKEN

    def apply(self, table):
        cols = {}
        for f in table.schema.fields:
            col = table.columns[f.name]
            if f.kind is Kind.NUMERICAL:
                col = np.where(np.isnan(col), self.medians[f.name], col)
            else:
                col = col.copy()
                col[np.equal(col, None)] = self.token
            cols[f.name] = col
        return RawTable(table.schema, cols, table.labels)

    def to_dict(self):
        return {"medians": {k: float(v) for k, v in self.medians.items()}, "token": self.token}

    @classmethod
    def from_dict(cls, doc):
        return cls(medians=dict(doc["medians"]), token=doc["token"])


def fill_missing(table, rules=None):
    """Fill missing cells; derive the rules from ``table`` unless given."""
    if rules is None:
        medians = {}
        for f in table.schema.fields:
            if f.kind is not Kind.NUMERICAL:
                continue
            col = table.columns[f.name]
            seen = col[~np.isnan(col)]
            if seen.size == 0:
                raise DegenerateColumn(f"numerical column {f.name!r} has no observed values")
            medians[f.name] = float(np.median(seen))
        rules = FillRules(medians)
    return rules.apply(table), rules


def split_train_validation(table, fraction=0.2, seed=0):
    """Seeded shuffle, then hold out ``round(fraction * rows)`` rows for validation.

    The training part keeps the shuffled order; blocks are cut from it.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"validation fraction must lie in (0, 1), got {fraction}")
    n = table.n_rows
    if n < 10:
        raise ValueError(f"need at least 10 rows to split, got {n}")
    n_val = int(math.floor(fraction * n + 0.5))
    perm = np.random.default_rng(seed).permutation(n)
    return table.take(perm[n_val:]), table.take(perm[:n_val])


def smbgd_block_bound(n_candidates):
    """sum_{k=0}^{ceil(log2 n)-1} 2^k, the block budget of one halving run."""
    if n_candidates < 1:
        raise ValueError("n_candidates must be >= 1")
    rounds = math.ceil(math.log2(n_candidates)) if n_candidates > 1 else 0
    return (1 << rounds) - 1


@dataclass(frozen=True)
class BlockRule:
    small_data_threshold: int = SMALL_DATA_THRESHOLD
    small_multiplier: int = 2
    large_multiplier: int = 5

    def block_count(self, n_rows, n_candidates):
        bound = smbgd_block_bound(n_candidates)
        mult = self.small_multiplier if n_rows < self.small_data_threshold else self.large_multiplier
        return max(1, mult * bound)


class BsumCache:
    """Per-row cached partial logits of the current solution.

    One lane for the training split and one for validation. Every training
    row carries the stamp of the solution its value was computed for, so a
    caller can detect reading a stale lane.
    """

    def __init__(self, n_train, n_val):
        self.train = np.zeros(n_train, dtype=np.float64)
        self.val = np.zeros(n_val, dtype=np.float64)
        self.train_stamp = np.zeros(n_train, dtype=np.int64)
        self.val_stamp = 0

    def check(self, rows, stamp):
        if self.val_stamp != stamp or np.any(self.train_stamp[rows] != stamp):
            raise StaleBsumError(f"b_sum lane is not current for solution stamp {stamp}")


@dataclass
class BlockPartition:
    """Equal-size contiguous blocks (±1 row) over the training split."""

    n_rows: int
    block_count: int
    bounds: np.ndarray
    bsum: BsumCache
    warnings: list = field(default_factory=list)

    @property
    def block_row_ranges(self):
        return [(int(self.bounds[i]), int(self.bounds[i + 1])) for i in range(self.block_count)]

    def rows(self, blocks):
        """Row indices of ``blocks``, concatenated in the given order."""
        parts = [np.arange(self.bounds[b], self.bounds[b + 1]) for b in blocks]
        return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)

    def batch_starts(self, blocks, batch_size):
        """Mini-batch boundaries over ``rows(blocks)``; batches never straddle blocks."""
        starts = []
        offset = 0
        for b in blocks:
            size = int(self.bounds[b + 1] - self.bounds[b])
            starts.extend(range(offset, offset + size, batch_size))
            offset += size
        starts.append(offset)
        return np.asarray(starts, dtype=np.int64)


def partition_blocks(n_rows, n_candidates, rule=None, n_val=0, bsum=None):
    """Cut ``n_rows`` training rows into the block count the halving run needs.

    ``bsum`` lets consecutive search iterations share one cache while the
    partition itself is re-sized for each iteration's candidate count.
    """
    rule = rule or BlockRule()
    n_blocks = rule.block_count(n_rows, n_candidates)
    notes = []
    if n_blocks > n_rows:
        msg = f"only {n_rows} training rows for {n_blocks} blocks; using {n_rows} single-row blocks"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        notes.append(msg)
        n_blocks = max(1, n_rows)
    base, extra = divmod(n_rows, n_blocks)
    sizes = np.full(n_blocks, base, dtype=np.int64)
    sizes[:extra] += 1
    bounds = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    if bsum is None:
        bsum = BsumCache(n_rows, n_val)
    return BlockPartition(n_rows, n_blocks, bounds, bsum, notes)


def update_bsum(partition, model, train_codes, val_codes, blocks, stamp):
    """Recompute cached ``b_sum`` for ``blocks`` and the whole validation lane.

    ``train_codes``/``val_codes`` are bucket matrices over ``model.fields``
    (columns in model order). ``b_sum = bias + sum of field weights``.
    """
    if train_codes.shape[1] != len(model.fields) or val_codes.shape[1] != len(model.fields):
        raise ValueError("code matrices do not match the model's fields")
    rows = partition.rows(blocks)
    cache = partition.bsum
    cache.train[rows] = linear_scores(model, train_codes[rows])
    cache.train_stamp[rows] = stamp
    cache.val[:] = linear_scores(model, val_codes)
    cache.val_stamp = stamp
