"""Run configuration, parsed and validated before any work starts."""

import json
import math
from dataclasses import asdict, dataclass, fields

from .exceptions import ConfigError
from .features import DEFAULT_BUCKETS, HashConfig
from .lr import DEFAULT_BATCH_SIZE, LRHyperParams
from .search import TerminationConfig
from .tabular import SMALL_DATA_THRESHOLD, BlockRule


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    validation_fraction: float = 0.2
    max_runtime: float = None
    max_cross_features: int = None
    performance_guard: bool = True
    bucket_count: int = DEFAULT_BUCKETS
    granularities: tuple = None
    small_data_threshold: int = SMALL_DATA_THRESHOLD
    small_multiplier: int = 2
    large_multiplier: int = 5
    batch_size: int = DEFAULT_BATCH_SIZE
    full_epochs: int = 1
    tune: bool = True
    hyper: dict = None

    def __post_init__(self):
        try:
            self._validate()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    def _validate(self):
        _expect_int("seed", self.seed, 0)
        if self.seed >= 1 << 64:
            raise ValueError("seed must fit in 64 unsigned bits")
        if isinstance(self.validation_fraction, bool) or not 0 < float(self.validation_fraction) < 1:
            raise ValueError("validation_fraction must lie in (0, 1)")
        if self.max_runtime is not None:
            if isinstance(self.max_runtime, bool) or not math.isfinite(float(self.max_runtime)) \
                    or self.max_runtime < 0:
                raise ValueError("max_runtime must be a non-negative number of seconds")
        if self.max_cross_features is not None:
            _expect_int("max_cross_features", self.max_cross_features, 0)
        for key in ("performance_guard", "tune"):
            if not isinstance(getattr(self, key), bool):
                raise ValueError(f"{key} must be true or false")
        HashConfig(self.bucket_count, self.seed)
        if self.granularities is not None:
            g = self.granularities
            if not isinstance(g, (list, tuple)) or not g or any(isinstance(x, bool) or not isinstance(x, int)
                                                                 or x < 1 for x in g):
                raise ValueError("granularities must be a non-empty list of positive integers")
            if list(g) != sorted(set(g)):
                raise ValueError("granularities must be strictly increasing")
            object.__setattr__(self, "granularities", tuple(g))
        _expect_int("small_data_threshold", self.small_data_threshold, 1)
        _expect_int("small_multiplier", self.small_multiplier, 1)
        _expect_int("large_multiplier", self.large_multiplier, 1)
        _expect_int("batch_size", self.batch_size, 1)
        _expect_int("full_epochs", self.full_epochs, 1)
        if self.hyper is not None:
            if not isinstance(self.hyper, dict) or set(self.hyper) - {"alpha", "l1", "l2"}:
                raise ValueError("hyper accepts only alpha, l1 and l2")
            self.hyper_params()

    @property
    def termination(self):
        return TerminationConfig(self.max_runtime, self.max_cross_features, self.performance_guard)

    @property
    def block_rule(self):
        return BlockRule(self.small_data_threshold, self.small_multiplier, self.large_multiplier)

    def hyper_params(self):
        """Fixed hyper-parameters (used when tuning is off, and before tuning)."""
        return LRHyperParams(batch_size=self.batch_size, **(self.hyper or {}))

    def to_dict(self):
        doc = asdict(self)
        if doc["granularities"] is not None:
            doc["granularities"] = list(doc["granularities"])
        return doc

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**doc)

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config is not valid JSON: {exc}") from None
        return cls.from_dict(doc)


def _expect_int(name, value, lo):
    if isinstance(value, bool) or not isinstance(value, int) or value < lo:
        raise ValueError(f"{name} must be an integer >= {lo}")
