"""Automatic cross-feature learning for logistic regression on tabular data."""

from .estimator import CrossFeatureClassifier
from .features import CrossFeature, FeatureSet, HashConfig
from .lr import LRHyperParams, LRModel, auc
from .producer import Producer, ProducerArtifact, bench_latency, load, save
from .search import CrossSearch, TerminationConfig, beam_search
from .tabular import FeatureSchema, FieldDef, Kind, RawTable, load_csv

__version__ = "0.1.0"

__all__ = [
    "CrossFeature", "CrossFeatureClassifier", "CrossSearch", "FeatureSchema", "FeatureSet", "FieldDef",
    "HashConfig", "Kind", "LRHyperParams", "LRModel", "Producer", "ProducerArtifact", "RawTable",
    "TerminationConfig", "auc", "beam_search", "bench_latency", "load", "load_csv", "save",
]
