import json

import pytest

from featcross.config import RunConfig
from featcross.exceptions import ConfigError
from featcross.lr import LRHyperParams


def test_defaults():
    cfg = RunConfig()
    assert cfg.seed == 0 and cfg.validation_fraction == 0.2
    assert cfg.bucket_count == 1 << 18 and cfg.full_epochs == 1 and cfg.tune
    assert cfg.termination.max_cross_features is None and cfg.termination.performance_guard
    assert cfg.block_rule.block_count(1000, 8) == 14
    assert cfg.hyper_params() == LRHyperParams()


@pytest.mark.parametrize("bad", [
    {"seed": -1}, {"seed": 1.5}, {"seed": True}, {"validation_fraction": 0}, {"validation_fraction": 1.0},
    {"max_runtime": -1}, {"max_runtime": float("inf")}, {"max_cross_features": -1},
    {"performance_guard": 1}, {"bucket_count": 1000}, {"granularities": []}, {"granularities": [100, 10]},
    {"granularities": [0]}, {"batch_size": 0}, {"full_epochs": 0}, {"hyper": {"beta": 1}},
    {"hyper": {"alpha": 0}}, {"small_multiplier": 0},
])
def test_invalid_values(bad):
    with pytest.raises(ConfigError):
        RunConfig(**bad)


def test_json_round_trip(tmp_path):
    cfg = RunConfig(seed=3, granularities=[10, 100], hyper={"alpha": 0.05}, max_cross_features=4)
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    again = RunConfig.from_json(path)
    assert again == cfg and again.granularities == (10, 100)
    assert again.hyper_params().alpha == 0.05


def test_unknown_keys_and_bad_json(tmp_path):
    with pytest.raises(ConfigError, match="unknown"):
        RunConfig.from_dict({"sed": 1})
    with pytest.raises(ConfigError):
        RunConfig.from_dict([1])
    path = tmp_path / "bad.json"
    path.write_text("{nope")
    with pytest.raises(ConfigError):
        RunConfig.from_json(path)
