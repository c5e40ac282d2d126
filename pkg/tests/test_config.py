import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from momentgen.config import TrainConfig, config_hash, load_config


def test_defaults():
    cfg = TrainConfig()
    assert cfg.lam == 0.01 and cfg.noise_dim == 3 and cfg.chunk_length == 200
    assert cfg.windows == ("static", "delta", "accel")
    assert cfg.bottleneck_index == len(cfg.baseline_hidden)


@pytest.mark.parametrize("kw", [
    {"chunk_length": 1}, {"noise_dim": 0}, {"lam": -1.0}, {"learning_rate": 0.0}, {"baseline_hidden": ()},
    {"bottleneck_layer": 4}, {"windows": ("delta",)}, {"loss_placement": "both"}, {"input_kernel": "noise"},
    {"bandwidth_rule": "median"}, {"baseline_epochs": -1}, {"seed": -2},
])
def test_invalid(kw):
    with pytest.raises(ValueError):
        TrainConfig(**kw)


def test_bottleneck_dim_override():
    cfg = TrainConfig(baseline_hidden=(32, 32, 32), bottleneck_layer=2, bottleneck_dim=128)
    assert cfg.baseline_layout_hidden == (32, 128, 32)


def test_replace_ignores_none_and_rejects_unknown():
    cfg = TrainConfig().replace(lam=None, seed=5)
    assert cfg.lam == 0.01 and cfg.seed == 5
    with pytest.raises(ValueError, match="unknown"):
        TrainConfig.from_dict({"lambda": 1.0})


@given(st.floats(0, 100), st.integers(0, 1000), st.lists(st.integers(1, 64), min_size=1, max_size=4))
def test_dict_round_trip(lam, seed, hidden):
    cfg = TrainConfig(lam=lam, seed=seed, generator_hidden=tuple(hidden))
    back = TrainConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert back == cfg


def test_hash_tracks_lambda():
    a = config_hash(TrainConfig().to_dict())
    assert a == config_hash(TrainConfig().to_dict())
    assert a != config_hash(TrainConfig(lam=0.02).to_dict())


def test_load_config(tmp_path):
    (tmp_path / "c.json").write_text('{"lam": 0.5}')
    assert load_config(tmp_path / "c.json") == {"lam": 0.5}
    (tmp_path / "d.json").write_text("[1, 2]")
    with pytest.raises(ValueError):
        load_config(tmp_path / "d.json")
