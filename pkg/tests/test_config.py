"""Config hydration, overrides, validation, and hashing."""

from __future__ import annotations

import json

import pytest

from cfstory.config import (
    PipelineConfig,
    apply_overrides,
    config_from_dict,
    config_hash,
    load_config,
)
from cfstory.errors import ConfigError


def test_defaults_hydrate_from_empty_object():
    config = config_from_dict({})
    assert config.seed == 0
    assert config.tokenizer == "simple"
    assert config.tagger_train.causal_weight == 0.8
    assert config.sampler.top_k == 40
    assert config.augment.enabled is True
    assert config == PipelineConfig()


def test_nested_sections_hydrate():
    config = config_from_dict(
        {
            "seed": 5,
            "data": {"train_path": "x.jsonl"},
            "tagger_train": {"causal_weight": 0.5, "epochs": 2},
            "sampler": {"top_k": 3},
        }
    )
    assert config.seed == 5
    assert config.data.train_path == "x.jsonl"
    assert config.tagger_train.causal_weight == 0.5
    assert config.tagger_train.epochs == 2
    assert config.sampler.top_k == 3
    # Untouched sections keep their defaults.
    assert config.generator_train.epochs == 10


def test_unknown_keys_name_their_dotted_path():
    with pytest.raises(ConfigError, match="unknown config key: wat"):
        config_from_dict({"wat": 1})
    with pytest.raises(ConfigError, match="unknown config key: tagger_train.lr"):
        config_from_dict({"tagger_train": {"lr": 0.1}})


def test_bad_values_name_their_section():
    with pytest.raises(ConfigError, match="invalid config at tagger_train"):
        config_from_dict({"tagger_train": {"causal_weight": 2.0}})
    with pytest.raises(ConfigError, match="invalid config at top level"):
        config_from_dict({"tokenizer": "whitespace"})
    with pytest.raises(ConfigError, match="must be an object"):
        config_from_dict({"data": 3})


def test_max_len_sections_must_agree():
    with pytest.raises(ConfigError, match="tagger_model.max_len must equal"):
        config_from_dict({"tagger_model": {"max_len": 128}})
    with pytest.raises(ConfigError, match="generator_model.max_len must equal"):
        config_from_dict({"generator_train": {"max_seq_len": 128}})
    ok = config_from_dict(
        {
            "tagger_model": {"max_len": 128},
            "tagger_train": {"max_seq_len": 128},
        }
    )
    assert ok.tagger_model.max_len == 128


def test_apply_overrides_parses_json_values():
    data = apply_overrides({}, ["seed=3", "data.train_path=a.jsonl", "augment.enabled=false"])
    assert data == {
        "seed": 3,
        "data": {"train_path": "a.jsonl"},
        "augment": {"enabled": False},
    }
    with pytest.raises(ConfigError, match="not of the form"):
        apply_overrides({}, ["seed"])
    with pytest.raises(ConfigError, match="empty key"):
        apply_overrides({}, ["=3"])
    with pytest.raises(ConfigError, match="non-object"):
        apply_overrides({"seed": 1}, ["seed.deep=2"])


def test_load_config_with_overrides(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"seed": 1, "sampler": {"top_k": 5}}), encoding="utf-8")
    config = load_config(path, overrides=["sampler.top_k=9", "out_dir=elsewhere"])
    assert config.seed == 1
    assert config.sampler.top_k == 9
    assert config.out_dir == "elsewhere"
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "nope.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{", encoding="utf-8")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_config(broken)


def test_config_hash_is_stable_and_sensitive():
    base = config_from_dict({})
    again = config_from_dict({})
    assert config_hash(base) == config_hash(again)
    assert len(config_hash(base)) == 12
    changed = config_from_dict({"seed": 1})
    assert config_hash(changed) != config_hash(base)
    explicit_defaults = config_from_dict({"seed": 0, "tokenizer": "simple"})
    assert config_hash(explicit_defaults) == config_hash(base)
