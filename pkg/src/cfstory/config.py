"""Run configuration: one JSON file drives every subcommand.

Configs hydrate into nested frozen dataclasses with unknown keys
rejected, support dotted command-line overrides, and hash to a short id
that names the run directory and stamps every artifact, so mixing
artifacts from different configurations fails loudly.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .generator import GeneratorConfig, GeneratorTrainConfig, SamplerConfig
from .tagger import TaggerConfig, TaggerTrainConfig

TOKENIZERS = ("simple",)


@dataclass(frozen=True)
class DataConfig:
    """Dataset file locations; dev and test may stay empty."""

    train_path: str = ""
    dev_path: str = ""
    test_path: str = ""


@dataclass(frozen=True)
class AugmentOptions:
    """Whether and how strongly to perturb training skeletons."""

    enabled: bool = True
    replace_ratio: float = 0.2

    def __post_init__(self) -> None:
        if not 0.0 <= self.replace_ratio <= 1.0:
            raise ValueError("replace_ratio must lie in [0, 1]")


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    out_dir: str = "runs"
    tokenizer: str = "simple"
    min_count: int = 1
    data: DataConfig = field(default_factory=DataConfig)
    augment: AugmentOptions = field(default_factory=AugmentOptions)
    tagger_model: TaggerConfig = field(default_factory=TaggerConfig)
    tagger_train: TaggerTrainConfig = field(default_factory=TaggerTrainConfig)
    generator_model: GeneratorConfig = field(default_factory=GeneratorConfig)
    generator_train: GeneratorTrainConfig = field(default_factory=GeneratorTrainConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)

    def __post_init__(self) -> None:
        if self.tokenizer not in TOKENIZERS:
            raise ValueError(f"unknown tokenizer {self.tokenizer!r}, expected one of {TOKENIZERS}")
        if self.min_count < 1:
            raise ValueError("min_count must be at least 1")
        if self.tagger_model.max_len != self.tagger_train.max_seq_len:
            raise ValueError(
                "tagger_model.max_len must equal tagger_train.max_seq_len "
                f"({self.tagger_model.max_len} vs {self.tagger_train.max_seq_len})"
            )
        if self.generator_model.max_len != self.generator_train.max_seq_len:
            raise ValueError(
                "generator_model.max_len must equal generator_train.max_seq_len "
                f"({self.generator_model.max_len} vs {self.generator_train.max_seq_len})"
            )


def _hydrate(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"config section {path or 'top level'} must be an object")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            where = f"{path}.{key}" if path else key
            raise ConfigError(f"unknown config key: {where}")
    kwargs = {}
    for name in names:
        if name not in data:
            continue
        value = data[name]
        hint = hints[name]
        if dataclasses.is_dataclass(hint):
            child = f"{path}.{name}" if path else name
            kwargs[name] = _hydrate(hint, value, child)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        where = path or "top level"
        raise ConfigError(f"invalid config at {where}: {exc}") from exc


def config_from_dict(data: dict) -> PipelineConfig:
    return _hydrate(PipelineConfig, data, "")


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Apply KEY.PATH=VALUE strings; values parse as JSON, else strings."""
    for override in overrides:
        if "=" not in override:
            raise ConfigError(f"override {override!r} is not of the form key=value")
        dotted, raw = override.split("=", 1)
        keys = [k for k in dotted.strip().split(".") if k]
        if not keys:
            raise ConfigError(f"override {override!r} has an empty key")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = data
        for key in keys[:-1]:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {override!r} descends into a non-object")
        node[keys[-1]] = value
    return data


def load_config(path: str | Path, overrides: list[str] | None = None) -> PipelineConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if overrides:
        data = apply_overrides(data, overrides)
    return config_from_dict(data)


def config_hash(config: PipelineConfig) -> str:
    """Short stable digest of the full configuration."""
    canonical = json.dumps(
        dataclasses.asdict(config), sort_keys=True, separators=(",", ":")
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]
