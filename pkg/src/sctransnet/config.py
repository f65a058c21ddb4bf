"""Configuration dataclasses and their JSON (de)serialization.

Config files are JSON with the same nesting as ``RunConfig``.  Unknown
keys are rejected so typos fail loudly, and values round-trip losslessly.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigurationError


@dataclass
class ModelConfig:
    channels: tuple[int, ...] = (32, 64, 128, 256)
    bottleneck_channels: int = 512
    patch_size: int = 16
    num_sctb: int = 4
    expansion: float = 2.66
    num_heads: int = 1
    deep_supervision: bool = True
    positional_encoding: bool = False
    spatial_embedding: bool = True
    gslc: bool = True
    gate_sigmoid: bool = True
    sctb_shared: bool = True
    ffn_activation: str = "gelu"
    threshold: float = 0.5
    dtype: str = "float32"
    pe_grid: int = 16

    def __post_init__(self):
        self.channels = tuple(int(c) for c in self.channels)
        if any(b <= a for a, b in zip(self.channels, self.channels[1:])):
            raise ConfigurationError(f"channels must be strictly increasing, "
                                     f"got {self.channels}")
        if self.bottleneck_channels <= self.channels[-1]:
            raise ConfigurationError("bottleneck must widen the last stage")
        p = self.patch_size
        if p < 8 or (p & (p - 1)) != 0:
            raise ConfigurationError(f"patch_size must be a power of two >= 8, "
                                     f"got {p}")
        if self.num_heads < 1:
            raise ConfigurationError("num_heads must be >= 1")
        if self.num_heads > 1 and any(c % self.num_heads for c in self.channels):
            raise ConfigurationError(
                f"num_heads={self.num_heads} must divide every channel count "
                f"{self.channels}")
        if self.expansion <= 1.0:
            raise ConfigurationError("expansion factor must exceed 1")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigurationError("threshold must lie in [0, 1]")
        if self.dtype not in ("float32", "float64"):
            raise ConfigurationError(f"dtype must be float32 or float64, "
                                     f"got {self.dtype}")
        if self.ffn_activation not in ("gelu", "relu", "sigmoid"):
            raise ConfigurationError(f"unknown ffn_activation "
                                     f"{self.ffn_activation!r}")
        if self.num_sctb < 1:
            raise ConfigurationError("num_sctb must be >= 1")

    @property
    def channel_sum(self) -> int:
        return sum(self.channels)

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64

    def expanded_channels(self, c: int) -> int:
        """FFN expansion width, rounded down to an even count so the
        two depthwise branches split exactly."""
        e = int(self.expansion * c)
        return e - (e % 2)


@dataclass
class TrainConfig:
    lr0: float = 0.001
    lr_min: float = 1e-5
    batch: int = 16
    epochs: int = 1000
    seed: int = 0
    crop: int = 256
    log_every: int = 1
    val_every: int = 1
    checkpoint_every: int = 50
    augment: bool = True

    def __post_init__(self):
        if self.batch < 1 or self.epochs < 1:
            raise ConfigurationError("batch and epochs must be >= 1")
        if self.lr0 <= 0 or self.lr_min < 0 or self.lr_min > self.lr0:
            raise ConfigurationError("need lr0 > 0 and 0 <= lr_min <= lr0")
        if self.crop % 16:
            raise ConfigurationError("crop size must be divisible by 16")


@dataclass
class DataConfig:
    root: str = ""
    train_split: str = ""
    test_split: str = ""


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    out: str = "runs/default"


def _build(cls, d: dict, path: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(d) - names)
    if unknown:
        raise ConfigurationError(f"unknown config key(s) {unknown} under "
                                 f"'{path or 'top level'}'")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in d:
            continue
        v = d[f.name]
        if dataclasses.is_dataclass(f.type) or f.name in ("model", "train", "data"):
            sub = {"model": ModelConfig, "train": TrainConfig,
                   "data": DataConfig}[f.name]
            if not isinstance(v, dict):
                raise ConfigurationError(f"config key '{f.name}' must be a table")
            v = _build(sub, v, f"{path}{f.name}.")
        kwargs[f.name] = v
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from exc


def run_config_from_dict(d: dict) -> RunConfig:
    return _build(RunConfig, d, "")


def run_config_to_dict(cfg: RunConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["model"]["channels"] = list(cfg.model.channels)
    return d


def load_run_config(path) -> RunConfig:
    text = Path(path).read_text()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON: {exc}") from exc
    return run_config_from_dict(d)


def save_run_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(json.dumps(run_config_to_dict(cfg), indent=2) + "\n")


def apply_overrides(cfg: RunConfig, assignments: list[str]) -> RunConfig:
    """Apply ``section.key=value`` overrides (values parsed as JSON,
    falling back to string)."""
    d = run_config_to_dict(cfg)
    for item in assignments:
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} is not key=value")
        key, _, raw = item.partition("=")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = d
        parts = key.split(".")
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise ConfigurationError(f"unknown config section {part!r} "
                                         f"in override {item!r}")
            node = node[part]
        if parts[-1] not in node:
            raise ConfigurationError(f"unknown config key {key!r}")
        node[parts[-1]] = value
    return run_config_from_dict(d)
