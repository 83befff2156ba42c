"""Run configuration: one YAML document drives every command.

Example::

    config_version: 1
    seed: 13
    paths:
      taxonomy: taxonomy.yaml
      dataset: data.tsv          # split by ``split_ratios``; or give train/validation/test
      embeddings: vectors.txt
      definitions: definitions.tsv
      output_dir: runs/baseline
    split_ratios: [0.8, 0.1, 0.1]
    strategies: {aux_enabled: false, pnc_enabled: false, decode_mode: greedy}
    train: {hidden_units: 300, max_epochs: 30}
    decode: {beam_size: 5, lam: 1.0}

Relative paths are resolved against the config file's directory.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .decode import DecodeConfig
from .errors import ConfigError
from .training import TrainConfig

CONFIG_VERSION = 1


@dataclass
class Paths:
    taxonomy: str
    embeddings: str
    dataset: str | None = None
    train: str | None = None
    validation: str | None = None
    test: str | None = None
    definitions: str | None = None
    output_dir: str = "out"


@dataclass
class RunConfig:
    paths: Paths
    seed: int = 0
    config_version: int = CONFIG_VERSION
    split_ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    embeddings_limit: int | None = None
    mean_denominator: str = "all"
    workers: int = 1
    strategies: dict = field(default_factory=lambda: {
        "aux_enabled": False, "pnc_enabled": False, "decode_mode": "greedy"})
    train: dict = field(default_factory=dict)
    decode: dict = field(default_factory=dict)

    def train_config(self) -> TrainConfig:
        values = dict(self.train)
        values.update(aux_enabled=bool(self.strategies.get("aux_enabled", False)),
                      pnc_enabled=bool(self.strategies.get("pnc_enabled", False)),
                      seed=self.seed)
        return _build(TrainConfig, values, "train")

    def decode_config(self) -> DecodeConfig:
        values = dict(self.decode)
        values.setdefault("mode", self.strategies.get("decode_mode", "greedy"))
        values.setdefault("mean_denominator", self.mean_denominator)
        return _build(DecodeConfig, values, "decode")

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["split_ratios"] = list(self.split_ratios)
        return out


def _build(cls, values: dict, section: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise ConfigError(f"unknown {section} fields: {sorted(unknown)}")
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigError(f"bad {section} section: {exc}") from exc


def parse_override(text: str) -> tuple[list[str], Any]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like key.path=value")
    key, raw = text.split("=", 1)
    return key.strip().split("."), yaml.safe_load(raw)


def apply_override(data: dict, keys: list[str], value: Any) -> None:
    node = data
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot override inside scalar {'.'.join(keys)}")
    node[keys[-1]] = value


def config_from_dict(data: dict, base_dir: Path | None = None) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    data = dict(data)
    version = data.get("config_version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config_version {version}")
    if "paths" not in data:
        raise ConfigError("config needs a 'paths' section")
    paths = dict(data.pop("paths"))
    if base_dir is not None:
        for k, v in paths.items():
            if v is not None and not Path(v).is_absolute():
                paths[k] = str(base_dir / v)
    try:
        path_obj = Paths(**paths)
    except TypeError as exc:
        raise ConfigError(f"bad paths section: {exc}") from exc
    strategies = {"aux_enabled": False, "pnc_enabled": False, "decode_mode": "greedy"}
    strategies.update(data.pop("strategies", None) or {})
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    if "split_ratios" in data:
        data["split_ratios"] = tuple(float(r) for r in data["split_ratios"])
    cfg = RunConfig(paths=path_obj, strategies=strategies, **data)
    # fail early on bad sections
    cfg.train_config()
    cfg.decode_config()
    return cfg


def load_config(path: str | Path, overrides: list[str] = ()) -> RunConfig:
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    for text in overrides:
        apply_override(data, *parse_override(text))
    return config_from_dict(data, path.parent)


def check_files(cfg: RunConfig, needed: list[str]) -> None:
    for name in needed:
        value = getattr(cfg.paths, name)
        if value is None:
            raise ConfigError(f"paths.{name} is required for this command")
        if not Path(value).exists():
            raise ConfigError(f"paths.{name}: {value} does not exist")
