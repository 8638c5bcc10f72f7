"""Strict YAML configuration for ``kiwi train``.

Unknown keys are errors, reported with their dotted path.  Relative paths are
resolved against the directory holding the config file.

Example::

    seed: 42
    output_dir: runs/quetch-mt
    data:
      train: {source: train.src, target: train.mt, alignments: train.align, target_tags: train.tags}
      valid: {source: dev.src, target: dev.mt, alignments: dev.align, target_tags: dev.tags}
    model:
      kind: quetch
      task: mt
    training:
      epochs: 20
      learning_rate: 0.001
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from .data import CORPUS_FIELDS, DEFAULT_MAX_LENGTH
from .models import ARCHITECTURES


class ConfigError(ValueError):
    pass


SELECTION_METRICS = ("auto", "f1_mult", "pearson", "spearman", "accuracy", "loss")
OPTIMIZERS = ("adam", "sgd")


def _check_keys(section: Mapping, allowed, path: str) -> None:
    if not isinstance(section, Mapping):
        raise ConfigError(f"{path or 'config'}: expected a mapping, got {type(section).__name__}")
    for key in section:
        if key not in allowed:
            where = f"{path}.{key}" if path else str(key)
            raise ConfigError(f"unknown configuration key {where!r}")


def _typed(value, kind, path: str):
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if kind is int and isinstance(value, bool) or not isinstance(value, kind):
        raise ConfigError(f"{path}: expected {kind.__name__}, got {value!r}")
    return value


def _resolve(value, base: Path, path: str) -> Path:
    if not isinstance(value, (str, Path)):
        raise ConfigError(f"{path}: expected a path, got {value!r}")
    p = Path(value).expanduser()
    return p if p.is_absolute() else (base / p).resolve()


@dataclass
class DataConfig:
    train: dict[str, Path]
    valid: dict[str, Path] | None = None
    max_length: int = DEFAULT_MAX_LENGTH
    min_freq: int = 1
    max_vocab: int | None = None


@dataclass
class ModelConfig:
    kind: str
    hparams: dict[str, Any] = field(default_factory=dict)
    predictor_model: Path | None = None


@dataclass
class TrainingConfig:
    epochs: int = 10
    batch_size: int = 16
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    clip_norm: float = 5.0
    patience: int = 10
    selection_metric: str = "auto"
    checkpoint_every: int = 1
    threshold: float = 0.5


_TRAINING_TYPES = {
    "epochs": int,
    "batch_size": int,
    "optimizer": str,
    "learning_rate": float,
    "clip_norm": float,
    "patience": int,
    "selection_metric": str,
    "checkpoint_every": int,
    "threshold": float,
}


@dataclass
class Config:
    output_dir: Path
    data: DataConfig
    model: ModelConfig
    training: TrainingConfig = field(default_factory=TrainingConfig)
    seed: int = 42

    @classmethod
    def from_dict(cls, raw: Mapping, base_dir: str | Path = ".") -> "Config":
        base = Path(base_dir).resolve()
        _check_keys(raw, ("seed", "output_dir", "data", "model", "training"), "")
        for required in ("output_dir", "data", "model"):
            if required not in raw:
                raise ConfigError(f"missing required key {required!r}")
        seed = _typed(raw.get("seed", 42), int, "seed")
        output_dir = _resolve(raw["output_dir"], base, "output_dir")
        return cls(
            output_dir=output_dir,
            data=_parse_data(raw["data"], base),
            model=_parse_model(raw["model"], base),
            training=_parse_training(raw.get("training", {}) or {}),
            seed=seed,
        )

    def to_dict(self) -> dict:
        data = {
            "train": {k: str(v) for k, v in self.data.train.items()},
            "max_length": self.data.max_length,
            "min_freq": self.data.min_freq,
        }
        if self.data.valid is not None:
            data["valid"] = {k: str(v) for k, v in self.data.valid.items()}
        if self.data.max_vocab is not None:
            data["max_vocab"] = self.data.max_vocab
        model = {"kind": self.model.kind, **copy.deepcopy(self.model.hparams)}
        if self.model.predictor_model is not None:
            model["predictor_model"] = str(self.model.predictor_model)
        return {
            "seed": self.seed,
            "output_dir": str(self.output_dir),
            "data": data,
            "model": model,
            "training": {k: getattr(self.training, k) for k in _TRAINING_TYPES},
        }

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True, default_flow_style=False)


def _parse_corpus(section, base: Path, path: str) -> dict[str, Path]:
    _check_keys(section, CORPUS_FIELDS, path)
    for required in ("source", "target"):
        if required not in section:
            raise ConfigError(f"{path}: missing required key {required!r}")
    return {k: _resolve(v, base, f"{path}.{k}") for k, v in section.items() if v is not None}


def _parse_data(section, base: Path) -> DataConfig:
    _check_keys(section, ("train", "valid", "max_length", "min_freq", "max_vocab"), "data")
    if "train" not in section:
        raise ConfigError("data: missing required key 'train'")
    valid = section.get("valid")
    max_vocab = section.get("max_vocab")
    return DataConfig(
        train=_parse_corpus(section["train"], base, "data.train"),
        valid=None if valid is None else _parse_corpus(valid, base, "data.valid"),
        max_length=_typed(section.get("max_length", DEFAULT_MAX_LENGTH), int, "data.max_length"),
        min_freq=_typed(section.get("min_freq", 1), int, "data.min_freq"),
        max_vocab=None if max_vocab is None else _typed(max_vocab, int, "data.max_vocab"),
    )


def _parse_model(section, base: Path) -> ModelConfig:
    if not isinstance(section, Mapping) or "kind" not in section:
        raise ConfigError("model: missing required key 'kind'")
    kind = section["kind"]
    if kind not in ARCHITECTURES:
        raise ConfigError(f"model.kind: unknown architecture {kind!r} (known: {', '.join(sorted(ARCHITECTURES))})")
    defaults = ARCHITECTURES[kind].defaults
    allowed = set(defaults) | {"kind"}
    if kind == "estimator":
        allowed = allowed | {"predictor_model"}
    _check_keys(section, allowed, "model")
    hparams = {}
    for key, value in section.items():
        if key in ("kind", "predictor_model"):
            continue
        default = defaults[key]
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"model.{key}: expected a boolean, got {value!r}")
        elif isinstance(default, (int, float)):
            value = _typed(value, type(default), f"model.{key}")
        elif isinstance(default, str):
            value = _typed(value, str, f"model.{key}")
        elif isinstance(default, dict):
            value = dict(_typed(value, dict, f"model.{key}"))
        hparams[key] = value
    predictor = section.get("predictor_model")
    return ModelConfig(kind, hparams, None if predictor is None else _resolve(predictor, base, "model.predictor_model"))


def _parse_training(section) -> TrainingConfig:
    _check_keys(section, _TRAINING_TYPES, "training")
    values = {k: _typed(v, _TRAINING_TYPES[k], f"training.{k}") for k, v in section.items()}
    cfg = TrainingConfig(**values)
    if cfg.optimizer not in OPTIMIZERS:
        raise ConfigError(f"training.optimizer: expected one of {', '.join(OPTIMIZERS)}, got {cfg.optimizer!r}")
    if cfg.selection_metric not in SELECTION_METRICS:
        raise ConfigError(f"training.selection_metric: expected one of {', '.join(SELECTION_METRICS)}")
    if cfg.epochs < 0 or cfg.batch_size < 1 or cfg.learning_rate <= 0:
        raise ConfigError("training: epochs must be >= 0, batch_size >= 1 and learning_rate > 0")
    return cfg


def load_config(path: str | Path) -> Config:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    try:
        raw = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from None
    return Config.from_dict(raw, path.parent)
