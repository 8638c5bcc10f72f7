"""QUETCH, NuQE and Predictor-Estimator, plus model directories on disk.

A saved model is a directory with three files:

* ``manifest.json``: format version, architecture kind, hyperparameters
  (including the task), seed, and SHA-256 digests of both vocabularies;
* ``vocab.json``: the source and target vocabularies;
* ``params.ckpt``: parameters in the :mod:`kiwi.numerics.checkpoint` format.
"""
from __future__ import annotations

import json
import os
from pathlib import Path

from ..data import Vocabulary, load_vocabs, save_vocabs
from ..numerics import checkpoint
from .base import GAP, HTER, MT, SOURCE, QEModel
from .estimator import DirectionMismatchError, Estimator, source_labels_via_reverse
from .nuqe import NuQE
from .predictor import Predictor
from .quetch import Quetch

MANIFEST_VERSION = 1

ARCHITECTURES: dict[str, type[QEModel]] = {cls.kind: cls for cls in (Quetch, NuQE, Predictor, Estimator)}


class ModelFormatError(ValueError):
    pass


def build_model(kind: str, vocabs: dict[str, Vocabulary], hparams: dict | None = None, seed: int = 0, **kwargs) -> QEModel:
    try:
        cls = ARCHITECTURES[kind]
    except KeyError:
        raise ModelFormatError(f"unknown architecture kind {kind!r} (known: {', '.join(sorted(ARCHITECTURES))})") from None
    return cls(vocabs, hparams, seed=seed, **kwargs)


def trainable_parameters(model: QEModel) -> dict:
    if isinstance(model, Estimator):
        return model.trainable_parameters()
    return model.named_parameters()


def save_model(model: QEModel, directory: str | os.PathLike) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format": MANIFEST_VERSION,
        **model.manifest(),
        "vocab_hashes": {name: v.digest() for name, v in sorted(model.vocabs.items())},
    }
    checkpoint.save(directory / "params.ckpt", model.state_dict())
    save_vocabs(directory / "vocab.json", model.vocabs)
    tmp = directory / "manifest.json.tmp"
    tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    os.replace(tmp, directory / "manifest.json")
    return directory


def read_manifest(directory: str | os.PathLike) -> dict:
    path = Path(directory) / "manifest.json"
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ModelFormatError(f"no model manifest at {path}") from None
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"corrupt manifest {path}: {exc}") from None
    if manifest.get("format") != MANIFEST_VERSION:
        raise ModelFormatError(f"unsupported manifest format {manifest.get('format')!r}")
    if manifest.get("kind") not in ARCHITECTURES:
        raise ModelFormatError(f"unknown architecture kind {manifest.get('kind')!r} in {path}")
    return manifest


def load_model(directory: str | os.PathLike) -> QEModel:
    directory = Path(directory)
    manifest = read_manifest(directory)
    vocabs = load_vocabs(directory / "vocab.json")
    for name, digest in manifest.get("vocab_hashes", {}).items():
        if name not in vocabs or vocabs[name].digest() != digest:
            raise ModelFormatError(f"vocabulary {name!r} does not match the manifest digest")
    model = build_model(manifest["kind"], vocabs, manifest["hparams"], seed=manifest.get("seed", 0))
    state = checkpoint.load(directory / "params.ckpt")
    try:
        model.load_state_dict(state)
    except (KeyError, ValueError) as exc:
        raise ModelFormatError(f"checkpoint does not fit the manifest: {exc}") from None
    return model


__all__ = [
    "ARCHITECTURES",
    "DirectionMismatchError",
    "Estimator",
    "GAP",
    "HTER",
    "MT",
    "ModelFormatError",
    "NuQE",
    "Predictor",
    "QEModel",
    "Quetch",
    "SOURCE",
    "build_model",
    "load_model",
    "read_manifest",
    "save_model",
    "source_labels_via_reverse",
    "trainable_parameters",
]
