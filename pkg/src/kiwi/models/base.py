from __future__ import annotations

from typing import Any, ClassVar

import numpy as np

from .. import numerics as nx
from ..data import Batch, Vocabulary
from ..numerics import Tensor
from .layers import Module

# prediction stream names, as used for files and reports
MT, GAP, SOURCE, HTER = "mt", "gap", "source", "hter"


class QEModel(Module):
    """Shared surface of every architecture.

    Subclasses declare ``kind`` and ``defaults`` (hyperparameters with their
    default values) and implement :meth:`loss` and :meth:`predict_batch`.
    """

    kind: ClassVar[str] = ""
    defaults: ClassVar[dict[str, Any]] = {}

    def __init__(self, vocabs: dict[str, Vocabulary], hparams: dict[str, Any] | None = None, seed: int = 0):
        unknown = set(hparams or {}) - set(self.defaults)
        if unknown:
            raise ValueError(f"{self.kind}: unknown hyperparameter(s) {', '.join(sorted(unknown))}")
        self.hparams = {**self.defaults, **(hparams or {})}
        self.vocabs = dict(vocabs)
        self.seed = seed

    @property
    def task(self) -> str | None:
        return self.hparams.get("task")

    def loss(self, batch: Batch) -> Tensor:
        raise NotImplementedError

    def predict_batch(self, batch: Batch) -> dict[str, list[np.ndarray]]:
        """BAD probabilities per stream, one array per row (true lengths)."""
        raise NotImplementedError

    def streams(self) -> list[str]:
        raise NotImplementedError

    def manifest(self) -> dict[str, Any]:
        return {"kind": self.kind, "hparams": dict(self.hparams), "seed": self.seed}


def bad_probs(probs: np.ndarray, mask: np.ndarray) -> list[np.ndarray]:
    """Split ``(B, P, 2)`` distributions into per-row BAD probability arrays."""
    lengths = mask.sum(axis=1).astype(int)
    return [probs[r, : lengths[r], 1].copy() for r in range(len(lengths))]


def tag_loss(logits: Tensor, gold: np.ndarray | None, mask: np.ndarray, bad_weight: float) -> Tensor:
    if gold is None:
        raise ValueError("batch carries no gold tags for this task")
    return nx.cross_entropy(logits, gold, mask=mask, class_weights=(1.0, bad_weight))


def sentence_from_words(mt_bad: list[np.ndarray]) -> list[np.ndarray]:
    """Sentence score from word predictions: mean BAD probability of the MT words."""
    return [np.array([float(p.mean()) if len(p) else 0.0]) for p in mt_bad]
