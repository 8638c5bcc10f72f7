from __future__ import annotations

from typing import Any

import numpy as np

from .. import numerics as nx
from ..data import Batch
from ..numerics import Tensor
from .base import GAP, HTER, MT, SOURCE, QEModel, bad_probs, tag_loss
from .layers import LSTM, BiRNN, Linear
from .predictor import Predictor


class DirectionMismatchError(ValueError):
    pass


class Estimator(QEModel):
    """Quality tagger on top of predictor features, with a sentence-score head.

    Per predicted-side token ``i`` the features are the predictor's last
    hidden layer before the vocabulary softmax, the same vector weighted by
    the output embedding of the observed token ``t_i``, and the L2R/R2L states
    after reading ``t_i``.  A tanh projection and a BiLSTM follow; the word
    head classifies tokens (or gaps, from neighbouring states) as OK/BAD and
    the sentence head maps mean-pooled states through a sigmoid.

    Training loss: token cross-entropy + ``hter_weight`` x squared error on
    HTER.  Source tags need a predictor trained in the ``tgt2src`` direction.
    """

    kind = "estimator"
    defaults = {
        "task": MT,
        "hidden_dim": 64,
        "rnn_dim": 64,
        "hter_weight": 1.0,
        "bad_weight": 1.0,
        "freeze_predictor": True,
        "predictor": {},
    }

    def __init__(self, vocabs, hparams=None, seed: int = 0, predictor: Predictor | None = None):
        super().__init__(vocabs, hparams, seed)
        task = self.hparams["task"]
        if task not in (MT, GAP, SOURCE):
            raise ValueError(f"unknown task {task!r}")
        if predictor is None:
            predictor = Predictor(vocabs, self.hparams["predictor"], seed=seed + 1)
        self.hparams["predictor"] = dict(predictor.hparams)
        want = "tgt2src" if task == SOURCE else "src2tgt"
        if predictor.direction != want:
            raise DirectionMismatchError(
                f"task {task!r} needs a {want} predictor, got a {predictor.direction} one"
            )
        self.predictor = predictor
        rng = np.random.default_rng(seed)
        ph = predictor.hparams
        n_feat = 2 * ph["out_dim"] + 2 * ph["hidden_dim"]
        p = self.hparams["hidden_dim"]
        r = self.hparams["rnn_dim"]
        self.projection = Linear(n_feat, p, rng)
        self.birnn = BiRNN(LSTM, p, r, rng)
        self.word_head = Linear(4 * r if task == GAP else 2 * r, 2, rng)
        self.sentence_head = Linear(2 * r, 1, rng)

    def trainable_parameters(self) -> dict[str, Tensor]:
        params = self.named_parameters()
        if self.hparams["freeze_predictor"]:
            params = {k: v for k, v in params.items() if not k.startswith("predictor.")}
        return params

    def features(self, batch: Batch) -> Tensor:
        """``(B, N, F)`` predictor features for an oriented batch."""
        out = self.predictor.encode(batch)
        token_out = nx.embedding(nx.transpose(self.predictor.output.weight, (1, 0)), batch.tgt_ids)
        feats = nx.concat([out.hidden, out.hidden * token_out, out.left_after, out.right_after], axis=-1)
        return feats.detach() if self.hparams["freeze_predictor"] else feats

    def forward(self, batch: Batch, features: Tensor | None = None) -> tuple[Tensor, Tensor]:
        """Word OK/BAD distributions ``(B, P, 2)`` and sentence scores ``(B,)``."""
        word_logits, score, _ = self._heads(self.predictor.orient(batch), features)
        return nx.softmax(word_logits), score

    def _heads(self, b: Batch, features: Tensor | None) -> tuple[Tensor, Tensor, np.ndarray]:
        if features is None:
            features = self.features(b)
        elif features.shape[:2] != b.tgt_ids.shape:
            raise ValueError(
                f"feature shape {features.shape[:2]} does not match the token matrix {b.tgt_ids.shape}"
            )
        mask = b.tgt_mask
        x = nx.tanh(self.projection(features))
        states = self.birnn(x, mask) * mask[:, :, None]
        if self.hparams["task"] == GAP:
            bsz, _, width = states.shape
            edge = Tensor(np.zeros((bsz, 1, width)))
            left = nx.concat([edge, states], axis=1)
            right = nx.concat([states, edge], axis=1)
            word_logits = self.word_head(nx.concat([left, right], axis=-1))
            word_mask = b.gap_mask
        else:
            word_logits = self.word_head(states)
            word_mask = mask
        lengths = np.maximum(b.tgt_lengths, 1).astype(np.float64)
        pooled = nx.sum(states, axis=1) * (1.0 / lengths)[:, None]
        score = nx.reshape(nx.sigmoid(self.sentence_head(pooled)), (len(b),))
        return word_logits, score, word_mask

    def _gold(self, b: Batch) -> np.ndarray | None:
        return b.gap_tags if self.hparams["task"] == GAP else b.mt_tags

    def loss(self, batch: Batch) -> Tensor:
        b = self.predictor.orient(batch)
        word_logits, score, word_mask = self._heads(b, None)
        total = tag_loss(word_logits, self._gold(b), word_mask, self.hparams["bad_weight"])
        weight = self.hparams["hter_weight"]
        if b.hter is not None:
            total = total + nx.mse(score, b.hter) * weight
        elif weight:
            raise ValueError("hter_weight > 0 but the batch has no HTER scores")
        return total

    def streams(self) -> list[str]:
        return [self.hparams["task"], HTER]

    def predict_batch(self, batch: Batch) -> dict[str, list[np.ndarray]]:
        b = self.predictor.orient(batch)
        word_logits, score, word_mask = self._heads(b, None)
        probs = nx.softmax(word_logits).data
        return {
            self.hparams["task"]: bad_probs(probs, word_mask),
            HTER: [np.array([s]) for s in score.data],
        }

    def manifest(self) -> dict[str, Any]:
        out = super().manifest()
        out["hparams"]["predictor"] = dict(self.predictor.hparams)
        return out


def source_labels_via_reverse(predictor: Predictor, estimator: Estimator, batch: Batch) -> Tensor:
    """OK/BAD distributions over source tokens from a reverse-direction pipeline."""
    if predictor.direction != "tgt2src":
        raise DirectionMismatchError("source tags need a predictor trained target -> source")
    if estimator.predictor is not predictor or estimator.hparams["task"] != SOURCE:
        raise DirectionMismatchError("estimator is not a source-tag estimator built on this predictor")
    probs, _ = estimator.forward(batch)
    return probs
