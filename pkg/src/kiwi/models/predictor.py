from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import numerics as nx
from ..data import PAD_ID, START_ID, STOP_ID, Batch
from ..numerics import Tensor
from .base import QEModel
from .layers import LSTM, BiRNN, Embedding, Linear, uniform_param

DIRECTIONS = ("src2tgt", "tgt2src")
_NEG = -1e9


@dataclass
class PredictorOutput:
    hidden: Tensor  # (B, N, out_dim) last layer before the vocabulary softmax
    logits: Tensor  # (B, N, V)
    attention: Tensor  # (B, N, M)
    left_after: Tensor  # (B, N, H) L2R state after reading token i
    right_after: Tensor  # (B, N, H) R2L state after reading token i
    mask: np.ndarray  # (B, N)


def framed(ids: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """``<s> t_1 .. t_n </s>`` per row, padded to ``N + 2`` columns."""
    b, n = ids.shape
    out = np.full((b, n + 2), PAD_ID, dtype=np.int64)
    out[:, 0] = START_ID
    out[:, 1 : n + 1] = ids
    out[np.arange(b), lengths + 1] = STOP_ID
    return out


class Predictor(QEModel):
    """Conditional word predictor.

    A BiLSTM encodes the context sentence.  Two LSTMs read the framed
    predicted sentence left-to-right and right-to-left; for position ``i`` the
    L2R state before ``t_i`` and the R2L state after it form the attention
    query, so the distribution at ``i`` never reads ``t_i``.  With
    ``direction = "tgt2src"`` the roles of source and target are swapped.
    """

    kind = "predictor"
    defaults = {"direction": "src2tgt", "embedding_dim": 64, "hidden_dim": 128, "out_dim": 128}

    def __init__(self, vocabs, hparams=None, seed: int = 0):
        super().__init__(vocabs, hparams, seed)
        direction = self.hparams["direction"]
        if direction not in DIRECTIONS:
            raise ValueError(f"unknown predictor direction {direction!r}")
        ctx_name, out_name = ("source", "target") if direction == "src2tgt" else ("target", "source")
        rng = np.random.default_rng(seed)
        e = self.hparams["embedding_dim"]
        h = self.hparams["hidden_dim"]
        d = self.hparams["out_dim"]
        self.context_vocab_size = len(vocabs[ctx_name])
        self.output_vocab_size = len(vocabs[out_name])
        self.context_embeddings = Embedding(self.context_vocab_size, e, rng)
        self.encoder = BiRNN(LSTM, e, h, rng)
        self.word_embeddings = Embedding(self.output_vocab_size, e, rng)
        self.l2r = LSTM(e, h, rng)
        self.r2l = LSTM(e, h, rng)
        self.attention_weight = uniform_param(rng, (2 * h, 2 * h), 2 * h)
        self.hidden = Linear(4 * h, d, rng)
        self.output = Linear(d, self.output_vocab_size, rng)

    @property
    def direction(self) -> str:
        return self.hparams["direction"]

    def orient(self, batch: Batch) -> Batch:
        return batch if self.direction == "src2tgt" else batch.swapped()

    def encode(self, batch: Batch) -> PredictorOutput:
        """Run on an already oriented batch (context = src side)."""
        src_mask = batch.src_mask
        ctx = self.encoder(self.context_embeddings(batch.src_ids), src_mask)

        ids = framed(batch.tgt_ids, batch.tgt_lengths)
        fmask = (np.arange(ids.shape[1])[None, :] < (batch.tgt_lengths + 2)[:, None]).astype(np.float64)
        emb = self.word_embeddings(ids)
        left = self.l2r(emb, fmask)
        right = self.r2l(emb, fmask, reverse=True)
        n = batch.tgt_ids.shape[1]
        query = nx.concat([left[:, 0:n, :], right[:, 2 : n + 2, :]], axis=-1)

        scores = nx.matmul(nx.matmul(query, self.attention_weight), nx.transpose(ctx, (0, 2, 1)))
        scores = scores + (1.0 - src_mask)[:, None, :] * _NEG
        attention = nx.softmax(scores)
        context = nx.matmul(attention, ctx)
        hidden = nx.tanh(self.hidden(nx.concat([query, context], axis=-1)))
        logits = self.output(hidden)
        return PredictorOutput(
            hidden=hidden,
            logits=logits,
            attention=attention,
            left_after=left[:, 1 : n + 1, :],
            right_after=right[:, 1 : n + 1, :],
            mask=batch.tgt_mask,
        )

    def forward(self, batch: Batch) -> Tensor:
        """``(B, N, V)`` distributions over the predicted side's vocabulary."""
        return nx.softmax(self.encode(self.orient(batch)).logits)

    def loss(self, batch: Batch) -> Tensor:
        b = self.orient(batch)
        out = self.encode(b)
        return nx.cross_entropy(out.logits, b.tgt_ids, mask=out.mask)

    def streams(self) -> list[str]:
        return []

    def predict_batch(self, batch: Batch):
        raise TypeError("a predictor produces word distributions, not quality tags; train an estimator on top of it")

    def accuracy_counts(self, batch: Batch) -> tuple[int, int]:
        b = self.orient(batch)
        out = self.encode(b)
        guess = out.logits.data.argmax(axis=-1)
        mask = out.mask > 0
        return int(np.sum((guess == b.tgt_ids) & mask)), int(mask.sum())
