from __future__ import annotations

import numpy as np

from .. import numerics as nx
from ..data import Batch
from ..numerics import Tensor
from .base import HTER, QEModel, bad_probs, sentence_from_words, tag_loss
from .layers import Embedding, Linear
from .windows import TASKS, WindowInputs, check_window, task_windows


class WindowModel(QEModel):
    """Common plumbing for models fed with word windows of one task."""

    def __init__(self, vocabs, hparams=None, seed: int = 0):
        super().__init__(vocabs, hparams, seed)
        task = self.hparams["task"]
        if task not in TASKS:
            raise ValueError(f"unknown task {task!r} (expected one of {', '.join(TASKS)})")
        check_window(self.hparams["window"])
        main, other = ("source", "target") if task == "source" else ("target", "source")
        self.main_vocab_size = len(vocabs[main])
        self.aligned_vocab_size = len(vocabs[other])
        width = self.hparams["window"]
        self.main_width = width + 1 if task == "gap" else width
        self.aligned_width = width

    def inputs(self, batch: Batch) -> WindowInputs:
        return task_windows(batch, self.hparams["task"], self.hparams["window"])

    def embed(self, win: WindowInputs) -> Tensor:
        b, p, _ = win.main.shape
        e = self.hparams["embedding_dim"]
        main = nx.reshape(self.main_embeddings(win.main), (b, p, self.main_width * e))
        aligned = nx.reshape(self.aligned_embeddings(win.aligned), (b, p, self.aligned_width * e))
        return nx.concat([main, aligned], axis=-1)

    def logits(self, win: WindowInputs) -> Tensor:
        raise NotImplementedError

    def forward(self, batch: Batch) -> Tensor:
        """``(B, P, 2)`` OK/BAD distributions for every labelled position."""
        return nx.softmax(self.logits(self.inputs(batch)))

    def loss(self, batch: Batch) -> Tensor:
        win = self.inputs(batch)
        return tag_loss(self.logits(win), win.gold, win.mask, self.hparams["bad_weight"])

    def streams(self) -> list[str]:
        task = self.hparams["task"]
        return [task, HTER] if task == "mt" else [task]

    def predict_batch(self, batch: Batch) -> dict[str, list[np.ndarray]]:
        win = self.inputs(batch)
        probs = nx.softmax(self.logits(win)).data
        task = self.hparams["task"]
        out = {task: bad_probs(probs, win.mask)}
        if task == "mt":
            out[HTER] = sentence_from_words(out[task])
        return out


class Quetch(WindowModel):
    """Window MLP: embeddings -> tanh hidden layer -> OK/BAD softmax."""

    kind = "quetch"
    defaults = {"task": "mt", "window": 3, "embedding_dim": 64, "hidden_dim": 128, "bad_weight": 1.0}

    def __init__(self, vocabs, hparams=None, seed: int = 0):
        super().__init__(vocabs, hparams, seed)
        rng = np.random.default_rng(seed)
        e, h = self.hparams["embedding_dim"], self.hparams["hidden_dim"]
        self.main_embeddings = Embedding(self.main_vocab_size, e, rng)
        self.aligned_embeddings = Embedding(self.aligned_vocab_size, e, rng)
        self.hidden = Linear((self.main_width + self.aligned_width) * e, h, rng)
        self.output = Linear(h, 2, rng)

    def logits(self, win: WindowInputs) -> Tensor:
        return self.output(nx.tanh(self.hidden(self.embed(win))))
