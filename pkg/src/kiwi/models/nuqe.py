from __future__ import annotations

import numpy as np

from .. import numerics as nx
from ..numerics import Tensor
from .layers import GRU, BiRNN, Embedding, Linear
from .quetch import WindowModel
from .windows import WindowInputs


class NuQE(WindowModel):
    """Window embeddings -> 2 ReLU layers -> BiGRU -> 2 ReLU layers -> softmax.

    The two feed-forward pairs sit on either side of a single bidirectional
    GRU, so every position sees the whole sentence.
    """

    kind = "nuqe"
    defaults = {
        "task": "mt",
        "window": 3,
        "embedding_dim": 64,
        "hidden_dim": 128,
        "rnn_dim": 64,
        "bad_weight": 1.0,
    }

    def __init__(self, vocabs, hparams=None, seed: int = 0):
        super().__init__(vocabs, hparams, seed)
        rng = np.random.default_rng(seed)
        e = self.hparams["embedding_dim"]
        h = self.hparams["hidden_dim"]
        r = self.hparams["rnn_dim"]
        self.main_embeddings = Embedding(self.main_vocab_size, e, rng)
        self.aligned_embeddings = Embedding(self.aligned_vocab_size, e, rng)
        self.ff1a = Linear((self.main_width + self.aligned_width) * e, h, rng)
        self.ff1b = Linear(h, h, rng)
        self.birnn = BiRNN(GRU, h, r, rng)
        self.ff2a = Linear(2 * r, h, rng)
        self.ff2b = Linear(h, h // 2, rng)
        self.output = Linear(h // 2, 2, rng)

    def logits(self, win: WindowInputs) -> Tensor:
        x = nx.relu(self.ff1b(nx.relu(self.ff1a(self.embed(win)))))
        x = self.birnn(x, win.mask)
        x = nx.relu(self.ff2b(nx.relu(self.ff2a(x))))
        return self.output(x)
