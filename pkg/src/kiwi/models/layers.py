"""Parameter containers and recurrent layers on top of :mod:`kiwi.numerics`."""
from __future__ import annotations

import numpy as np

from .. import numerics as nx
from ..numerics import Tensor


def uniform_param(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, name: str | None = None) -> Tensor:
    k = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-k, k, size=shape), requires_grad=True, name=name)


class Module:
    """Collects parameters from attributes in definition order."""

    def named_parameters(self, prefix: str = "") -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for key, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                out[prefix + key] = value
            elif isinstance(value, Module):
                out.update(value.named_parameters(f"{prefix}{key}."))
        return out

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.named_parameters().items()}

    def load_state_dict(self, state) -> None:
        params = self.named_parameters()
        missing = set(params) - set(state)
        extra = set(state) - set(params)
        if missing or extra:
            raise KeyError(f"parameter mismatch: missing={sorted(missing)} unexpected={sorted(extra)}")
        for k, p in params.items():
            if state[k].shape != p.shape:
                raise ValueError(f"shape mismatch for {k}: {state[k].shape} vs {p.shape}")
            p.data = np.array(state[k], dtype=np.float64)


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        self.weight = uniform_param(rng, (n_in, n_out), n_in)
        self.bias = uniform_param(rng, (n_out,), n_in)

    def __call__(self, x: Tensor) -> Tensor:
        return nx.matmul(x, self.weight) + self.bias


class Embedding(Module):
    def __init__(self, n: int, dim: int, rng: np.random.Generator):
        self.weight = uniform_param(rng, (n, dim), dim)

    def __call__(self, ids: np.ndarray) -> Tensor:
        return nx.embedding(self.weight, ids)


def _carry(new: Tensor, old: Tensor, keep: np.ndarray, drop: np.ndarray) -> Tensor:
    # keep/drop are 0/1 column vectors; exact copy of `old` on padded steps
    return new * keep + old * drop


class LSTM(Module):
    """Unidirectional LSTM over a padded ``(batch, time, features)`` input."""

    def __init__(self, n_in: int, hidden: int, rng: np.random.Generator):
        self.hidden = hidden
        self.w_x = uniform_param(rng, (n_in, 4 * hidden), hidden)
        self.w_h = uniform_param(rng, (hidden, 4 * hidden), hidden)
        self.bias = uniform_param(rng, (4 * hidden,), hidden)

    def __call__(self, x: Tensor, mask: np.ndarray, reverse: bool = False) -> Tensor:
        b, t, _ = x.shape
        h_size = self.hidden
        proj = nx.matmul(x, self.w_x) + self.bias
        h = Tensor(np.zeros((b, h_size)))
        c = Tensor(np.zeros((b, h_size)))
        states: list[Tensor | None] = [None] * t
        steps = range(t - 1, -1, -1) if reverse else range(t)
        for step in steps:
            gates = proj[:, step, :] + nx.matmul(h, self.w_h)
            sig = nx.sigmoid(gates[:, : 3 * h_size])
            cand = nx.tanh(gates[:, 3 * h_size :])
            i_gate = sig[:, :h_size]
            f_gate = sig[:, h_size : 2 * h_size]
            o_gate = sig[:, 2 * h_size :]
            c_new = f_gate * c + i_gate * cand
            h_new = o_gate * nx.tanh(c_new)
            keep = mask[:, step : step + 1]
            drop = 1.0 - keep
            c = _carry(c_new, c, keep, drop)
            h = _carry(h_new, h, keep, drop)
            states[step] = h
        if t == 0:
            return Tensor(np.zeros((b, 0, h_size)))
        return nx.stack(states, axis=1)


class GRU(Module):
    """Unidirectional GRU; candidate uses ``r * (W_h h + b_h)``."""

    def __init__(self, n_in: int, hidden: int, rng: np.random.Generator):
        self.hidden = hidden
        self.w_x = uniform_param(rng, (n_in, 3 * hidden), hidden)
        self.w_h = uniform_param(rng, (hidden, 3 * hidden), hidden)
        self.b_x = uniform_param(rng, (3 * hidden,), hidden)
        self.b_h = uniform_param(rng, (3 * hidden,), hidden)

    def __call__(self, x: Tensor, mask: np.ndarray, reverse: bool = False) -> Tensor:
        b, t, _ = x.shape
        n = self.hidden
        proj = nx.matmul(x, self.w_x) + self.b_x
        h = Tensor(np.zeros((b, n)))
        states: list[Tensor | None] = [None] * t
        steps = range(t - 1, -1, -1) if reverse else range(t)
        for step in steps:
            xp = proj[:, step, :]
            hp = nx.matmul(h, self.w_h) + self.b_h
            zr = nx.sigmoid(xp[:, : 2 * n] + hp[:, : 2 * n])
            z = zr[:, :n]
            r = zr[:, n:]
            cand = nx.tanh(xp[:, 2 * n :] + r * hp[:, 2 * n :])
            h_new = cand + z * (h - cand)
            keep = mask[:, step : step + 1]
            h = _carry(h_new, h, keep, 1.0 - keep)
            states[step] = h
        if t == 0:
            return Tensor(np.zeros((b, 0, n)))
        return nx.stack(states, axis=1)


class BiRNN(Module):
    """Forward and backward recurrent layers with concatenated outputs."""

    def __init__(self, cell: type, n_in: int, hidden: int, rng: np.random.Generator):
        self.fwd = cell(n_in, hidden, rng)
        self.bwd = cell(n_in, hidden, rng)

    def __call__(self, x: Tensor, mask: np.ndarray) -> Tensor:
        return nx.concat([self.fwd(x, mask), self.bwd(x, mask, reverse=True)], axis=-1)
