from __future__ import annotations

from typing import Mapping

import numpy as np

from .tensor import Tensor


class MissingGradientError(RuntimeError):
    pass


class Optimizer:
    """Base class: keeps named parameters and a step counter."""

    kind = "base"

    def __init__(self, params, lr: float):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        if isinstance(params, Mapping):
            self.params = dict(params)
        else:
            self.params = {str(i): p for i, p in enumerate(params)}
        self.lr = float(lr)
        self.step_count = 0

    def _check(self) -> None:
        for name, p in self.params.items():
            if p.requires_grad and p.grad is None:
                raise MissingGradientError(f"parameter {name!r} has no gradient")

    def step(self) -> None:
        self._check()
        self.step_count += 1
        for name, p in self.params.items():
            if p.requires_grad:
                self._update(name, p)
                p.grad = None

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def _update(self, name: str, p: Tensor) -> None:
        raise NotImplementedError


class SGD(Optimizer):
    kind = "sgd"

    def _update(self, name, p):
        p.data -= self.lr * p.grad


class Adam(Optimizer):
    kind = "adam"

    def __init__(self, params, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        super().__init__(params, lr)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def _update(self, name, p):
        g = p.grad
        m = self.m[name]
        v = self.v[name]
        m *= self.beta1
        m += (1.0 - self.beta1) * g
        v *= self.beta2
        v += (1.0 - self.beta2) * g * g
        m_hat = m / (1.0 - self.beta1**self.step_count)
        v_hat = v / (1.0 - self.beta2**self.step_count)
        p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(kind: str, params, lr: float) -> Optimizer:
    if kind == "sgd":
        return SGD(params, lr)
    if kind == "adam":
        return Adam(params, lr)
    raise ValueError(f"unknown optimizer {kind!r}")
