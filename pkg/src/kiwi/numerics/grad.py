from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .tensor import GraphError, Tensor

FD_STEP = 1e-5


class NondeterministicGraphError(GraphError):
    pass


def _as_list(params) -> list[Tensor]:
    if isinstance(params, Mapping):
        return list(params.values())
    return list(params)


def forward_backward(loss: Tensor, params) -> float:
    """Clear ``grad`` on ``params``, backpropagate ``loss`` and return its value.

    Parameters the loss does not depend on end up with an all-zero gradient
    rather than ``None``.
    """
    params = _as_list(params)
    if loss.data.size != 1:
        raise GraphError(f"loss must be a scalar, got shape {loss.shape}")
    for p in params:
        p.grad = None
    loss.backward()
    for p in params:
        if p.grad is None:
            p.grad = np.zeros_like(p.data)
    return float(loss.data.reshape(-1)[0])


@dataclass
class CoordinateCheck:
    """One finite-difference comparison made by :func:`grad_check_coordinates`."""

    param: int
    index: int
    analytic: float
    numeric: float

    @property
    def abs_error(self) -> float:
        return abs(self.analytic - self.numeric)

    @property
    def rel_error(self) -> float:
        return self.abs_error / max(abs(self.analytic), abs(self.numeric), 1e-8)


def grad_check_coordinates(
    build_loss: Callable[[], Tensor],
    params,
    samples_per_param: int = 10,
    seed: int = 0,
    step: float = FD_STEP,
) -> list[CoordinateCheck]:
    """Backprop against central differences on sampled coordinates.

    ``build_loss`` must rebuild the scalar loss from the current parameter
    values on every call.  For each parameter, ``samples_per_param``
    coordinates are drawn (all of them if the tensor is smaller).
    """
    params = _as_list(params)
    loss = build_loss()
    first = float(loss.data.reshape(-1)[0])
    forward_backward(loss, params)
    again = float(build_loss().data.reshape(-1)[0])
    if first != again:
        raise NondeterministicGraphError(
            f"loss builder is not deterministic: {first!r} != {again!r}"
        )
    analytic = [p.grad.copy() for p in params]

    rng = np.random.default_rng(seed)
    checks = []
    for k, (p, grad) in enumerate(zip(params, analytic)):
        flat = p.data.reshape(-1)
        if flat.size <= samples_per_param:
            coords = np.arange(flat.size)
        else:
            coords = rng.choice(flat.size, size=samples_per_param, replace=False)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + step
            plus = float(build_loss().data.reshape(-1)[0])
            flat[c] = orig - step
            minus = float(build_loss().data.reshape(-1)[0])
            flat[c] = orig
            numeric = (plus - minus) / (2.0 * step)
            checks.append(CoordinateCheck(k, int(c), float(grad.reshape(-1)[c]), numeric))
    return checks


def grad_check(
    build_loss: Callable[[], Tensor],
    params,
    samples_per_param: int = 10,
    seed: int = 0,
    step: float = FD_STEP,
) -> float:
    """Largest relative error ``|a - n| / max(|a|, |n|, 1e-8)`` over sampled coordinates."""
    checks = grad_check_coordinates(build_loss, params, samples_per_param, seed, step)
    return max((c.rel_error for c in checks), default=0.0)


def global_norm(params: Sequence[Tensor]) -> float:
    return float(np.sqrt(np.sum([np.sum(p.grad * p.grad) for p in params if p.grad is not None])))


def clip_grad_norm(params, max_norm: float) -> float:
    """Rescale gradients in place so their joint L2 norm is at most ``max_norm``.

    Returns the norm before clipping.
    """
    params = _as_list(params)
    norm = global_norm(params)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * scale
    return norm
