from . import checkpoint
from .checkpoint import CheckpointFormatError
from .grad import CoordinateCheck, NondeterministicGraphError, clip_grad_norm, forward_backward, global_norm, grad_check, grad_check_coordinates
from .optim import SGD, Adam, MissingGradientError, Optimizer, make_optimizer
from .tensor import (
    DTYPE,
    GraphError,
    NonFiniteError,
    Tensor,
    add,
    as_tensor,
    concat,
    cross_entropy,
    embedding,
    exp,
    getitem,
    log,
    log_softmax,
    matmul,
    mean,
    mse,
    mul,
    relu,
    reshape,
    set_debug,
    sigmoid,
    softmax,
    stack,
    sub,
    sum,
    tanh,
    topological_order,
    transpose,
)

__all__ = [name for name in dir() if not name.startswith("_")]
