"""Reverse-mode automatic differentiation over float64 numpy arrays."""

from . import ops
from .ops import (
    add,
    broadcast_to,
    clamp_min,
    concat,
    conv2d,
    cosine_similarity,
    cross_entropy,
    div,
    exp,
    eye,
    getitem,
    index_add,
    l2_normalize,
    linear,
    log,
    log_softmax,
    logsumexp,
    matmul,
    mean,
    mT,
    mul,
    neg,
    norm,
    pad,
    pairwise_sqdist,
    power,
    relu,
    reshape,
    scale,
    softmax,
    solve_spd,
    sqrt,
    stack,
    sub,
    sum_to,
    tanh,
    topk_mask,
    topk_sum,
    transpose,
)
from .tensor import Tensor, as_tensor, grad, grad_mode, is_grad_enabled, no_grad

Tensor.__add__ = lambda self, other: ops.add(self, other)
Tensor.__radd__ = lambda self, other: ops.add(other, self)
Tensor.__sub__ = lambda self, other: ops.sub(self, other)
Tensor.__rsub__ = lambda self, other: ops.sub(other, self)
Tensor.__mul__ = lambda self, other: ops.mul(self, other)
Tensor.__rmul__ = lambda self, other: ops.mul(other, self)
Tensor.__truediv__ = lambda self, other: ops.div(self, other)
Tensor.__rtruediv__ = lambda self, other: ops.div(other, self)
Tensor.__neg__ = lambda self: ops.neg(self)
Tensor.__pow__ = lambda self, p: ops.power(self, p)
Tensor.__matmul__ = lambda self, other: ops.matmul(self, other)
Tensor.__getitem__ = lambda self, idx: ops.getitem(self, idx)
Tensor.T = property(lambda self: ops.transpose(self))
Tensor.reshape = lambda self, *shape: ops.reshape(
    self, shape[0] if len(shape) == 1 and isinstance(shape[0], (tuple, list)) else shape
)
Tensor.sum = lambda self, axis=None, keepdims=False: ops.sum(self, axis, keepdims)
Tensor.mean = lambda self, axis=None, keepdims=False: ops.mean(self, axis, keepdims)
Tensor.exp = lambda self: ops.exp(self)
Tensor.log = lambda self: ops.log(self)
Tensor.tanh = lambda self: ops.tanh(self)
Tensor.relu = lambda self: ops.relu(self)

sum = ops.sum  # noqa: A001

__all__ = [
    "Tensor",
    "as_tensor",
    "grad",
    "grad_mode",
    "is_grad_enabled",
    "no_grad",
    "ops",
    "add",
    "broadcast_to",
    "clamp_min",
    "concat",
    "conv2d",
    "cosine_similarity",
    "cross_entropy",
    "div",
    "exp",
    "eye",
    "getitem",
    "index_add",
    "l2_normalize",
    "linear",
    "log",
    "log_softmax",
    "logsumexp",
    "matmul",
    "mean",
    "mT",
    "mul",
    "neg",
    "norm",
    "pad",
    "pairwise_sqdist",
    "power",
    "relu",
    "reshape",
    "scale",
    "softmax",
    "solve_spd",
    "sqrt",
    "stack",
    "sub",
    "sum",
    "sum_to",
    "tanh",
    "topk_mask",
    "topk_sum",
    "transpose",
]
