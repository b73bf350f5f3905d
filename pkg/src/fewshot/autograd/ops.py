"""Differentiable primitives.

Each primitive computes its forward value with numpy and registers a
vector-Jacobian rule built from other primitives. Gradients for operands
that do not require grad are skipped.
"""

from __future__ import annotations

import numbers
from typing import Sequence

import numpy as np
from scipy.linalg import solve_triangular

from ..errors import DimensionError, LabelError, ParameterError, SingularError
from .tensor import Tensor, as_tensor, record


def _const(arr) -> Tensor:
    return Tensor._wrap(np.asarray(arr, dtype=np.float64))


def _operand(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if isinstance(x, numbers.Real):
        return _const(np.float64(x))
    return as_tensor(x)


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


def _sum_to_array(arr: np.ndarray, shape: tuple) -> np.ndarray:
    lead = arr.ndim - len(shape)
    axes = tuple(range(lead)) + tuple(
        lead + i for i, s in enumerate(shape) if s == 1 and arr.shape[lead + i] != 1
    )
    if axes:
        arr = arr.sum(axis=axes, keepdims=True)
    return arr.reshape(shape)


# -- shape plumbing ---------------------------------------------------------

def sum_to(x: Tensor, shape) -> Tensor:
    """Sum ``x`` down to ``shape``; inverse of broadcasting."""
    shape = tuple(shape)
    if x.shape == shape:
        return x

    def vjp(g, out):
        return (broadcast_to(g, x.shape),)

    return record(_sum_to_array(x.data, shape), (x,), vjp, "sum_to")


def broadcast_to(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    if x.shape == shape:
        return x
    try:
        data = np.array(np.broadcast_to(x.data, shape))
    except ValueError:
        raise DimensionError(f"cannot broadcast {x.shape} to {shape}") from None

    def vjp(g, out):
        return (sum_to(g, x.shape),)

    return record(data, (x,), vjp, "broadcast_to")


def reshape(x: Tensor, shape) -> Tensor:
    try:
        data = x.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"cannot reshape {x.shape} to {shape}") from None

    def vjp(g, out):
        return (reshape(g, x.shape),)

    return record(data, (x,), vjp, "reshape")


def transpose(x: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    axes = tuple(axes)
    inverse = tuple(int(i) for i in np.argsort(axes))

    def vjp(g, out):
        return (transpose(g, inverse),)

    return record(np.transpose(x.data, axes), (x,), vjp, "transpose")


def mT(x: Tensor) -> Tensor:
    """Swap the last two axes."""
    if x.ndim < 2:
        raise DimensionError(f"mT needs rank >= 2, got shape {x.shape}")
    axes = list(range(x.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(x, axes)


def _is_basic_index(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return all(
        isinstance(i, (slice, numbers.Integral)) or i is None or i is Ellipsis for i in items
    )


def getitem(x: Tensor, idx) -> Tensor:
    data = np.array(x.data[idx])

    def vjp(g, out):
        return (index_add(g, idx, x.shape),)

    return record(data, (x,), vjp, "getitem")


def index_add(values: Tensor, idx, shape) -> Tensor:
    """Scatter-add ``values`` into a zero tensor of ``shape`` at ``idx``."""
    out_data = np.zeros(shape)
    if _is_basic_index(idx):
        out_data[idx] += values.data
    else:
        np.add.at(out_data, idx, values.data)

    def vjp(g, out):
        return (getitem(g, idx),)

    return record(out_data, (values,), vjp, "index_add")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_operand(t) for t in tensors]
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise DimensionError(f"concat: {exc}") from None
    ax = axis % data.ndim
    bounds = np.cumsum([0] + [t.shape[ax] for t in tensors])

    def vjp(g, out):
        grads = []
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if not t.requires_grad:
                grads.append(None)
                continue
            sl = [slice(None)] * g.ndim
            sl[ax] = slice(int(lo), int(hi))
            grads.append(getitem(g, tuple(sl)))
        return tuple(grads)

    return record(data, tuple(tensors), vjp, "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_operand(t) for t in tensors]
    expanded = []
    for t in tensors:
        shape = list(t.shape)
        shape.insert(axis % (t.ndim + 1), 1)
        expanded.append(reshape(t, tuple(shape)))
    return concat(expanded, axis=axis)


def pad(x: Tensor, widths) -> Tensor:
    """Zero padding; ``widths`` is one (before, after) pair per axis."""
    widths = [tuple(int(v) for v in w) for w in widths]
    if len(widths) != x.ndim:
        raise DimensionError(f"pad: {len(widths)} width pairs for rank {x.ndim}")
    data = np.pad(x.data, widths)
    crop = tuple(slice(lo, lo + n) for (lo, _), n in zip(widths, x.shape))

    def vjp(g, out):
        return (getitem(g, crop),)

    return record(data, (x,), vjp, "pad")


# -- elementwise ------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _operand(a), _operand(b)
    _broadcast_shape(a, b, "add")

    def vjp(g, out):
        return (
            sum_to(g, a.shape) if a.requires_grad else None,
            sum_to(g, b.shape) if b.requires_grad else None,
        )

    return record(a.data + b.data, (a, b), vjp, "add")


def sub(a, b) -> Tensor:
    a, b = _operand(a), _operand(b)
    _broadcast_shape(a, b, "sub")

    def vjp(g, out):
        return (
            sum_to(g, a.shape) if a.requires_grad else None,
            sum_to(neg(g), b.shape) if b.requires_grad else None,
        )

    return record(a.data - b.data, (a, b), vjp, "sub")


def mul(a, b) -> Tensor:
    a, b = _operand(a), _operand(b)
    _broadcast_shape(a, b, "mul")

    def vjp(g, out):
        return (
            sum_to(mul(g, b), a.shape) if a.requires_grad else None,
            sum_to(mul(g, a), b.shape) if b.requires_grad else None,
        )

    return record(a.data * b.data, (a, b), vjp, "mul")


def div(a, b) -> Tensor:
    a, b = _operand(a), _operand(b)
    _broadcast_shape(a, b, "div")

    def vjp(g, out):
        return (
            sum_to(div(g, b), a.shape) if a.requires_grad else None,
            sum_to(neg(mul(g, div(out, b))), b.shape) if b.requires_grad else None,
        )

    with np.errstate(divide="ignore", invalid="ignore"):
        data = a.data / b.data
    return record(data, (a, b), vjp, "div")


def scale(a: Tensor, s: float) -> Tensor:
    return mul(a, float(s))


def neg(a: Tensor) -> Tensor:
    def vjp(g, out):
        return (neg(g),)

    return record(-a.data, (a,), vjp, "neg")


def power(a: Tensor, p: float) -> Tensor:
    p = float(p)

    def vjp(g, out):
        return (mul(g, mul(power(a, p - 1.0), p)),)

    with np.errstate(divide="ignore", invalid="ignore"):
        data = a.data**p
    return record(data, (a,), vjp, "power")


def exp(a: Tensor) -> Tensor:
    def vjp(g, out):
        return (mul(g, out),)

    with np.errstate(over="ignore"):
        data = np.exp(a.data)
    return record(data, (a,), vjp, "exp")


def log(a: Tensor) -> Tensor:
    def vjp(g, out):
        return (div(g, a),)

    with np.errstate(divide="ignore", invalid="ignore"):
        data = np.log(a.data)
    return record(data, (a,), vjp, "log")


def sqrt(a: Tensor) -> Tensor:
    def vjp(g, out):
        return (div(mul(g, 0.5), out),)

    with np.errstate(invalid="ignore"):
        data = np.sqrt(a.data)
    return record(data, (a,), vjp, "sqrt")


def tanh(a: Tensor) -> Tensor:
    def vjp(g, out):
        return (mul(g, sub(1.0, mul(out, out))),)

    return record(np.tanh(a.data), (a,), vjp, "tanh")


def relu(a: Tensor) -> Tensor:
    mask = _const(a.data > 0)

    def vjp(g, out):
        return (mul(g, mask),)

    return record(np.maximum(a.data, 0.0), (a,), vjp, "relu")


def clamp_min(a: Tensor, lo: float) -> Tensor:
    mask = _const(a.data > lo)

    def vjp(g, out):
        return (mul(g, mask),)

    return record(np.maximum(a.data, lo), (a,), vjp, "clamp_min")


# -- reductions -------------------------------------------------------------

def _norm_axes(axis, ndim: int):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, numbers.Integral):
        axis = (axis,)
    return tuple(sorted(int(a) % ndim for a in axis))


def sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    axes = _norm_axes(axis, a.ndim)
    kept = tuple(1 if i in axes else s for i, s in enumerate(a.shape))

    def vjp(g, out):
        if not keepdims:
            g = reshape(g, kept)
        return (broadcast_to(g, a.shape),)

    return record(a.data.sum(axis=axes, keepdims=keepdims), (a,), vjp, "sum")


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, a.ndim)
    count = int(np.prod([a.shape[i] for i in axes])) if axes else 1
    return mul(sum(a, axis=axes, keepdims=keepdims), 1.0 / count)


def logsumexp(x: Tensor, axis: int = -1, keepdims: bool = False) -> Tensor:
    ax = axis % x.ndim
    m = x.data.max(axis=ax, keepdims=True)
    kept_data = np.log(np.exp(x.data - m).sum(axis=ax, keepdims=True)) + m
    data = kept_data if keepdims else np.squeeze(kept_data, axis=ax)
    kept_shape = kept_data.shape

    def vjp(g, out):
        gk = g if keepdims else reshape(g, kept_shape)
        ok = out if keepdims else reshape(out, kept_shape)
        return (mul(gk, exp(sub(x, ok))),)

    return record(data, (x,), vjp, "logsumexp")


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    return sub(x, logsumexp(x, axis=axis, keepdims=True))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    return exp(log_softmax(x, axis=axis))


def norm(x: Tensor, axis: int = -1, keepdims: bool = False) -> Tensor:
    """Euclidean norm along ``axis``; the gradient at a zero vector is zero."""
    ax = axis % x.ndim
    kept_data = np.sqrt((x.data * x.data).sum(axis=ax, keepdims=True))
    zero = _const(kept_data == 0)
    data = kept_data if keepdims else np.squeeze(kept_data, axis=ax)
    kept_shape = kept_data.shape

    def vjp(g, out):
        gk = g if keepdims else reshape(g, kept_shape)
        ok = out if keepdims else reshape(out, kept_shape)
        return (mul(gk, div(x, add(ok, zero))),)

    return record(data, (x,), vjp, "norm")


def topk_mask(values: np.ndarray, k: int) -> np.ndarray:
    """0/1 mask of the ``k`` largest entries per row (last axis).

    Ties resolve to the lowest indices under a stable descending sort.
    """
    n = values.shape[-1]
    if not 1 <= k <= n:
        raise ParameterError(f"top-k count {k} outside [1, {n}]")
    order = np.argsort(-values, axis=-1, kind="stable")[..., :k]
    mask = np.zeros_like(values)
    np.put_along_axis(mask, order, 1.0, axis=-1)
    return mask


def topk_sum(x: Tensor, k: int) -> Tensor:
    """Sum of the ``k`` largest entries along the last axis."""
    mask = _const(topk_mask(x.data, int(k)))
    kept = x.shape[:-1] + (1,)

    def vjp(g, out):
        return (mul(reshape(g, kept), mask),)

    return record((x.data * mask.data).sum(axis=-1), (x,), vjp, "topk_sum")


# -- linear algebra ---------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _operand(a), _operand(b)
    if a.ndim < 2 or b.ndim < 2 or a.ndim != b.ndim:
        raise DimensionError(f"matmul: unsupported ranks {a.shape} @ {b.shape}")
    if a.shape[:-2] != b.shape[:-2] or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: shape mismatch {a.shape} @ {b.shape}")

    def vjp(g, out):
        return (
            matmul(g, mT(b)) if a.requires_grad else None,
            matmul(mT(a), g) if b.requires_grad else None,
        )

    return record(a.data @ b.data, (a, b), vjp, "matmul")


def solve_spd(A: Tensor, B: Tensor) -> Tensor:
    """Solve ``A X = B`` for symmetric positive-definite ``A`` via Cholesky.

    The gradient uses implicit differentiation of the solved system rather
    than differentiating through the factorization.
    """
    A, B = _operand(A), _operand(B)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"solve_spd: A must be square, got {A.shape}")
    if B.ndim not in (1, 2) or B.shape[0] != A.shape[0]:
        raise DimensionError(f"solve_spd: B shape {B.shape} incompatible with {A.shape}")
    a = A.data
    tol = 1e-12 * max(1.0, float(np.abs(a).max()))
    if not np.allclose(a, a.T, rtol=0.0, atol=tol):
        raise DimensionError("solve_spd: A is not symmetric")
    try:
        L = np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        raise SingularError("solve_spd: matrix is not positive definite") from None
    diag = np.diag(L)
    if (diag.min() / diag.max()) ** 2 < a.shape[0] * np.finfo(float).eps:
        raise SingularError("solve_spd: matrix is numerically singular")
    y = solve_triangular(L, B.data, lower=True, check_finite=False)
    x = solve_triangular(L.T, y, lower=False, check_finite=False)

    def vjp(g, out):
        gB = solve_spd(A, g)
        if not A.requires_grad:
            return (None, gB if B.requires_grad else None)
        if out.ndim == 1:
            gA = neg(matmul(reshape(gB, (-1, 1)), reshape(out, (1, -1))))
        else:
            gA = neg(matmul(gB, mT(out)))
        return (gA, gB if B.requires_grad else None)

    return record(x, (A, B), vjp, "solve_spd")


def eye(n: int) -> Tensor:
    return _const(np.eye(n))


# -- composites -------------------------------------------------------------

def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    out = matmul(x, weight)
    return out if bias is None else add(out, bias)


def l2_normalize(x: Tensor, epsilon: float = 1e-12, axis: int = -1) -> Tensor:
    """Divide each vector along ``axis`` by ``max(norm, epsilon)``."""
    if epsilon <= 0:
        raise ParameterError("epsilon must be positive")
    return div(x, clamp_min(norm(x, axis=axis, keepdims=True), epsilon))


def pairwise_sqdist(a: Tensor, b: Tensor) -> Tensor:
    """Squared Euclidean distances between rows of ``a`` (n x d) and ``b`` (m x d)."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise DimensionError(f"pairwise_sqdist: shapes {a.shape}, {b.shape}")
    aa = sum(mul(a, a), axis=1, keepdims=True)
    bb = reshape(sum(mul(b, b), axis=1), (1, b.shape[0]))
    cross = matmul(a, mT(b))
    return clamp_min(sub(add(aa, bb), mul(cross, 2.0)), 0.0)


def cosine_similarity(a: Tensor, b: Tensor, epsilon: float = 1e-12) -> Tensor:
    """Cosine similarity between rows of ``a`` and rows of ``b``; shape n x m."""
    if a.shape[-1] != b.shape[-1]:
        raise DimensionError(f"cosine_similarity: shapes {a.shape}, {b.shape}")
    return matmul(l2_normalize(a, epsilon), mT(l2_normalize(b, epsilon)))


def check_labels(labels, n_rows: int, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.shape[0] != n_rows:
        raise LabelError(f"expected {n_rows} labels, got shape {labels.shape}")
    if labels.dtype.kind not in "iu":
        raise LabelError("labels must be integers")
    if n_rows and (labels.min() < 0 or labels.max() >= n_classes):
        raise LabelError(f"label outside [0, {n_classes})")
    return labels.astype(np.int64)


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of ``labels`` under ``softmax(logits)``."""
    if logits.ndim != 2:
        raise DimensionError(f"cross_entropy expects n x c logits, got {logits.shape}")
    n, c = logits.shape
    if n < 1:
        raise LabelError("cross_entropy needs at least one row")
    labels = check_labels(labels, n, c)
    picked = getitem(log_softmax(logits, axis=1), (np.arange(n), labels))
    return neg(mean(picked))


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation; ``x`` is (n, c, H, W), ``weight`` is (f, c, kh, kw)."""
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise DimensionError(f"conv2d: input {x.shape} vs weight {weight.shape}")
    n, c, H, W = x.shape
    f, _, kh, kw = weight.shape
    Ho = (H + 2 * padding - kh) // stride + 1
    Wo = (W + 2 * padding - kw) // stride + 1
    if Ho < 1 or Wo < 1:
        raise DimensionError(f"conv2d: input {H}x{W} too small for kernel {kh}x{kw}")
    if padding:
        x = pad(x, [(0, 0), (0, 0), (padding, padding), (padding, padding)])
    rows = (stride * np.arange(Ho))[:, None, None, None] + np.arange(kh)[None, None, :, None]
    cols = (stride * np.arange(Wo))[None, :, None, None] + np.arange(kw)[None, None, None, :]
    patches = getitem(x, (slice(None), slice(None), rows, cols))  # n, c, Ho, Wo, kh, kw
    patches = reshape(transpose(patches, (0, 2, 3, 1, 4, 5)), (n * Ho * Wo, c * kh * kw))
    out = matmul(patches, mT(reshape(weight, (f, c * kh * kw))))
    if bias is not None:
        out = add(out, bias)
    return transpose(reshape(out, (n, Ho, Wo, f)), (0, 3, 1, 2))
