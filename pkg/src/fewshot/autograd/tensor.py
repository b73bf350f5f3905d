"""Tensor type, graph recording and the reverse-mode sweep.

Every differentiable primitive records a :class:`Node` holding its operands
and a vector-Jacobian rule. The rules are themselves written in terms of
primitives, so running the backward sweep with ``create_graph=True``
records the gradient computation and a second :func:`grad` call yields
exact higher-order derivatives.

Nodes carry a sequence number drawn from a monotone counter. Operands are
always created before the node that consumes them, so sorting reachable
nodes by sequence number gives a valid topological order.
"""

from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager
from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import ConnectivityError, NonFiniteError, RankError

_sequence = itertools.count()
_mode = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_mode, "enabled", True)


@contextmanager
def grad_mode(enabled: bool):
    previous = is_grad_enabled()
    _mode.enabled = enabled
    try:
        yield
    finally:
        _mode.enabled = previous


def no_grad():
    """Context manager that disables graph recording in the current thread."""
    return grad_mode(False)


class Node:
    __slots__ = ("seq", "inputs", "vjp", "op")

    def __init__(self, inputs: tuple, vjp: Callable, op: str):
        self.seq = next(_sequence)
        self.inputs = inputs
        self.vjp = vjp
        self.op = op

    def __repr__(self):
        return f"Node({self.op}, seq={self.seq})"


class Tensor:
    """Dense float64 array that can participate in a computation graph."""

    __slots__ = ("data", "requires_grad", "node", "name", "__weakref__")
    __array_priority__ = 100.0

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        arr = np.array(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError("tensor constructed with non-finite values")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.node: Optional[Node] = None
        self.name = name

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        t = cls.__new__(cls)
        t.data = arr
        t.requires_grad = False
        t.node = None
        t.name = None
        return t

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self.node is None

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise RankError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data)

    def __len__(self):
        return self.data.shape[0]

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({np.array2string(self.data, precision=6)}{flag})"


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def record(data: np.ndarray, inputs: Sequence[Tensor], vjp: Callable, op: str) -> Tensor:
    """Wrap a primitive's output, check finiteness and attach a graph node.

    ``vjp(g, out)`` must return one gradient (or None) per input.
    """
    data = np.asarray(data, dtype=np.float64)
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"{op} produced non-finite values")
    out = Tensor._wrap(data)
    if is_grad_enabled() and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out.node = Node(tuple(inputs), vjp, op)
    return out


def _graph_nodes(root: Tensor) -> list:
    seen = set()
    found = []
    stack = [root]
    while stack:
        t = stack.pop()
        if t.node is None or id(t) in seen:
            continue
        seen.add(id(t))
        found.append(t)
        stack.extend(t.node.inputs)
    found.sort(key=lambda t: t.node.seq)
    return found


def grad(
    loss: Tensor,
    wrt: Sequence[Tensor],
    create_graph: bool = False,
    allow_unused: bool = False,
) -> list:
    """Gradients of a scalar ``loss`` with respect to each tensor in ``wrt``.

    With ``create_graph`` the returned gradients are graph nodes themselves
    and can be differentiated again.
    """
    from . import ops

    if loss.data.size != 1:
        raise RankError(f"grad needs a scalar loss, got shape {loss.shape}")
    wrt = list(wrt)
    targets = {id(t) for t in wrt}
    nodes = _graph_nodes(loss)

    # Only nodes lying on a path from some target to the loss need a vjp.
    depends = set(targets)
    for t in nodes:
        if id(t) not in depends and any(id(i) in depends for i in t.node.inputs):
            depends.add(id(t))
    operands = {id(i) for t in nodes for i in t.node.inputs}
    operands.add(id(loss))
    for t in wrt:
        if id(t) in operands and t.requires_grad:
            continue
        if not allow_unused:
            raise ConnectivityError(
                f"tensor {t.name or tuple(t.shape)} is not connected to the loss"
            )

    grads = {id(loss): Tensor._wrap(np.ones_like(loss.data))}
    with grad_mode(create_graph):
        for t in reversed(nodes):
            if id(t) not in depends:
                continue
            g = grads.get(id(t))
            if g is None:
                continue
            if id(t) not in targets:
                del grads[id(t)]
            in_grads = t.node.vjp(g, t)
            for inp, gi in zip(t.node.inputs, in_grads):
                if gi is None or not inp.requires_grad or id(inp) not in depends:
                    continue
                prev = grads.get(id(inp))
                grads[id(inp)] = gi if prev is None else ops.add(prev, gi)

    out = []
    for t in wrt:
        g = grads.get(id(t))
        if g is None:
            g = Tensor._wrap(np.zeros_like(t.data))
        out.append(g)
    return out
