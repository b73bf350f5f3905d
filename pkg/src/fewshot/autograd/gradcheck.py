"""Central finite-difference oracles for gradient checking."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, grad, no_grad


def numerical_grad(f: Callable[..., float], arrays: Sequence[np.ndarray], step: float = 1e-5) -> list:
    """Central differences of scalar ``f(*arrays)`` w.r.t. every entry of every array."""
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    out = []
    for a in arrays:
        g = np.zeros_like(a)
        flat = a.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = f(*arrays)
            flat[i] = orig - step
            lo = f(*arrays)
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * step)
        out.append(g)
    return out


def relative_error(analytic, numeric, floor: float = 1e-8) -> float:
    """``||a - n|| / max(||a||, ||n||, floor)`` over the concatenated arrays."""
    a = np.concatenate([np.ravel(x) for x in analytic])
    n = np.concatenate([np.ravel(x) for x in numeric])
    denom = max(np.linalg.norm(a), np.linalg.norm(n), floor)
    return float(np.linalg.norm(a - n) / denom)


def check_grad(fn: Callable[..., Tensor], inputs: Sequence[np.ndarray], step: float = 1e-5) -> float:
    """Relative error between reverse-mode and finite-difference gradients.

    ``fn`` maps Tensors to a scalar Tensor.
    """
    tensors = [Tensor(x, requires_grad=True) for x in inputs]
    analytic = [g.data for g in grad(fn(*tensors), tensors)]

    def scalar(*arrays):
        with no_grad():
            return fn(*[Tensor(a) for a in arrays]).item()

    numeric = numerical_grad(scalar, inputs, step)
    return relative_error(analytic, numeric)


def check_second_order(fn: Callable[..., Tensor], inputs: Sequence[np.ndarray], step: float = 1e-5) -> float:
    """Check the Hessian-vector action of ``fn`` along a fixed random direction.

    Compares grad(<grad fn, v>) against finite differences of <grad fn, v>.
    """
    rng = np.random.default_rng(0)
    dirs = [rng.standard_normal(np.shape(x)) for x in inputs]

    def first_dot(*tensors):
        gs = grad(fn(*tensors), tensors, create_graph=True)
        total = None
        for g, v in zip(gs, dirs):
            term = (g * Tensor(v)).sum()
            total = term if total is None else total + term
        return total

    tensors = [Tensor(x, requires_grad=True) for x in inputs]
    analytic = [g.data for g in grad(first_dot(*tensors), tensors)]

    def scalar(*arrays):
        ts = [Tensor(a, requires_grad=True) for a in arrays]
        return first_dot(*ts).item()

    numeric = numerical_grad(scalar, inputs, step)
    return relative_error(analytic, numeric)
