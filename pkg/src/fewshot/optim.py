"""SGD / Adam with optional cosine learning-rate decay.

Updates rebind ``Tensor.data`` to fresh arrays rather than writing in place,
so snapshots taken with ``.data`` stay valid.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigError, TrainingError


def cosine_lr(base_lr: float, step: int, total_steps: int, min_lr: float = 0.0) -> float:
    if total_steps <= 0:
        return base_lr
    t = min(step, total_steps) / total_steps
    return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + math.cos(math.pi * t))


class Optimizer:
    def __init__(self, params, lr, schedule="cosine", total_steps=0, weight_decay=0.0):
        self.params = list(params)
        self.base_lr = float(lr)
        self.schedule = schedule
        self.total_steps = int(total_steps)
        self.weight_decay = float(weight_decay)
        self.step_count = 0

    @property
    def lr(self) -> float:
        if self.schedule == "cosine":
            return cosine_lr(self.base_lr, self.step_count, self.total_steps)
        return self.base_lr

    def step(self, grads) -> None:
        lr = self.lr
        updated = []
        for i, (p, g) in enumerate(zip(self.params, grads)):
            g = np.asarray(g.data if hasattr(g, "data") else g)
            if self.weight_decay:
                g = g + self.weight_decay * p.data
            new = p.data - lr * self._direction(i, g)
            if not np.all(np.isfinite(new)):
                raise TrainingError(f"parameter {p.name or i} became non-finite")
            updated.append(new)
        # commit only once every parameter is known to be finite
        for p, new in zip(self.params, updated):
            p.data = new
        self.step_count += 1

    def _direction(self, i, g):
        raise NotImplementedError


class SGD(Optimizer):
    def __init__(self, params, lr, momentum=0.9, **kw):
        super().__init__(params, lr, **kw)
        self.momentum = float(momentum)
        self._velocity = [None] * len(self.params)

    def _direction(self, i, g):
        if not self.momentum:
            return g
        v = self._velocity[i]
        v = g if v is None else self.momentum * v + g
        self._velocity[i] = v
        return v


class Adam(Optimizer):
    def __init__(self, params, lr, betas=(0.9, 0.999), eps=1e-8, **kw):
        super().__init__(params, lr, **kw)
        self.b1, self.b2 = betas
        self.eps = eps
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def _direction(self, i, g):
        t = self.step_count + 1
        self._m[i] = self.b1 * self._m[i] + (1 - self.b1) * g
        self._v[i] = self.b2 * self._v[i] + (1 - self.b2) * g * g
        mhat = self._m[i] / (1 - self.b1**t)
        vhat = self._v[i] / (1 - self.b2**t)
        return mhat / (np.sqrt(vhat) + self.eps)


def build_optimizer(params, cfg: dict, total_steps: int) -> Optimizer:
    kind = cfg.get("kind", "sgd")
    common = dict(schedule=cfg.get("schedule", "cosine"), total_steps=total_steps,
                  weight_decay=cfg.get("weight_decay", 0.0))
    if common["schedule"] not in ("cosine", "constant"):
        raise ConfigError(f"unknown schedule {common['schedule']!r}", key="optimizer.schedule")
    if kind == "sgd":
        return SGD(params, cfg["lr"], momentum=cfg.get("momentum", 0.9), **common)
    if kind == "adam":
        return Adam(params, cfg["lr"], **common)
    raise ConfigError(f"unknown optimizer {kind!r}", key="optimizer.kind")
