"""Meta-learning family: MAML / ANIL two-loop optimisation and the R2D2 ridge head."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .. import autograd as ag
from ..autograd import Tensor, no_grad
from ..errors import (
    AdaptationError,
    ConfigError,
    MetaGradientError,
    MethodConfigError,
    NonFiniteError,
    ParameterError,
)
from .base import FewShotMethod


@dataclass(frozen=True)
class MamlConfig:
    inner_lr: float = 0.1
    outer_lr: float = 0.01
    inner_steps: int = 5
    eval_inner_steps: int = 10
    head_only: bool = False
    second_order: bool = True

    def validate(self) -> None:
        if not self.inner_lr > 0:
            raise ConfigError("inner_lr must be positive", key="maml.inner_lr")
        if not self.outer_lr > 0:
            raise ConfigError("outer_lr must be positive", key="maml.outer_lr")
        if self.inner_steps < 0 or self.eval_inner_steps < 0:
            raise ConfigError("inner step counts must be non-negative", key="maml.inner_steps")


def maml_inner(params: dict, support_loss: Callable[[dict], Tensor], inner_lr: float,
               steps: int, adapt=None, create_graph: bool = False) -> dict:
    """``steps`` plain gradient updates on the support loss.

    Only names in ``adapt`` move (all when None). With ``create_graph`` the
    updates stay in the graph so an outer gradient sees through them;
    otherwise inner gradients enter as constants (first-order).
    """
    if steps < 0:
        raise ParameterError("inner step count must be non-negative")
    names = list(params) if adapt is None else list(adapt)
    current = dict(params)
    for k in range(steps):
        try:
            loss = support_loss(current)
            grads = ag.grad(loss, [current[n] for n in names], create_graph=create_graph)
        except NonFiniteError as exc:
            raise AdaptationError(f"inner step {k + 1}: {exc}") from exc
        for n, g in zip(names, grads):
            current[n] = ag.sub(current[n], ag.mul(g, inner_lr))
    return current


def maml_outer_grad(params: dict, support_loss, query_loss, cfg: MamlConfig, adapt=None) -> dict:
    """Gradient of the post-adaptation query loss w.r.t. the initial parameters."""
    adapted = maml_inner(params, support_loss, cfg.inner_lr, cfg.inner_steps, adapt,
                         create_graph=cfg.second_order)
    try:
        loss = query_loss(adapted)
        grads = ag.grad(loss, list(params.values()), allow_unused=True)
    except NonFiniteError as exc:
        raise MetaGradientError(f"query loss: {exc}") from exc
    return {n: g.data for n, g in zip(params, grads)}


def meta_update(params: dict, meta_grads: list, beta: float) -> dict:
    """Plain outer step with the average of per-episode meta-gradients.

    Gradients are summed in a canonical (sorted) order of their bytes so the
    result does not depend on episode order.
    """
    out = {}
    for name, value in params.items():
        stack = [np.asarray(g[name], dtype=np.float64) for g in meta_grads]
        stack.sort(key=lambda a: a.tobytes())
        total = np.zeros_like(np.asarray(value, dtype=np.float64))
        for g in stack:
            total = total + g
        out[name] = np.asarray(value) - beta * total / len(stack)
    return out


class MAML(FewShotMethod):
    """MAML; with ``head_only`` the inner loop adapts only the head (ANIL)."""

    family = "meta"

    def __init__(self, model, way: int, cfg: MamlConfig, name: str = "maml"):
        super().__init__(model)
        cfg.validate()
        self.cfg = cfg
        self.name = name
        self.way = int(way)
        dim = int(np.prod(model.output_shape()))
        self.head_params = {
            "head.weight": Tensor(np.zeros((dim, self.way)), requires_grad=True, name="head.weight"),
            "head.bias": Tensor(np.zeros(self.way), requires_grad=True, name="head.bias"),
        }
        self.head_names = list(self.head_params)

    def _check_way(self, episode):
        if episode.way != self.way:
            raise MethodConfigError(
                f"{self.name} head has {self.way} outputs, episode is {episode.way}-way",
                key="eval.way",
            )

    def _features(self, x, params):
        f = self.model.forward(x, params)
        return ag.reshape(f, (f.shape[0], -1)) if f.ndim > 2 else f

    def _logits(self, feats, params):
        return ag.linear(feats, params["head.weight"], params["head.bias"])

    def adapt(self, params: dict, episode, steps: int, create_graph: bool):
        """Return (adapted params, query logits function)."""
        if self.cfg.head_only:
            # Backbone is frozen inside the inner loop, so features are computed once.
            support_f = self._features(episode.support_x, params)
            query_f = self._features(episode.query_x, params)

            def support_loss(p):
                return ag.cross_entropy(self._logits(support_f, p), episode.support_y)

            adapted = maml_inner(params, support_loss, self.cfg.inner_lr, steps,
                                 self.head_names, create_graph)
            return adapted, lambda p: self._logits(query_f, p)

        def support_loss(p):
            return ag.cross_entropy(self._logits(self._features(episode.support_x, p), p),
                                    episode.support_y)

        adapted = maml_inner(params, support_loss, self.cfg.inner_lr, steps, None, create_graph)
        return adapted, lambda p: self._logits(self._features(episode.query_x, p), p)

    def set_forward_loss(self, episode):
        self._check_way(episode)
        adapted, query_logits = self.adapt(self.parameters(), episode, self.cfg.inner_steps,
                                           create_graph=self.cfg.second_order)
        logits = query_logits(adapted)
        try:
            loss = ag.cross_entropy(logits, episode.query_y)
        except NonFiniteError as exc:
            raise MetaGradientError(f"query loss: {exc}") from exc
        return loss, logits.data

    def set_forward(self, episode) -> np.ndarray:
        self._check_way(episode)
        # Adapt fresh leaf copies; the stored parameters are never touched.
        copies = {n: Tensor(p.data, requires_grad=True, name=n) for n, p in self.parameters().items()}
        adapted, query_logits = self.adapt(copies, episode, self.cfg.eval_inner_steps,
                                           create_graph=False)
        with no_grad():
            return query_logits(adapted).data.copy()


def ridge_solve(X: Tensor, Y: Tensor, lam: float) -> Tensor:
    """Closed-form ridge weights: solve (X^T X + lam I) W = X^T Y."""
    X, Y = ag.as_tensor(X), ag.as_tensor(Y)
    if lam < 0:
        raise ParameterError("ridge regularisation must be non-negative")
    if X.ndim != 2 or Y.ndim != 2 or X.shape[0] != Y.shape[0]:
        raise ParameterError(f"ridge_solve shapes {X.shape} and {Y.shape}")
    Xt = ag.mT(X)
    A = ag.matmul(Xt, X)
    if lam:
        A = ag.add(A, ag.mul(ag.eye(X.shape[1]), float(lam)))
    return ag.solve_spd(A, ag.matmul(Xt, Y))


class R2D2(FewShotMethod):
    """Ridge-regression base learner with learnable output scale and bias."""

    family = "meta"
    name = "r2d2"

    def __init__(self, model, lam: float = 50.0):
        super().__init__(model)
        if not lam > 0:
            raise ConfigError("lambda must be positive", key="r2d2.lam")
        self.lam = float(lam)
        self.head_params = {
            "r2d2.alpha": Tensor(1.0, requires_grad=True, name="r2d2.alpha"),
            "r2d2.beta": Tensor(0.0, requires_grad=True, name="r2d2.beta"),
        }

    def _features(self, x, params=None):
        f = self.model.forward(x, params)
        return ag.reshape(f, (f.shape[0], -1)) if f.ndim > 2 else f

    def query_logits(self, episode, params=None) -> Tensor:
        params = self.parameters() if params is None else params
        n_support = episode.support_x.shape[0]
        both = np.concatenate([episode.support_x, episode.query_x])
        feats = self._features(both, params)
        xs, xq = feats[:n_support], feats[n_support:]
        Y = Tensor._wrap(np.eye(episode.way)[episode.support_y])
        W = ridge_solve(xs, Y, self.lam)
        return ag.add(ag.mul(ag.matmul(xq, W), params["r2d2.alpha"]), params["r2d2.beta"])

    def set_forward_loss(self, episode):
        logits = self.query_logits(episode)
        return ag.cross_entropy(logits, episode.query_y), logits.data

    def set_forward(self, episode) -> np.ndarray:
        with no_grad():
            return self.query_logits(episode).data.copy()


def r2d2_episode_loss(method: R2D2, episode):
    return method.set_forward_loss(episode)
