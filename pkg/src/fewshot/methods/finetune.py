"""Fine-tuning family: global pre-training, then a per-task head on frozen features."""

from __future__ import annotations

import numpy as np

from .. import autograd as ag
from ..autograd import Tensor, no_grad
from ..data.episodes import TRAIN_STREAM, episode_rng
from ..errors import CoverageError, NonFiniteError, StateError, TrainingError
from ..optim import build_optimizer
from .base import FewShotMethod

HEAD_KINDS = ("linear", "cosine", "logistic_l2", "nn_l2", "nn_raw")


def _l2n(x: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    return x / np.maximum(np.linalg.norm(x, axis=1, keepdims=True), eps)


def _check_coverage(labels: np.ndarray, way: int) -> None:
    labels = np.asarray(labels)
    if labels.shape[0] < way:
        raise CoverageError(f"{labels.shape[0]} support samples cannot cover {way} classes")
    missing = sorted(set(range(way)) - set(labels.tolist()))
    if missing:
        raise CoverageError(f"support lacks classes {missing}")


class TestHead:
    """Classifier re-learned on every task from support embeddings only."""

    __test__ = False  # not a pytest class

    def __init__(self, kind="logistic_l2", steps=100, lr=0.5, temperature=0.1,
                 reg=0.01, max_steps=1000, tol=1e-6, logistic_lr=8.0, aggregate="centroid"):
        if kind not in HEAD_KINDS:
            raise ValueError(f"unknown test head {kind!r}")
        if aggregate not in ("centroid", "min"):
            raise ValueError(f"unknown nn aggregate {aggregate!r}")
        self.kind = kind
        self.steps = int(steps)
        self.lr = float(lr)
        self.temperature = float(temperature)
        self.reg = float(reg)
        self.max_steps = int(max_steps)
        self.tol = float(tol)
        self.logistic_lr = float(logistic_lr)
        self.aggregate = aggregate
        self.fitted = False
        self.objective_trace: list = []

    # -- fitting ---------------------------------------------------------------
    def fit(self, support: np.ndarray, labels, way: int | None = None) -> "TestHead":
        support = np.asarray(support, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64)
        way = int(labels.max()) + 1 if way is None else int(way)
        _check_coverage(labels, way)
        self.way = way
        self.dim = support.shape[1]
        getattr(self, f"_fit_{self.kind}")(support, labels)
        self.fitted = True
        return self

    def _fit_nn(self, x, y):
        self.support = x
        self.support_labels = y
        self.centroids = np.stack([x[y == c].mean(axis=0) for c in range(self.way)])

    def _fit_nn_raw(self, x, y):
        self._fit_nn(x, y)

    def _fit_nn_l2(self, x, y):
        self._fit_nn(_l2n(x), y)

    def _fit_linear(self, x, y):
        n = x.shape[0]
        onehot = np.eye(self.way)[y]
        W = np.zeros((x.shape[1], self.way))
        b = np.zeros(self.way)
        for _ in range(self.steps):
            G = (_softmax(x @ W + b) - onehot) / n
            W = W - self.lr * (x.T @ G)
            b = b - self.lr * G.sum(axis=0)
        self.weight, self.bias = W, b

    def _fit_cosine(self, x, y):
        # Columns start at the class means so the initial head is already sensible.
        n = x.shape[0]
        onehot = np.eye(self.way)[y]
        xn = _l2n(x)
        W = np.stack([x[y == c].mean(axis=0) for c in range(self.way)], axis=1)
        for _ in range(self.steps):
            norms = np.maximum(np.linalg.norm(W, axis=0, keepdims=True), 1e-12)
            Wn = W / norms
            G = (_softmax(xn @ Wn / self.temperature) - onehot) / (n * self.temperature)
            gWn = xn.T @ G
            # back through the column normalisation
            gW = (gWn - Wn * np.sum(Wn * gWn, axis=0, keepdims=True)) / norms
            W = W - self.lr * gW
        self.weight = W

    def _fit_logistic_l2(self, x, y):
        x = _l2n(x)
        n, d = x.shape
        onehot = np.eye(self.way)[y]
        rows = np.arange(n)

        def evaluate(W, b):
            z = x @ W + b
            m = z.max(axis=1, keepdims=True)
            e = np.exp(z - m)
            s = e.sum(axis=1, keepdims=True)
            J = float(np.mean(np.log(s[:, 0]) + m[:, 0] - z[rows, y]) + 0.5 * self.reg * np.sum(W * W))
            return J, e / s

        W = np.zeros((d, self.way))
        b = np.zeros(self.way)
        J, p = evaluate(W, b)
        trace = [J]
        for _ in range(self.max_steps):
            G = (p - onehot) / n
            gW, gb = x.T @ G + self.reg * W, G.sum(axis=0)
            if np.sqrt(np.sum(gW * gW) + np.sum(gb * gb)) <= self.tol:
                break
            step = self.logistic_lr
            while step > 1e-12:
                W_new, b_new = W - step * gW, b - step * gb
                J_new, p_new = evaluate(W_new, b_new)
                if J_new <= J:
                    break
                step *= 0.5
            else:
                break
            W, b, J, p = W_new, b_new, J_new, p_new
            trace.append(J)
        self.weight, self.bias = W, b
        self.objective_trace = trace

    # -- prediction ------------------------------------------------------------
    def predict(self, query: np.ndarray) -> np.ndarray:
        if not self.fitted:
            raise StateError("test head used before fit")
        query = np.asarray(query, dtype=np.float64)
        if query.ndim != 2 or query.shape[1] != self.dim:
            raise ValueError(f"query embeddings must be (M, {self.dim}), got {query.shape}")
        if self.kind == "linear":
            return query @ self.weight + self.bias
        if self.kind == "cosine":
            w = self.weight / np.maximum(np.linalg.norm(self.weight, axis=0, keepdims=True), 1e-12)
            return (_l2n(query) @ w) / self.temperature
        if self.kind == "logistic_l2":
            return _l2n(query) @ self.weight + self.bias
        q = _l2n(query) if self.kind == "nn_l2" else query
        if self.aggregate == "centroid":
            return -_euclidean(q, self.centroids)
        dist = _euclidean(q, self.support)
        return np.stack(
            [-dist[:, self.support_labels == c].min(axis=1) for c in range(self.way)], axis=1
        )


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _euclidean(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    sq = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
    return np.sqrt(np.maximum(sq, 0.0))


def fit_head(kind: str, support_embeddings, labels, way: int | None = None, **hyper) -> TestHead:
    return TestHead(kind, **hyper).fit(support_embeddings, labels, way)


def predict(head: TestHead, query_embeddings) -> np.ndarray:
    return head.predict(query_embeddings)


class FineTuneMethod(FewShotMethod):
    """Baseline / Baseline++ / RFS: pre-train a global classifier, refit a head per task."""

    family = "finetune"

    def __init__(self, model, num_base_classes: int, name: str, head_kind: str,
                 pretrain_head: str = "linear", head_hyper: dict | None = None,
                 pretrain_temperature: float = 0.1, seed: int = 0):
        super().__init__(model)
        self.name = name
        self.head_kind = head_kind
        self.head_hyper = dict(head_hyper or {})
        self.pretrain_head = pretrain_head
        self.pretrain_temperature = float(pretrain_temperature)
        self.num_base_classes = int(num_base_classes)
        dim = int(np.prod(model.output_shape()))
        rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(11,)))
        bound = 1.0 / np.sqrt(dim)
        self.head_params = {
            "pretrain.weight": Tensor(rng.uniform(-bound, bound, (dim, self.num_base_classes)),
                                      requires_grad=True, name="pretrain.weight"),
        }
        if pretrain_head == "linear":
            self.head_params["pretrain.bias"] = Tensor(np.zeros(self.num_base_classes),
                                                       requires_grad=True, name="pretrain.bias")

    def features(self, x, params=None) -> Tensor:
        f = self.embed(x, params)
        return ag.reshape(f, (f.shape[0], -1)) if f.ndim > 2 else f

    def global_logits(self, x) -> Tensor:
        f = self.features(x)
        w = self.head_params["pretrain.weight"]
        if self.pretrain_head == "cosine":
            cos = ag.matmul(ag.l2_normalize(f), ag.l2_normalize(w, axis=0))
            return ag.mul(cos, 1.0 / self.pretrain_temperature)
        return ag.linear(f, w, self.head_params["pretrain.bias"])

    def pretrain_loss(self, x, y) -> Tensor:
        return ag.cross_entropy(self.global_logits(x), y)

    def set_forward(self, episode, head_kind: str | None = None) -> np.ndarray:
        with no_grad():
            s = self.features(episode.support_x).data
            q = self.features(episode.query_x).data
        head = fit_head(head_kind or self.head_kind, s, episode.support_y, episode.way,
                        **self.head_hyper)
        return head.predict(q)

    def set_forward_loss(self, episode):
        raise TypeError("fine-tuning methods train with pretrain_loss, not episodes")


def pretrain(method: FineTuneMethod, manifest, optimizer_cfg: dict, epochs: int,
             batch_size: int, seed: int = 0, augment=None, on_epoch=None) -> list:
    """Minibatch training of backbone + global head on base-class labels.

    Returns the per-step loss trace. ``on_epoch(epoch, mean_loss)`` runs
    after every epoch (1-based).
    """
    if len(manifest) == 0:
        raise TrainingError("empty training manifest")
    if manifest.num_classes != method.num_base_classes:
        raise TrainingError(
            f"global head has {method.num_base_classes} outputs, manifest has {manifest.num_classes} classes"
        )
    n = len(manifest)
    steps_per_epoch = int(np.ceil(n / batch_size))
    params = method.trainable()
    opt = build_optimizer(params, optimizer_cfg, epochs * steps_per_epoch)
    trace = []
    for epoch in range(1, epochs + 1):
        order = episode_rng(seed, TRAIN_STREAM, 1_000_000 + epoch).permutation(n)
        losses = []
        for s in range(steps_per_epoch):
            idx = order[s * batch_size:(s + 1) * batch_size]
            x = manifest.features[idx]
            if augment is not None:
                x = augment(x, episode_rng(seed, TRAIN_STREAM, 2_000_000 + epoch, s))
            try:
                loss = method.pretrain_loss(x, manifest.targets[idx])
                grads = ag.grad(loss, params)
            except NonFiniteError as exc:
                raise TrainingError(f"pre-training diverged at epoch {epoch}: {exc}") from exc
            opt.step(grads)
            losses.append(loss.item())
        trace.extend(losses)
        if on_epoch is not None:
            on_epoch(epoch, float(np.mean(losses)))
    return trace
