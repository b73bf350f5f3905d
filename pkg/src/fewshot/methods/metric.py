"""Metric-learning family: prototypes and local-descriptor image-to-class matching.

Nothing is fitted per episode: the support set only conditions a single
forward pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import autograd as ag
from ..autograd import Tensor, no_grad
from ..backbones import to_descriptors
from ..errors import CoverageError, DimensionError, MethodConfigError, ParameterError
from .base import FewShotMethod

DISTANCES = ("sqeuclidean", "cosine")


@dataclass(frozen=True)
class PrototypeSet:
    prototypes: Tensor  # (C, d)
    distance: str = "sqeuclidean"
    temperature: float = 1.0

    @property
    def way(self) -> int:
        return self.prototypes.shape[0]


def _class_counts(labels: np.ndarray, way: int) -> np.ndarray:
    counts = np.bincount(labels, minlength=way)
    if len(counts) > way:
        raise CoverageError(f"label {len(counts) - 1} outside a {way}-way episode")
    if counts.min() == 0:
        raise CoverageError(f"classes {np.flatnonzero(counts == 0).tolist()} have no support")
    if counts.min() != counts.max():
        raise CoverageError(f"unbalanced support: per-class counts {counts.tolist()}")
    return counts


def compute_prototypes(support: Tensor, labels, way: int | None = None,
                       distance: str = "sqeuclidean", temperature: float = 1.0) -> PrototypeSet:
    """Class means of the support embeddings."""
    labels = np.asarray(labels, dtype=np.int64)
    way = int(labels.max()) + 1 if way is None else int(way)
    if distance not in DISTANCES:
        raise ParameterError(f"unknown distance {distance!r}")
    counts = _class_counts(labels, way)
    averaging = np.zeros((way, labels.shape[0]))
    averaging[labels, np.arange(labels.shape[0])] = 1.0 / counts[labels]
    protos = ag.matmul(Tensor._wrap(averaging), ag.as_tensor(support))
    return PrototypeSet(protos, distance, float(temperature))


def proto_logits(query: Tensor, protos: PrototypeSet) -> Tensor:
    """Negative distances ``-D(f(q), c_j)``, the log-domain numerators of the posterior."""
    query = ag.as_tensor(query)
    if query.ndim != 2 or query.shape[1] != protos.prototypes.shape[1]:
        raise DimensionError(f"query {query.shape} vs prototypes {protos.prototypes.shape}")
    if protos.distance == "sqeuclidean":
        return ag.neg(ag.pairwise_sqdist(query, protos.prototypes))
    # D = (1 - cos) / temperature; the constant term cancels in the softmax but is kept.
    cos = ag.cosine_similarity(query, protos.prototypes)
    return ag.mul(ag.sub(cos, 1.0), 1.0 / protos.temperature)


def proto_posterior(query: Tensor, protos: PrototypeSet) -> Tensor:
    return ag.softmax(proto_logits(query, protos), axis=1)


def dn4_i2c(query_desc, class_desc, k: int, normalization: str = "descriptor") -> Tensor:
    """Image-to-class similarity between one query (d x n) and one class pool (d x nK).

    ``descriptor`` normalisation uses per-descriptor cosine similarity;
    ``frobenius`` divides raw inner products by the two matrices' Frobenius norms.
    """
    q = ag.as_tensor(query_desc)
    s = ag.as_tensor(class_desc)
    if q.ndim != 2 or s.ndim != 2 or q.shape[0] != s.shape[0]:
        raise DimensionError(f"descriptor sets {q.shape} and {s.shape}")
    if not 1 <= k <= s.shape[1]:
        raise ParameterError(f"k={k} outside [1, {s.shape[1]}]")
    if normalization == "descriptor":
        sim = ag.cosine_similarity(ag.mT(q), ag.mT(s))
    elif normalization == "frobenius":
        frob = ag.mul(ag.norm(ag.reshape(q, (-1,))), ag.norm(ag.reshape(s, (-1,))))
        sim = ag.div(ag.matmul(ag.mT(q), s), frob)
    else:
        raise ParameterError(f"unknown normalization {normalization!r}")
    return ag.sum(ag.topk_sum(sim, k))


def dn4_scores(query_desc: Tensor, support_desc: Tensor, support_labels, way: int, k: int,
               normalization: str = "descriptor") -> Tensor:
    """Batched image-to-class scores.

    ``query_desc`` is (M, d, n) and ``support_desc`` is (CK, d, n); returns (M, C).
    """
    labels = np.asarray(support_labels, dtype=np.int64)
    counts = _class_counts(labels, way)
    shot = int(counts[0])
    M, d, n = query_desc.shape
    order = np.argsort(labels, kind="stable")
    # class pools: (C, K*n, d) with each image's descriptors as rows
    pools = ag.reshape(ag.transpose(ag.getitem(support_desc, order), (0, 2, 1)), (way, shot * n, d))
    queries = ag.transpose(query_desc, (0, 2, 1))  # (M, n, d)
    if not 1 <= k <= shot * n:
        raise ParameterError(f"k={k} outside [1, {shot * n}]")
    if normalization == "descriptor":
        qn = ag.reshape(ag.l2_normalize(queries), (M * n, d))
        sn = ag.reshape(ag.l2_normalize(pools), (way * shot * n, d))
        sim = ag.matmul(qn, ag.mT(sn))
    elif normalization == "frobenius":
        qf = ag.norm(ag.reshape(queries, (M, n * d)), axis=1)  # (M,)
        sf = ag.norm(ag.reshape(pools, (way, shot * n * d)), axis=1)  # (C,)
        raw = ag.matmul(ag.reshape(queries, (M * n, d)), ag.mT(ag.reshape(pools, (way * shot * n, d))))
        denom = ag.reshape(ag.matmul(ag.reshape(qf, (M, 1)), ag.reshape(sf, (1, way))), (M, 1, way, 1))
        sim = ag.div(ag.reshape(raw, (M, n, way, shot * n)), denom)
        sim = ag.reshape(sim, (M * n, way * shot * n))
    else:
        raise ParameterError(f"unknown normalization {normalization!r}")
    sim = ag.transpose(ag.reshape(sim, (M, n, way, shot * n)), (0, 2, 1, 3))  # (M, C, n, Kn)
    return ag.sum(ag.topk_sum(sim, k), axis=2)


class ProtoNet(FewShotMethod):
    family = "metric"

    def __init__(self, model, distance: str = "sqeuclidean", temperature: float = 0.1,
                 name: str = "protonet"):
        super().__init__(model)
        if distance not in DISTANCES:
            raise MethodConfigError(f"unknown distance {distance!r}", key="protonet.distance")
        self.distance = distance
        self.temperature = float(temperature) if distance == "cosine" else 1.0
        self.name = name

    def _features(self, x) -> Tensor:
        f = self.embed(x)
        return ag.reshape(f, (f.shape[0], -1)) if f.ndim > 2 else f

    def scores(self, episode) -> Tensor:
        protos = compute_prototypes(self._features(episode.support_x), episode.support_y,
                                    episode.way, self.distance, self.temperature)
        return proto_logits(self._features(episode.query_x), protos)

    def set_forward_loss(self, episode):
        logits = self.scores(episode)
        return ag.cross_entropy(logits, episode.query_y), logits.data

    def set_forward(self, episode) -> np.ndarray:
        with no_grad():
            return self.scores(episode).data.copy()


class DN4(FewShotMethod):
    family = "metric"
    name = "dn4"

    def __init__(self, model, k: int = 1, normalization: str = "descriptor"):
        super().__init__(model)
        if model.output_mode != "spatial":
            raise MethodConfigError("dn4 needs a spatial backbone (set backbone.output = spatial)",
                                    key="backbone.output")
        if normalization not in ("descriptor", "frobenius"):
            raise MethodConfigError(f"unknown normalization {normalization!r}",
                                    key="dn4.normalization")
        self.k = int(k)
        self.normalization = normalization

    def scores(self, episode) -> Tensor:
        support = to_descriptors(self.embed(episode.support_x))
        query = to_descriptors(self.embed(episode.query_x))
        return dn4_scores(query, support, episode.support_y, episode.way, self.k, self.normalization)

    def set_forward_loss(self, episode):
        logits = self.scores(episode)
        return ag.cross_entropy(logits, episode.query_y), logits.data

    def set_forward(self, episode) -> np.ndarray:
        with no_grad():
            return self.scores(episode).data.copy()


def metric_episode_loss(method: FewShotMethod, episode):
    return method.set_forward_loss(episode)
