"""Episodic sampling of C-way K-shot tasks and support/query transforms."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ..errors import CapacityError, TransformError
from .manifest import DatasetManifest

# RNG stream tags; combined with (run seed, repetition, index) they give
# every episode its own independent generator.
TRAIN_STREAM = 0
VAL_STREAM = 1
TEST_STREAM = 2
AUGMENT_STREAM = 3


def episode_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(key)))


@dataclass(frozen=True, eq=False)
class Episode:
    """One task. Samples are class-major: class 0's shots first, then class 1's."""

    way: int
    shot: int
    query: int
    support_x: np.ndarray
    support_y: np.ndarray
    query_x: np.ndarray
    query_y: np.ndarray
    support_ids: tuple
    query_ids: tuple
    class_map: tuple  # local label -> original class label

    @property
    def size(self) -> int:
        return len(self.support_ids) + len(self.query_ids)


def sample_episode(
    manifest: DatasetManifest, way: int, shot: int, query: int, rng: np.random.Generator
) -> Episode:
    """Draw ``way`` classes, then ``shot + query`` distinct samples from each."""
    if way < 1 or shot < 1 or query < 1:
        raise CapacityError(f"way/shot/query must be positive, got {way}/{shot}/{query}")
    if manifest.num_classes < way:
        raise CapacityError(
            f"{manifest.split}: {way}-way episode needs {way} classes, have {manifest.num_classes}"
        )
    need = shot + query
    eligible = np.array([i for i, idx in enumerate(manifest.by_class) if len(idx) >= need])
    if len(eligible) < way:
        raise CapacityError(
            f"{manifest.split}: only {len(eligible)} classes have >= {need} samples, need {way}"
        )
    chosen = rng.choice(eligible, size=way, replace=False)
    support, query_idx = [], []
    for cls in chosen:
        picks = rng.choice(manifest.by_class[cls], size=need, replace=False)
        support.append(picks[:shot])
        query_idx.append(picks[shot:])
    support = np.concatenate(support)
    query_idx = np.concatenate(query_idx)
    records = manifest.records
    return Episode(
        way=way,
        shot=shot,
        query=query,
        support_x=manifest.features[support],
        support_y=np.repeat(np.arange(way), shot),
        query_x=manifest.features[query_idx],
        query_y=np.repeat(np.arange(way), query),
        support_ids=tuple(records[i].sample_id for i in support),
        query_ids=tuple(records[i].sample_id for i in query_idx),
        class_map=tuple(manifest.classes[c] for c in chosen),
    )


Transform = Callable[[np.ndarray, np.random.Generator], np.ndarray]


def identity(x: np.ndarray, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    return x


class GaussianJitter:
    """Additive feature-space noise, the training-time augmentation hook."""

    def __init__(self, sigma: float):
        if sigma < 0:
            raise TransformError("jitter sigma must be non-negative")
        self.sigma = float(sigma)

    def __call__(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        if self.sigma == 0:
            return x
        return x + self.sigma * rng.standard_normal(x.shape)

    def __repr__(self):
        return f"GaussianJitter({self.sigma})"


def apply_transforms(
    episode: Episode,
    support_aug: Transform = identity,
    query_aug: Transform = identity,
    rng: Optional[np.random.Generator] = None,
) -> Episode:
    """Transform support and query independently; transforms must keep shapes."""
    if rng is None:
        rng = np.random.default_rng(0)
    sx = np.asarray(support_aug(episode.support_x, rng), dtype=np.float64)
    qx = np.asarray(query_aug(episode.query_x, rng), dtype=np.float64)
    if sx.shape != episode.support_x.shape:
        raise TransformError(f"support transform changed shape {episode.support_x.shape} -> {sx.shape}")
    if qx.shape != episode.query_x.shape:
        raise TransformError(f"query transform changed shape {episode.query_x.shape} -> {qx.shape}")
    return dataclasses.replace(episode, support_x=sx, query_x=qx)
