"""Synthetic class-disjoint datasets written in manifest format.

Flat mode draws one center per class and emits ``center + N(0, noise^2)``
samples. Spatial mode emits a ``(feature_dim, h, w)`` grid per sample: the
grid is tiled into regions, each region is filled with one of the class's
part vectors (or a shared background part) plus per-cell noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DataError
from .manifest import SPLITS, DatasetManifest, Record, write_feature_file, write_manifest


def _default_classes():
    return {"train": 40, "val": 10, "test": 10}


@dataclass(frozen=True)
class SyntheticSpec:
    classes: dict = field(default_factory=_default_classes)
    samples_per_class: int = 40
    feature_dim: int = 32
    center_scale: float = 1.0
    noise: float = 0.5
    # spatial mode
    spatial: bool = False
    grid: tuple = (8, 8)
    regions: tuple = (2, 2)
    parts_per_class: int = 3
    background_prob: float = 0.0
    # nuisances
    gain_spread: float = 0.0
    nuisance_dim: int = 0
    nuisance_scale: float = 1.0
    center_shift: float = 0.0
    label_prefix: str = "c"
    file_format: str = "bin"
    seed: int = 0

    def validate(self) -> None:
        if not self.noise > 0:
            raise DataError("noise must be positive")
        if self.feature_dim < 2:
            raise DataError("feature_dim must be at least 2")
        if self.samples_per_class < 1:
            raise DataError("samples_per_class must be positive")
        unknown = set(self.classes) - set(SPLITS)
        if unknown:
            raise DataError(f"unknown split(s) {sorted(unknown)}")
        if self.file_format not in ("bin", "csv"):
            raise DataError(f"unknown file format {self.file_format!r}")
        if self.spatial:
            if self.file_format != "bin":
                raise DataError("spatial samples need the bin format")
            h, w = self.grid
            rh, rw = self.regions
            if h % rh or w % rw:
                raise DataError(f"grid {self.grid} not divisible into regions {self.regions}")


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


def _class_vectors(spec: SyntheticSpec, total: int) -> np.ndarray:
    rng = _stream(spec.seed, 0)
    count = spec.parts_per_class if spec.spatial else 1
    vecs = rng.normal(0.0, spec.center_scale, size=(total, count, spec.feature_dim))
    if spec.center_shift:
        direction = _stream(spec.seed, 1).normal(size=spec.feature_dim)
        vecs = vecs + spec.center_shift * direction / np.linalg.norm(direction)
    return vecs


def _flat_samples(spec, centers, rng) -> np.ndarray:
    n = spec.samples_per_class
    x = centers[0] + spec.noise * rng.standard_normal((n, spec.feature_dim))
    if spec.gain_spread:
        x = x * np.exp(spec.gain_spread * rng.standard_normal((n, 1)))
    if spec.nuisance_dim:
        extra = spec.nuisance_scale * rng.standard_normal((n, spec.nuisance_dim))
        x = np.concatenate([x, extra], axis=1)
    return x


def _spatial_samples(spec, parts, background, rng) -> np.ndarray:
    n = spec.samples_per_class
    d = spec.feature_dim
    h, w = spec.grid
    rh, rw = spec.regions
    bh, bw = h // rh, w // rw
    out = np.empty((n, d, h, w))
    for s in range(n):
        choice = rng.integers(0, parts.shape[0], size=(rh, rw))
        is_bg = rng.random((rh, rw)) < spec.background_prob
        for i in range(rh):
            for j in range(rw):
                vec = background if is_bg[i, j] else parts[choice[i, j]]
                out[s, :, i * bh:(i + 1) * bh, j * bw:(j + 1) * bw] = vec[:, None, None]
        out[s] += spec.noise * rng.standard_normal((d, h, w))
    if spec.gain_spread:
        out *= np.exp(spec.gain_spread * rng.standard_normal((n, 1, 1, 1)))
    return out


def generate_synthetic(spec: SyntheticSpec, root) -> dict:
    """Write every split of ``spec`` below ``root``; returns split -> manifest.

    Output is deterministic in ``spec.seed``: the same spec produces
    byte-identical files.
    """
    spec.validate()
    root = Path(root)
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create dataset root {root}: {exc}") from exc
    splits = [s for s in SPLITS if spec.classes.get(s, 0) > 0]
    total = sum(spec.classes[s] for s in splits)
    vectors = _class_vectors(spec, total)
    background = _stream(spec.seed, 2).normal(0.0, spec.center_scale, size=spec.feature_dim)

    manifests = {}
    offset = 0
    for split_idx, split in enumerate(splits):
        records, arrays = [], []
        for c in range(spec.classes[split]):
            gid = offset + c
            rng = _stream(spec.seed, 3, split_idx, c)
            if spec.spatial:
                samples = _spatial_samples(spec, vectors[gid], background, rng)
            else:
                samples = _flat_samples(spec, vectors[gid], rng)
            label = f"{spec.label_prefix}{gid:04d}"
            for s, x in enumerate(samples):
                sid = f"{split}-{c:04d}-{s:04d}"
                rel = f"features/{split}/{sid}.{spec.file_format}"
                try:
                    write_feature_file(root / rel, x)
                except OSError as exc:
                    raise DataError(f"cannot write {root / rel}: {exc}") from exc
                records.append(Record(sid, rel, label))
                arrays.append(x)
        offset += spec.classes[split]
        try:
            write_manifest(root, split, records)
        except OSError as exc:
            raise DataError(f"cannot write manifest for {split}: {exc}") from exc
        manifests[split] = DatasetManifest.from_records(root, split, records, np.stack(arrays))
    return manifests
