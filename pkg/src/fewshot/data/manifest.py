"""Dataset manifests and the feature file formats they reference.

A dataset root holds one manifest per split, ``<root>/<split>.csv`` with the
header ``id,feature_file,label``. ``feature_file`` is a path relative to the
root and selects its own format by suffix:

``.bin``
    little-endian binary. An unsigned 64-bit rank ``r``, then ``r`` unsigned
    64-bit extents, then ``prod(extents)`` float64 values in row-major order.
``.csv``
    a single line of comma-separated decimal floats (flat vectors only).
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from ..errors import (
    DisjointnessError,
    DuplicateIdError,
    EmptyClassError,
    MalformedRowError,
    ManifestError,
    MissingManifestError,
)

SPLITS = ("train", "val", "test")
HEADER = ["id", "feature_file", "label"]


@dataclass(frozen=True)
class Record:
    sample_id: str
    feature_file: str
    label: str


@dataclass(frozen=True, eq=False)
class DatasetManifest:
    """Parsed split: records plus the eagerly loaded feature array.

    ``features[i]`` belongs to ``records[i]``; ``targets[i]`` indexes
    ``classes``. Treat instances as immutable.
    """

    root: Path
    split: str
    records: tuple
    features: np.ndarray
    classes: tuple
    targets: np.ndarray
    by_class: tuple = field(repr=False)

    @property
    def sample_shape(self) -> tuple:
        return tuple(self.features.shape[1:])

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def __len__(self):
        return len(self.records)

    @classmethod
    def from_records(cls, root, split: str, records: Iterable[Record], features: np.ndarray):
        records = tuple(records)
        classes = tuple(sorted({r.label for r in records}))
        lookup = {c: i for i, c in enumerate(classes)}
        targets = np.array([lookup[r.label] for r in records], dtype=np.int64)
        by_class = tuple(np.flatnonzero(targets == i) for i in range(len(classes)))
        features = np.ascontiguousarray(features, dtype=np.float64)
        features.setflags(write=False)
        targets.setflags(write=False)
        return cls(Path(root), split, records, features, classes, targets, by_class)


def write_feature_file(path: Path, array: np.ndarray) -> None:
    array = np.asarray(array, dtype="<f8", order="C")
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix == ".bin":
        header = struct.pack(f"<Q{array.ndim}Q", array.ndim, *array.shape)
        path.write_bytes(header + array.tobytes())
    elif path.suffix == ".csv":
        if array.ndim != 1:
            raise ManifestError(f"{path}: csv feature files hold flat vectors only")
        path.write_text(",".join(repr(float(v)) for v in array) + "\n")
    else:
        raise ManifestError(f"{path}: unknown feature file suffix {path.suffix!r}")


def read_feature_file(path: Path) -> np.ndarray:
    if not path.is_file():
        raise ManifestError(f"feature file not found: {path}")
    if path.suffix == ".bin":
        raw = path.read_bytes()
        if len(raw) < 8:
            raise MalformedRowError(f"{path}: truncated header")
        (rank,) = struct.unpack_from("<Q", raw, 0)
        offset = 8 + 8 * rank
        if rank > 8 or len(raw) < offset:
            raise MalformedRowError(f"{path}: bad rank {rank}")
        shape = struct.unpack_from(f"<{rank}Q", raw, 8)
        count = int(np.prod(shape)) if rank else 1
        if len(raw) != offset + 8 * count:
            raise MalformedRowError(f"{path}: payload size does not match shape {shape}")
        return np.frombuffer(raw, dtype="<f8", offset=offset).reshape(shape).astype(np.float64)
    if path.suffix == ".csv":
        text = path.read_text().strip()
        try:
            return np.array([float(v) for v in text.split(",")], dtype=np.float64)
        except ValueError:
            raise MalformedRowError(f"{path}: non-numeric value") from None
    raise MalformedRowError(f"{path}: unknown feature file suffix {path.suffix!r}")


def write_manifest(root: Path, split: str, records: Iterable[Record]) -> Path:
    path = Path(root) / f"{split}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HEADER)
        for r in records:
            writer.writerow([r.sample_id, r.feature_file, r.label])
    return path


def load_manifest(root, split: str) -> DatasetManifest:
    """Parse ``<root>/<split>.csv`` and load every referenced feature file."""
    root = Path(root)
    path = root / f"{split}.csv"
    if not path.is_file():
        raise MissingManifestError(f"manifest not found: {path}")
    records = []
    seen = set()
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != HEADER:
            raise MalformedRowError(f"{path}: expected header {','.join(HEADER)}, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise MalformedRowError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            sample_id, feature_file, label = (v.strip() for v in row)
            if not sample_id or not feature_file:
                raise MalformedRowError(f"{path}:{lineno}: empty id or feature_file")
            if not label:
                raise EmptyClassError(f"{path}:{lineno}: empty class label")
            if sample_id in seen:
                raise DuplicateIdError(f"{path}:{lineno}: duplicate sample id {sample_id!r}")
            seen.add(sample_id)
            records.append(Record(sample_id, feature_file, label))
    if not records:
        raise EmptyClassError(f"{path}: manifest has no records")
    arrays = [read_feature_file(root / r.feature_file) for r in records]
    shape = arrays[0].shape
    for r, a in zip(records, arrays):
        if a.shape != shape:
            raise MalformedRowError(f"{r.feature_file}: shape {a.shape} differs from {shape}")
    return DatasetManifest.from_records(root, split, records, np.stack(arrays))


def shared_classes(a: DatasetManifest, b: DatasetManifest) -> list:
    """Class labels present in both manifests (empty when class-disjoint)."""
    return sorted(set(a.classes) & set(b.classes))


def check_disjoint(a: DatasetManifest, b: DatasetManifest) -> None:
    shared = shared_classes(a, b)
    if shared:
        preview = ", ".join(shared[:5])
        raise DisjointnessError(
            f"{a.split} and {b.split} share {len(shared)} class(es): {preview}"
        )
