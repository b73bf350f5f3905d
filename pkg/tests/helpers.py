"""Shared test utilities: structural episode audit and small in-memory datasets."""

from __future__ import annotations

import numpy as np

from fewshot.data import DatasetManifest, Record

TINY = dict(classes={"train": 10, "val": 5, "test": 5}, samples_per_class=20, feature_dim=8, noise=0.5)


def toy_manifest(num_classes=20, per_class=20, dim=3, split="train", prefix="c", seed=0):
    """In-memory manifest whose features encode (class, sample) for auditing."""
    rng = np.random.default_rng(seed)
    records, feats = [], []
    for c in range(num_classes):
        for s in range(per_class):
            sid = f"{split}-{c}-{s}"
            records.append(Record(sid, f"features/{sid}.bin", f"{prefix}{c:03d}"))
            feats.append(np.concatenate([[c, s], rng.standard_normal(dim - 2)]))
    return DatasetManifest.from_records("/nonexistent", split, records, np.array(feats))


def episode_violations(ep, manifest) -> list:
    """Every broken episode invariant, as readable strings (empty when valid)."""
    bad = []
    C, K, Q = ep.way, ep.shot, ep.query
    label_of = {r.sample_id: r.label for r in manifest.records}
    if len(ep.support_ids) != C * K or ep.support_x.shape[0] != C * K:
        bad.append("support size")
    if len(ep.query_ids) != C * Q or ep.query_x.shape[0] != C * Q:
        bad.append("query size")
    ids = ep.support_ids + ep.query_ids
    if len(set(ids)) != len(ids):
        bad.append("repeated sample")
    if len(set(ep.class_map)) != C:
        bad.append("classes not distinct")
    for ys, n in ((ep.support_y, K), (ep.query_y, Q)):
        counts = np.bincount(ys, minlength=C)
        if len(counts) != C or not np.all(counts == n):
            bad.append("per-class counts")
    if set(ep.support_y.tolist()) != set(range(C)):
        bad.append("labels not onto [0, C)")
    for sid, y in zip(ids, np.concatenate([ep.support_y, ep.query_y])):
        if label_of[sid] != ep.class_map[y]:
            bad.append(f"label remap {sid}")
            break
    index = {r.sample_id: i for i, r in enumerate(manifest.records)}
    rows = [index[s] for s in ids]
    if not np.array_equal(np.concatenate([ep.support_x, ep.query_x]), manifest.features[rows]):
        bad.append("features do not match ids")
    return bad


def tiny_config(root, out, method="protonet", **sections):
    """Small, fast run config on ``root``; ``sections`` are merged per block."""
    from fewshot.config import resolve_config

    user = {
        "method": method,
        "data": {"root": str(root)},
        "output": {"dir": str(out)},
        "backbone": {"widths": [16, 8], "final_activation": False},
        "train": {"epochs": 2, "episodes_per_epoch": 5, "val_tasks": 20, "query": 5},
        "eval": {"tasks": 20, "repetitions": 2, "query": 5},
        "optimizer": {"lr": 0.001},
        "pretrain": {"batch_size": 32},
    }
    for block, values in sections.items():
        if isinstance(values, dict):
            user.setdefault(block, {}).update(values)
        else:
            user[block] = values
    return resolve_config(user)
