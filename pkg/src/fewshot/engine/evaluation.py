"""Evaluation protocol: T seeded tasks per repetition, R repetitions, mean and 95% CI.

Task ``t`` of repetition ``r`` draws its episode from its own generator
``episode_rng(seed, TEST_STREAM, r, t)``, so any partition of the work over
worker processes yields the same per-task accuracies. Results land in an
indexed buffer and all aggregation happens in the parent.
"""

from __future__ import annotations

import json
import multiprocessing as mp
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..data.episodes import TEST_STREAM, VAL_STREAM, episode_rng, sample_episode
from ..data.manifest import DatasetManifest, shared_classes
from ..errors import ProtocolViolationError, StateError
from ..methods.base import accuracy

REPORT_VERSION = 1


@dataclass(frozen=True)
class Protocol:
    way: int = 5
    shot: int = 1
    query: int = 15
    tasks: int = 2000
    repetitions: int = 5
    seed: int = 0

    @classmethod
    def from_config(cls, cfg: dict) -> "Protocol":
        e = cfg["eval"]
        return cls(e["way"], e["shot"], e["query"], e["tasks"], e["repetitions"], e["seed"])


@dataclass
class EvalReport:
    method: str
    way: int
    shot: int
    query: int
    tasks_per_repetition: int
    repetitions: int
    seed: int
    per_repetition: list
    mean: float
    ci95: float
    per_task: list | None = None
    provenance: dict = field(default_factory=dict)
    version: int = REPORT_VERSION

    @classmethod
    def from_accuracies(cls, method: str, protocol: Protocol, acc: np.ndarray,
                        keep_tasks: bool = True, provenance: dict | None = None) -> "EvalReport":
        acc = np.asarray(acc, dtype=np.float64).reshape(protocol.repetitions, protocol.tasks)
        flat = acc.ravel()
        return cls(
            method=method,
            way=protocol.way,
            shot=protocol.shot,
            query=protocol.query,
            tasks_per_repetition=protocol.tasks,
            repetitions=protocol.repetitions,
            seed=protocol.seed,
            per_repetition=[float(m) for m in acc.mean(axis=1)],
            mean=float(flat.mean()),
            ci95=confidence_halfwidth(flat),
            per_task=[float(a) for a in flat] if keep_tasks else None,
            provenance=dict(provenance or {}),
        )

    @property
    def total_tasks(self) -> int:
        return self.tasks_per_repetition * self.repetitions

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        return cls(**json.loads(text))

    def table(self) -> str:
        lines = [
            f"method      {self.method}",
            f"protocol    {self.way}-way {self.shot}-shot, {self.query} queries/class",
            f"tasks       {self.tasks_per_repetition} x {self.repetitions} repetitions",
            f"accuracy    {100 * self.mean:.2f} +- {100 * self.ci95:.2f}",
        ]
        for r, m in enumerate(self.per_repetition):
            lines.append(f"  rep {r}     {100 * m:.2f}")
        for key in sorted(self.provenance):
            lines.append(f"{key:<11} {self.provenance[key]}")
        return "\n".join(lines) + "\n"


def confidence_halfwidth(acc: np.ndarray) -> float:
    """Normal-approximation 95% half-width: 1.96 * sample std / sqrt(N)."""
    acc = np.asarray(acc, dtype=np.float64).ravel()
    if acc.size < 2:
        return 0.0
    return float(1.96 * acc.std(ddof=1) / np.sqrt(acc.size))


def task_accuracy(method, manifest: DatasetManifest, protocol: Protocol, rep: int, t: int,
                  stream: int = TEST_STREAM) -> float:
    rng = episode_rng(protocol.seed, stream, rep, t)
    episode = sample_episode(manifest, protocol.way, protocol.shot, protocol.query, rng)
    return accuracy(method.set_forward(episode), episode.query_y)


_WORKER: dict = {}


def _init_worker(method, manifest, protocol, stream):
    _WORKER.update(method=method, manifest=manifest, protocol=protocol, stream=stream)


def _run_chunk(rep: int, start: int, stop: int):
    w = _WORKER
    acc = [task_accuracy(w["method"], w["manifest"], w["protocol"], rep, t, w["stream"])
           for t in range(start, stop)]
    return rep, start, np.array(acc)


def _chunks(protocol: Protocol, workers: int):
    size = max(1, int(np.ceil(protocol.tasks * protocol.repetitions / (4 * workers))))
    size = min(size, protocol.tasks)
    for rep in range(protocol.repetitions):
        for start in range(0, protocol.tasks, size):
            yield rep, start, min(start + size, protocol.tasks)


def task_accuracies(method, manifest: DatasetManifest, protocol: Protocol, workers: int = 1,
                    stream: int = TEST_STREAM) -> np.ndarray:
    """(R, T) array of per-task query accuracies."""
    out = np.full((protocol.repetitions, protocol.tasks), np.nan)
    if workers <= 1:
        for rep in range(protocol.repetitions):
            for t in range(protocol.tasks):
                out[rep, t] = task_accuracy(method, manifest, protocol, rep, t, stream)
        return out
    methods = mp.get_all_start_methods()
    ctx = mp.get_context("fork" if "fork" in methods else "spawn")
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx, initializer=_init_worker,
                             initargs=(method, manifest, protocol, stream)) as pool:
        futures = [pool.submit(_run_chunk, *c) for c in _chunks(protocol, workers)]
        for fut in futures:
            rep, start, acc = fut.result()
            out[rep, start:start + acc.size] = acc
    return out


def evaluate(method, manifest: DatasetManifest, protocol: Protocol, workers: int = 1,
             keep_tasks: bool = True, provenance: dict | None = None) -> EvalReport:
    """Score ``protocol.tasks * protocol.repetitions`` test tasks with ``method.set_forward``."""
    acc = task_accuracies(method, manifest, protocol, workers)
    prov = {"split": manifest.split, **(provenance or {})}
    return EvalReport.from_accuracies(method.name, protocol, acc, keep_tasks, prov)


def cross_domain_evaluate(method, source_train: DatasetManifest, source_name: str,
                          target: DatasetManifest, protocol: Protocol, target_name: str = "",
                          workers: int = 1, keep_tasks: bool = True) -> EvalReport:
    """Evaluate on a target domain; target classes must not appear in source training."""
    overlap = shared_classes(source_train, target)
    if overlap:
        shown = ", ".join(overlap[:5]) + (" ..." if len(overlap) > 5 else "")
        raise ProtocolViolationError(
            f"{len(overlap)} target classes also occur in source training data: {shown}"
        )
    prov = {"source": source_name, "target": target_name or str(target.root)}
    return evaluate(method, target, protocol, workers, keep_tasks, prov)


def validation_accuracy(method, manifest: DatasetManifest, way: int, shot: int, query: int,
                        tasks: int, seed: int) -> float:
    """Mean accuracy on a fixed set of validation tasks (same tasks on every call)."""
    protocol = Protocol(way, shot, query, tasks, 1, seed)
    acc = [task_accuracy(method, manifest, protocol, 0, t, VAL_STREAM) for t in range(tasks)]
    return float(np.mean(acc))


def write_report(run_dir, report: EvalReport, stem: str = "eval_report") -> tuple:
    """Write ``<stem>.json`` and ``<stem>.txt`` atomically (tmp file + rename)."""
    run_dir = Path(run_dir)
    paths = []
    for suffix, text in ((".json", report.to_json()), (".txt", report.table())):
        path = run_dir / f"{stem}{suffix}"
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(text)
        os.replace(tmp, path)
        paths.append(path)
    return tuple(paths)


def read_report(path) -> EvalReport:
    path = Path(path)
    try:
        return EvalReport.from_json(path.read_text())
    except (OSError, ValueError, TypeError) as exc:
        raise StateError(f"cannot read report {path}: {exc}") from exc
