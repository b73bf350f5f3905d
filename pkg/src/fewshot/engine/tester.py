"""Reload a run directory and score its best checkpoint on the test protocol."""

from __future__ import annotations

from pathlib import Path

from ..backbones import load_checkpoint
from ..config import load_config_file, parse_overrides, resolve_config, validate_config
from ..data.manifest import check_disjoint, load_manifest
from ..errors import StateError
from ..methods import build_method
from .evaluation import EvalReport, Protocol, cross_domain_evaluate, evaluate, write_report
from .trainer import CKPT_BEST, CONFIG_FILE, load_split


def load_run_config(run_dir, overrides=None) -> dict:
    """Dumped config of ``run_dir`` with ``overrides`` (list of key=value or dict) applied."""
    path = Path(run_dir) / CONFIG_FILE
    if not path.is_file():
        raise StateError(f"{run_dir}: no {CONFIG_FILE}")
    if isinstance(overrides, (list, tuple)):
        overrides = parse_overrides(list(overrides))
    cfg = resolve_config(load_config_file(path), overrides or {})
    validate_config(cfg)
    return cfg


def load_method(cfg: dict, checkpoint, train_set=None):
    train_set = train_set if train_set is not None else load_split(cfg, "train")
    state = load_checkpoint(checkpoint)
    method = build_method(cfg, train_set.sample_shape, train_set.num_classes)
    method.load_state(state, strict=True)
    return method


def run_test(run_dir, overrides=None, write: bool = True) -> EvalReport:
    """Evaluate ``run_dir/ckpt_best``; writes ``eval_report.json`` and ``eval_report.txt``.

    With ``eval.target_root`` set the test set comes from that root instead
    (cross-domain evaluation; its classes must be disjoint from the source
    training classes).
    """
    run_dir = Path(run_dir)
    cfg = load_run_config(run_dir, overrides)
    train_set = load_split(cfg, "train")
    method = load_method(cfg, run_dir / CKPT_BEST, train_set)
    protocol = Protocol.from_config(cfg)
    e = cfg["eval"]
    prov = {"checkpoint": str(run_dir / CKPT_BEST)}
    if e["target_root"]:
        target = load_manifest(e["target_root"], e["target_split"])
        report = cross_domain_evaluate(method, train_set, cfg["data"]["root"], target, protocol,
                                       e["target_root"], e["workers"], e["dump_tasks"])
    else:
        test_set = load_split(cfg, "test")
        check_disjoint(train_set, test_set)
        report = evaluate(method, test_set, protocol, e["workers"], e["dump_tasks"])
    report.provenance.update(prov)
    if write:
        write_report(run_dir, report)
    return report
