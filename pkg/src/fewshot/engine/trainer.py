"""Training loops, validation-driven checkpointing and the run directory.

Run directory layout::

    config.final   fully merged config, ``key = json`` lines (re-parses to itself)
    train.log      tab-separated ``epoch  loss  val_acc`` rows; epoch 0 is the
                   untrained model and has loss ``-``
    ckpt_best      parameters of the best validation epoch (ties keep the earlier)
    ckpt_last      parameters after the last finished epoch
    ckpt_abort     only after a numeric failure: the last finite parameters

Nothing time-dependent is written, so equal configs give byte-identical runs.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import autograd as ag
from ..backbones import load_checkpoint, save_checkpoint
from ..config import dump_config, resolve_config, validate_config
from ..data.episodes import (
    AUGMENT_STREAM,
    TRAIN_STREAM,
    GaussianJitter,
    apply_transforms,
    episode_rng,
    sample_episode,
)
from ..data.manifest import check_disjoint, load_manifest
from ..errors import NumericError, StateError, TrainingError
from ..methods import build_method
from ..methods.finetune import pretrain
from ..optim import build_optimizer
from .evaluation import validation_accuracy

CONFIG_FILE = "config.final"
LOG_FILE = "train.log"
CKPT_BEST = "ckpt_best"
CKPT_LAST = "ckpt_last"
CKPT_ABORT = "ckpt_abort"
LOG_HEADER = "epoch\tloss\tval_acc\n"


@dataclass
class TrainState:
    seed: int
    epoch: int = 0
    best_val: float = -np.inf
    best_epoch: int = -1
    history: list = field(default_factory=list)  # (epoch, loss or None, val_acc)


def load_split(cfg: dict, which: str):
    return load_manifest(cfg["data"]["root"], cfg["data"][f"{which}_split"])


def resolve_checkpoint(path) -> Path:
    path = Path(path)
    return path / CKPT_BEST if path.is_dir() else path


class Trainer:
    def __init__(self, cfg: dict, run_dir=None):
        validate_config(cfg)
        self.cfg = cfg
        self.run_dir = Path(run_dir if run_dir is not None else cfg["output"]["dir"])
        self.train_set = load_split(cfg, "train")
        self.val_set = load_split(cfg, "val")
        check_disjoint(self.train_set, self.val_set)
        test_csv = Path(cfg["data"]["root"]) / f"{cfg['data']['test_split']}.csv"
        if test_csv.is_file():
            test_set = load_split(cfg, "test")
            check_disjoint(self.train_set, test_set)
            check_disjoint(self.val_set, test_set)
        self.method = build_method(cfg, self.train_set.sample_shape, self.train_set.num_classes)
        self.warm_started = self._warm_start()
        self.state = TrainState(seed=cfg["seed"])
        self._log = None

    def _warm_start(self) -> list:
        source = self.cfg["train"]["init_from"]
        if not source:
            return []
        state = load_checkpoint(resolve_checkpoint(source))
        backbone = {k: v for k, v in state.items() if k.startswith("backbone.")}
        loaded = self.method.load_state(backbone, strict=False)
        if not loaded:
            raise StateError(f"{source}: no backbone parameters match the configured backbone")
        return loaded

    # -- bookkeeping -----------------------------------------------------------
    def _write_log_row(self, epoch: int, loss, val: float) -> None:
        loss_text = "-" if loss is None else repr(float(loss))
        self._log.write(f"{epoch}\t{loss_text}\t{val!r}\n")
        self._log.flush()

    def validate(self) -> float:
        e = self.cfg["eval"]
        return validation_accuracy(self.method, self.val_set, e["way"], e["shot"], e["query"],
                                   self.cfg["train"]["val_tasks"], self.cfg["seed"])

    def end_epoch(self, epoch: int, loss) -> None:
        val = self.validate()
        st = self.state
        st.epoch = epoch
        st.history.append((epoch, loss, val))
        self._write_log_row(epoch, loss, val)
        params = self.method.parameters()
        save_checkpoint(self.run_dir / CKPT_LAST, params)
        if val > st.best_val:
            st.best_val, st.best_epoch = val, epoch
            save_checkpoint(self.run_dir / CKPT_BEST, params)

    def _abort(self, epoch: int, exc: Exception):
        save_checkpoint(self.run_dir / CKPT_ABORT, self.method.parameters())
        self._log.write(f"# aborted in epoch {epoch}: {exc}\n")
        self._log.flush()
        raise TrainingError(f"training aborted in epoch {epoch}: {exc}") from exc

    # -- loops -----------------------------------------------------------------
    def run(self) -> Path:
        self.run_dir.mkdir(parents=True, exist_ok=True)
        (self.run_dir / CONFIG_FILE).write_text(dump_config(self.cfg))
        with open(self.run_dir / LOG_FILE, "w") as log:
            self._log = log
            log.write(LOG_HEADER)
            self.end_epoch(0, None)
            if self.method.family == "finetune":
                self._pretrain()
            else:
                self._episodic()
        self._log = None
        return self.run_dir

    def _pretrain(self) -> None:
        tc = self.cfg["train"]
        jitter = tc["support_jitter"]
        augment = GaussianJitter(jitter) if jitter > 0 else None
        epoch_box = [1]

        def on_epoch(epoch, loss):
            self.end_epoch(epoch, loss)
            epoch_box[0] = epoch + 1

        try:
            pretrain(self.method, self.train_set, self.cfg["optimizer"], tc["epochs"],
                     self.cfg["pretrain"]["batch_size"], self.cfg["seed"], augment, on_epoch)
        except NumericError as exc:
            self._abort(epoch_box[0], exc)

    def _episode(self, epoch: int, batch: int, idx: int):
        tc = self.cfg["train"]
        seed = self.cfg["seed"]
        ep = sample_episode(self.train_set, tc["way"], tc["shot"], tc["query"],
                            episode_rng(seed, TRAIN_STREAM, epoch, batch, idx))
        if tc["support_jitter"] > 0 or tc["query_jitter"] > 0:
            ep = apply_transforms(ep, GaussianJitter(tc["support_jitter"]),
                                  GaussianJitter(tc["query_jitter"]),
                                  episode_rng(seed, AUGMENT_STREAM, epoch, batch, idx))
        return ep

    def _episodic(self) -> None:
        tc = self.cfg["train"]
        params = self.method.trainable()
        opt = build_optimizer(params, self.cfg["optimizer"], tc["epochs"] * tc["episodes_per_epoch"])
        for epoch in range(1, tc["epochs"] + 1):
            losses = []
            try:
                for b in range(tc["episodes_per_epoch"]):
                    # meta-batch: mean of the episode losses, reduced in index order
                    total = None
                    for e in range(tc["episode_size"]):
                        loss, _ = self.method.set_forward_loss(self._episode(epoch, b, e))
                        total = loss if total is None else ag.add(total, loss)
                    total = ag.mul(total, 1.0 / tc["episode_size"])
                    opt.step(ag.grad(total, params, allow_unused=True))
                    losses.append(total.item())
            except NumericError as exc:
                self._abort(epoch, exc)
            self.end_epoch(epoch, float(np.mean(losses)))


def train(cfg: dict, run_dir=None) -> Path:
    """Run the configured training loop; returns the run directory."""
    return Trainer(cfg, run_dir).run()


def read_train_log(run_dir) -> list:
    """Parse ``train.log`` into (epoch, loss or None, val_acc) tuples."""
    rows = []
    for line in (Path(run_dir) / LOG_FILE).read_text().splitlines()[1:]:
        if not line or line.startswith("#"):
            continue
        epoch, loss, val = line.split("\t")
        rows.append((int(epoch), None if loss == "-" else float(loss), float(val)))
    return rows


def grid_search(base_cfg: dict, grid: dict, run_root) -> list:
    """Train once per point of the ``{dotted.key: [values]}`` grid.

    Returns dicts with the overrides, run directory and best validation
    accuracy, sorted best first (ties keep grid order).
    """
    keys = list(grid)
    results = []
    for i, values in enumerate(itertools.product(*(grid[k] for k in keys))):
        overrides = dict(zip(keys, values))
        tree: dict = {}
        for k, v in overrides.items():
            node = tree
            parts = k.split(".")
            for p in parts[:-1]:
                node = node.setdefault(p, {})
            node[parts[-1]] = v
        cfg = resolve_config(base_cfg, tree)
        run_dir = Path(run_root) / f"point{i:03d}"
        trainer = Trainer(cfg, run_dir)
        trainer.run()
        results.append({"overrides": overrides, "run_dir": str(run_dir),
                        "best_val": trainer.state.best_val, "best_epoch": trainer.state.best_epoch})
    order = sorted(range(len(results)), key=lambda j: -results[j]["best_val"])
    return [results[j] for j in order]
