"""Run configuration: defaults, the config file syntax and override merging.

Config files are line oriented::

    # comment
    method = protonet
    [train]
    way = 5
    optimizer.lr = 0.05        # dotted keys work inside or outside sections

A ``[section]`` header prefixes the keys that follow it. Values are JSON
literals (numbers, ``true``/``false``, quoted strings, lists); anything that
is not valid JSON is taken as a bare string.

Precedence is CLI ``--set`` over the user file over the defaults. Only keys
present in the defaults are accepted.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path

from .errors import ConfigError

DEFAULTS = {
    "method": "protonet",
    "seed": 0,
    "output": {"dir": "runs/default"},
    "data": {"root": "", "train_split": "train", "val_split": "val", "test_split": "test"},
    "backbone": {
        "arch": "mlp-2",
        "widths": [64, 64],
        "filters": [16, 16],
        "activation": "relu",
        "final_activation": True,
        "output": "auto",
    },
    "train": {
        "way": 5,
        "shot": 1,
        "query": 15,
        "episode_size": 1,
        "episodes_per_epoch": 100,
        "epochs": 10,
        "support_jitter": 0.0,
        "query_jitter": 0.0,
        "init_from": "",
        "val_tasks": 200,
    },
    "pretrain": {"batch_size": 64, "head": "auto", "temperature": 0.1},
    "optimizer": {
        "kind": "sgd",
        "lr": 0.05,
        "momentum": 0.9,
        "weight_decay": 0.0005,
        "schedule": "cosine",
    },
    "eval": {
        "way": 5,
        "shot": 1,
        "query": 15,
        "tasks": 2000,
        "repetitions": 5,
        "workers": 1,
        "seed": 0,
        "dump_tasks": True,
        "target_root": "",
        "target_split": "test",
    },
    "finetune": {
        "head": "auto",
        "steps": 100,
        "lr": 0.5,
        "temperature": 0.1,
        "reg": 0.01,
        "max_steps": 1000,
        "tol": 1e-6,
        "logistic_lr": 8.0,
        "aggregate": "centroid",
    },
    "maml": {
        "inner_lr": 0.1,
        "inner_steps": 5,
        "eval_inner_steps": 10,
        "second_order": True,
        "head_only": False,
    },
    "r2d2": {"lam": 50.0},
    "protonet": {"distance": "auto", "temperature": 0.1},
    "dn4": {"k": 1, "normalization": "descriptor"},
}


def defaults() -> dict:
    return copy.deepcopy(DEFAULTS)


def parse_value(text: str):
    text = text.strip()
    try:
        return json.loads(text)
    except ValueError:
        return text


def _set_path(tree: dict, path: str, value, origin: str = "") -> None:
    parts = path.split(".")
    if not all(parts):
        raise ConfigError(f"malformed key{origin}", key=path)
    node = tree
    for i, part in enumerate(parts[:-1]):
        nxt = node.setdefault(part, {})
        if not isinstance(nxt, dict):
            raise ConfigError(f"key is both a value and a section{origin}", key=".".join(parts[: i + 1]))
        node = nxt
    if isinstance(node.get(parts[-1]), dict):
        raise ConfigError(f"key is both a value and a section{origin}", key=path)
    node[parts[-1]] = value


def parse_config_text(text: str, source: str = "<config>") -> dict:
    tree: dict = {}
    section = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith(("#", ";")):
            continue
        where = f" ({source}:{lineno})"
        if line.startswith("["):
            if not line.endswith("]") or len(line) < 3:
                raise ConfigError(f"malformed section header{where}: {line}")
            section = line[1:-1].strip()
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value'{where}: {line}")
        key, value = line.split("=", 1)
        key = key.strip()
        if " #" in value and not value.strip().startswith(('"', "[")):
            value = value.split(" #", 1)[0]
        _set_path(tree, f"{section}.{key}" if section else key, parse_value(value), where)
    return tree


def load_config_file(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text(), str(path))


def parse_overrides(items) -> dict:
    """``["a.b=1", "c=x"]`` -> nested dict."""
    tree: dict = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like key=value")
        key, value = item.split("=", 1)
        _set_path(tree, key.strip(), parse_value(value))
    return tree


def _check_type(default, value, path):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"expected a boolean, got {value!r}", key=path)
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {value!r}", key=path)
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}", key=path)
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {value!r}", key=path)
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"expected a list, got {value!r}", key=path)
        return list(value)
    raise ConfigError(f"unsupported default type {type(default).__name__}", key=path)


def merge_config(default: dict, user: dict, _prefix: str = "") -> dict:
    """Deep merge; ``user`` wins, unknown keys and type mismatches raise."""
    out = copy.deepcopy(default)
    for key, value in (user or {}).items():
        path = f"{_prefix}{key}"
        if key not in default:
            raise ConfigError("unknown configuration key", key=path)
        base = default[key]
        if isinstance(base, dict):
            if not isinstance(value, dict):
                raise ConfigError(f"expected a section, got {value!r}", key=path)
            out[key] = merge_config(base, value, f"{path}.")
        else:
            if isinstance(value, dict):
                raise ConfigError("expected a value, got a section", key=path)
            out[key] = _check_type(base, value, path)
    return out


def resolve_config(user: dict | None = None, overrides=None) -> dict:
    cfg = merge_config(DEFAULTS, user or {})
    return merge_config(cfg, parse_overrides(overrides) if isinstance(overrides, list) else (overrides or {}))


def flatten(tree: dict, prefix: str = "") -> list:
    items = []
    for key, value in tree.items():
        path = f"{prefix}{key}"
        if isinstance(value, dict):
            items.extend(flatten(value, f"{path}."))
        else:
            items.append((path, value))
    return items


def get(cfg: dict, path: str):
    node = cfg
    for part in path.split("."):
        node = node[part]
    return node


def dump_config(cfg: dict) -> str:
    return "".join(f"{k} = {json.dumps(v)}\n" for k, v in flatten(cfg))


def validate_config(cfg: dict, check_data: bool = True) -> None:
    """Value-level checks that merging cannot express."""
    from .methods import method_family

    method_family(cfg["method"])
    if check_data:
        root = cfg["data"]["root"]
        if not root:
            raise ConfigError("dataset root is not set", key="data.root")
        if not Path(root).is_dir():
            raise ConfigError(f"dataset root {root!r} does not exist", key="data.root")
    for block in ("train", "eval"):
        for field in ("way", "shot", "query"):
            if cfg[block][field] < 1:
                raise ConfigError("must be at least 1", key=f"{block}.{field}")
        if cfg[block]["way"] < 2:
            raise ConfigError("episodes need at least 2 classes", key=f"{block}.way")
    positive = ["train.episode_size", "train.episodes_per_epoch", "train.val_tasks",
                "eval.tasks", "eval.repetitions", "eval.workers", "pretrain.batch_size"]
    for path in positive:
        if get(cfg, path) < 1:
            raise ConfigError("must be at least 1", key=path)
    if cfg["train"]["epochs"] < 0:
        raise ConfigError("must be non-negative", key="train.epochs")
    if cfg["optimizer"]["lr"] < 0:
        raise ConfigError("must be non-negative", key="optimizer.lr")
    if cfg["train"]["support_jitter"] < 0 or cfg["train"]["query_jitter"] < 0:
        raise ConfigError("jitter must be non-negative", key="train.support_jitter")
    if cfg["r2d2"]["lam"] <= 0:
        raise ConfigError("must be positive", key="r2d2.lam")
    if cfg["maml"]["inner_lr"] <= 0:
        raise ConfigError("must be positive", key="maml.inner_lr")
    if cfg["method"] in ("maml", "anil") and cfg["train"]["way"] != cfg["eval"]["way"]:
        raise ConfigError("maml/anil heads need eval.way == train.way", key="eval.way")
