"""Method registry: maps a method id plus a merged config onto a classifier."""

from __future__ import annotations

from ..backbones import init_model
from ..errors import MethodConfigError
from .base import FewShotMethod, accuracy, predict_labels
from .finetune import HEAD_KINDS, FineTuneMethod, TestHead, fit_head, predict, pretrain
from .meta import MAML, R2D2, MamlConfig, maml_inner, maml_outer_grad, meta_update, ridge_solve
from .metric import (
    DN4,
    PrototypeSet,
    ProtoNet,
    compute_prototypes,
    dn4_i2c,
    dn4_scores,
    proto_logits,
    proto_posterior,
)

# method id -> (family, test head, pre-training head)
FINETUNE_METHODS = {
    "baseline": ("linear", "linear"),
    "baseline++": ("cosine", "cosine"),
    "rfs-simple": ("logistic_l2", "linear"),
    "rfs-nn": ("nn_l2", "linear"),
}
META_METHODS = ("maml", "anil", "r2d2")
METRIC_METHODS = ("protonet", "protonet-cosine", "dn4")
METHODS = tuple(FINETUNE_METHODS) + META_METHODS + METRIC_METHODS


def method_family(method_id: str) -> str:
    if method_id in FINETUNE_METHODS:
        return "finetune"
    if method_id in META_METHODS:
        return "meta"
    if method_id in METRIC_METHODS:
        return "metric"
    raise MethodConfigError(f"unknown method {method_id!r}; known: {', '.join(METHODS)}", key="method")


def backbone_config(cfg: dict) -> dict:
    bb = dict(cfg["backbone"])
    if bb.get("output", "auto") == "auto":
        if bb["arch"].startswith("mlp"):
            bb["output"] = "flat"
        else:
            bb["output"] = "spatial" if cfg["method"] == "dn4" else "flat"
    return bb


def build_method(cfg: dict, input_shape, num_base_classes: int) -> FewShotMethod:
    """Instantiate the configured method on a freshly initialised backbone."""
    method_id = cfg["method"]
    family = method_family(method_id)
    model = init_model(backbone_config(cfg), input_shape, seed=cfg["seed"])

    if family == "finetune":
        head_kind, pre_head = FINETUNE_METHODS[method_id]
        ft = cfg["finetune"]
        if ft["head"] != "auto":
            head_kind = ft["head"]
        if head_kind not in HEAD_KINDS:
            raise MethodConfigError(f"unknown test head {head_kind!r}", key="finetune.head")
        if cfg["pretrain"]["head"] != "auto":
            pre_head = cfg["pretrain"]["head"]
        if pre_head not in ("linear", "cosine"):
            raise MethodConfigError(f"unknown pre-training head {pre_head!r}", key="pretrain.head")
        hyper = {k: ft[k] for k in ("steps", "lr", "temperature", "reg", "max_steps", "tol",
                                     "logistic_lr", "aggregate")}
        return FineTuneMethod(model, num_base_classes, method_id, head_kind, pre_head, hyper,
                              cfg["pretrain"]["temperature"], seed=cfg["seed"])

    if method_id in ("maml", "anil"):
        m = cfg["maml"]
        mcfg = MamlConfig(inner_lr=m["inner_lr"], outer_lr=cfg["optimizer"]["lr"],
                          inner_steps=m["inner_steps"], eval_inner_steps=m["eval_inner_steps"],
                          head_only=(method_id == "anil") or m["head_only"],
                          second_order=m["second_order"])
        return MAML(model, cfg["train"]["way"], mcfg, name=method_id)
    if method_id == "r2d2":
        return R2D2(model, cfg["r2d2"]["lam"])

    if method_id == "dn4":
        return DN4(model, cfg["dn4"]["k"], cfg["dn4"]["normalization"])
    distance = cfg["protonet"]["distance"]
    if distance == "auto":
        distance = "cosine" if method_id == "protonet-cosine" else "sqeuclidean"
    return ProtoNet(model, distance, cfg["protonet"]["temperature"], name=method_id)


__all__ = [
    "DN4",
    "FINETUNE_METHODS",
    "HEAD_KINDS",
    "MAML",
    "METHODS",
    "FewShotMethod",
    "FineTuneMethod",
    "MamlConfig",
    "PrototypeSet",
    "ProtoNet",
    "R2D2",
    "TestHead",
    "accuracy",
    "backbone_config",
    "build_method",
    "compute_prototypes",
    "dn4_i2c",
    "dn4_scores",
    "fit_head",
    "maml_inner",
    "maml_outer_grad",
    "meta_update",
    "method_family",
    "predict",
    "predict_labels",
    "pretrain",
    "proto_logits",
    "proto_posterior",
    "ridge_solve",
]
