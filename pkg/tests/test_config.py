import copy
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from fewshot.config import (
    DEFAULTS,
    defaults,
    dump_config,
    flatten,
    load_config_file,
    merge_config,
    parse_config_text,
    parse_overrides,
    resolve_config,
    validate_config,
)
from fewshot.errors import ConfigError, MethodConfigError

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"


def test_override_wins():
    assert merge_config({"lr": 0.1}, {"lr": 0.01}) == {"lr": 0.01}


def test_empty_user_returns_defaults():
    assert merge_config(DEFAULTS, {}) == DEFAULTS
    assert resolve_config() == DEFAULTS


def test_nested_override_keeps_siblings():
    cfg = merge_config(DEFAULTS, {"optimizer": {"weight_decay": 0.0}})
    assert cfg["optimizer"]["weight_decay"] == 0.0
    assert cfg["optimizer"]["lr"] == DEFAULTS["optimizer"]["lr"]
    assert cfg["train"] == DEFAULTS["train"]


def test_merge_does_not_mutate_inputs():
    base = defaults()
    user = {"train": {"way": 3}}
    merge_config(base, user)
    assert base == DEFAULTS and user == {"train": {"way": 3}}


# random trees for the deep-merge oracle
leaf = st.one_of(st.integers(-5, 5), st.floats(-1, 1, allow_nan=False), st.text("ab", max_size=3))
keys = st.sampled_from(list("pqrs"))
trees = st.recursive(st.dictionaries(keys, leaf, max_size=3),
                     lambda sub: st.dictionaries(keys, st.one_of(leaf, sub), max_size=3), max_leaves=10)


def _restrict(user, default):
    """Keep only the parts of ``user`` that are type-compatible with ``default``."""
    out = {}
    for k, v in user.items():
        if k not in default:
            continue
        d = default[k]
        if isinstance(d, dict):
            if isinstance(v, dict):
                out[k] = _restrict(v, d)
        elif not isinstance(v, dict) and type(v) is type(d):
            out[k] = v
    return out


def _oracle(default, user):
    out = copy.deepcopy(default)
    for path, value in flatten(user):
        node = out
        parts = path.split(".")
        for p in parts[:-1]:
            node = node[p]
        node[parts[-1]] = value
    return out


@given(trees, trees)
def test_deep_merge_oracle(default, raw_user):
    user = _restrict(raw_user, default)
    assert merge_config(default, user) == _oracle(default, user)


@given(trees, trees)
def test_merge_is_idempotent(default, raw_user):
    user = _restrict(raw_user, default)
    once = merge_config(default, user)
    assert merge_config(default, once) == once


def test_unknown_key_names_the_path():
    with pytest.raises(ConfigError) as err:
        merge_config(DEFAULTS, {"optimizer": {"lrr": 0.1}})
    assert err.value.key == "optimizer.lrr"
    assert "optimizer.lrr" in str(err.value)


@pytest.mark.parametrize("user, key", [
    ({"train": {"way": "five"}}, "train.way"),
    ({"train": {"way": 5.0}}, "train.way"),
    ({"train": {"way": True}}, "train.way"),
    ({"backbone": {"final_activation": 1}}, "backbone.final_activation"),
    ({"backbone": {"widths": 64}}, "backbone.widths"),
    ({"optimizer": 0.1}, "optimizer"),
    ({"seed": {"x": 1}}, "seed"),
    ({"method": 3}, "method"),
])
def test_type_mismatch_names_the_path(user, key):
    with pytest.raises(ConfigError) as err:
        merge_config(DEFAULTS, user)
    assert err.value.key == key


def test_integer_accepted_for_float_key():
    cfg = merge_config(DEFAULTS, {"optimizer": {"lr": 1}})
    assert cfg["optimizer"]["lr"] == 1.0 and isinstance(cfg["optimizer"]["lr"], float)


def test_config_text_syntax():
    text = """
# leading comment
method = dn4
seed = 3
[train]
way = 10          # trailing comment
init_from = runs/x
[optimizer]
lr = 0.02
backbone.widths = [8, 8]
output.dir = "runs/my dir # not a comment"
"""
    tree = parse_config_text(text)
    assert tree["method"] == "dn4" and tree["seed"] == 3
    assert tree["train"] == {"way": 10, "init_from": "runs/x"}
    assert tree["optimizer"]["lr"] == 0.02
    assert tree["optimizer"]["backbone"]["widths"] == [8, 8]
    assert tree["optimizer"]["output"]["dir"] == "runs/my dir # not a comment"


@pytest.mark.parametrize("text", ["[train\nway = 1", "just words", "a..b = 1", "a = 1\na.b = 2"])
def test_malformed_config_text(text):
    with pytest.raises(ConfigError):
        parse_config_text(text)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config_file(tmp_path / "nope.conf")


def test_three_level_precedence(tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text("[train]\nway = 7\nshot = 3\n[optimizer]\nlr = 0.2\n")
    cfg = resolve_config(load_config_file(conf), ["train.way=9"])
    assert cfg["train"]["way"] == 9  # CLI beats file
    assert cfg["train"]["shot"] == 3  # file beats default
    assert cfg["optimizer"]["lr"] == 0.2
    assert cfg["train"]["query"] == DEFAULTS["train"]["query"]  # default survives


def test_overrides_parse_json_values():
    tree = parse_overrides(["a.b=1", "c=x", "d=[1, 2]", "e=true", "f=\"7\""])
    assert tree == {"a": {"b": 1}, "c": "x", "d": [1, 2], "e": True, "f": "7"}
    with pytest.raises(ConfigError):
        parse_overrides(["novalue"])


def test_dump_is_a_fixed_point():
    cfg = resolve_config({"method": "maml", "train": {"way": 3}, "output": {"dir": "r u n"}})
    text = dump_config(cfg)
    again = resolve_config(parse_config_text(text))
    assert again == cfg
    assert dump_config(again) == text


@pytest.mark.parametrize("path", sorted(CONFIG_DIR.glob("*.conf")), ids=lambda p: p.stem)
def test_shipped_configs_resolve(path):
    cfg = resolve_config(load_config_file(path))
    validate_config(cfg, check_data=False)


def test_train_and_eval_episodes_independent():
    cfg = resolve_config({"train": {"way": 20, "shot": 1}, "eval": {"way": 5, "shot": 5}})
    validate_config(cfg, check_data=False)
    assert (cfg["train"]["way"], cfg["eval"]["way"]) == (20, 5)


@pytest.mark.parametrize("user, key", [
    ({"data": {"root": ""}}, "data.root"),
    ({"data": {"root": "/definitely/not/here"}}, "data.root"),
])
def test_data_root_checked(user, key):
    with pytest.raises(ConfigError) as err:
        validate_config(resolve_config(user))
    assert err.value.key == key


@pytest.mark.parametrize("user, key", [
    ({"train": {"way": 1}}, "train.way"),
    ({"eval": {"shot": 0}}, "eval.shot"),
    ({"eval": {"tasks": 0}}, "eval.tasks"),
    ({"train": {"epochs": -1}}, "train.epochs"),
    ({"r2d2": {"lam": 0.0}}, "r2d2.lam"),
    ({"method": "maml", "eval": {"way": 10}}, "eval.way"),
])
def test_value_checks(user, key):
    with pytest.raises(ConfigError) as err:
        validate_config(resolve_config(user), check_data=False)
    assert err.value.key == key


def test_unknown_method():
    with pytest.raises(MethodConfigError):
        validate_config(resolve_config({"method": "relationnet"}), check_data=False)
