"""Command-line entry points.

``run_trainer --config <path> [--set key=value]...``
``run_tester --run <dir> [--set key=value]...``
``make_synthetic --root <dir> [--preset name] [--set field=value]...``

Exit codes: 0 success, 2 configuration error, 3 data or state error,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from .config import load_config_file, parse_overrides, parse_value, resolve_config
from .errors import ConfigError, FewShotError


def _fail(prog: str, exc: FewShotError) -> int:
    print(f"{prog}: error: {type(exc).__name__}: {exc}", file=sys.stderr)
    return exc.exit_code


def _parser(prog: str, flag: str, help_text: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog=prog)
    p.add_argument(flag, required=True, help=help_text)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key (repeatable, highest precedence)")
    return p


def run_trainer(argv=None) -> int:
    args = _parser("run_trainer", "--config", "config file path").parse_args(argv)
    from .engine import train

    try:
        cfg = resolve_config(load_config_file(args.config), parse_overrides(args.set))
        run_dir = train(cfg)
    except FewShotError as exc:
        return _fail("run_trainer", exc)
    print(run_dir)
    return 0


def run_tester(argv=None) -> int:
    args = _parser("run_tester", "--run", "run directory written by run_trainer").parse_args(argv)
    from .engine import run_test

    try:
        report = run_test(args.run, args.set)
    except FewShotError as exc:
        return _fail("run_tester", exc)
    sys.stdout.write(report.table())
    return 0


def make_synthetic(argv=None) -> int:
    from .data.synthetic import SyntheticSpec, generate_synthetic
    from .presets import PRESETS

    p = argparse.ArgumentParser(prog="make_synthetic")
    p.add_argument("--root", required=True, help="output dataset root")
    p.add_argument("--preset", default="flat", choices=sorted(PRESETS))
    p.add_argument("--set", action="append", default=[], metavar="FIELD=VALUE",
                   help="override a SyntheticSpec field (JSON value)")
    args = p.parse_args(argv)
    try:
        fields = {f.name for f in dataclasses.fields(SyntheticSpec)}
        changes = {}
        for item in args.set:
            if "=" not in item:
                raise ConfigError(f"override {item!r} must look like field=value")
            key, value = (s.strip() for s in item.split("=", 1))
            if key not in fields:
                raise ConfigError("unknown synthetic field", key=key)
            value = parse_value(value)
            changes[key] = tuple(value) if isinstance(value, list) else value
        spec = dataclasses.replace(PRESETS[args.preset], **changes)
        manifests = generate_synthetic(spec, args.root)
    except FewShotError as exc:
        return _fail("make_synthetic", exc)
    except TypeError as exc:
        return _fail("make_synthetic", ConfigError(str(exc)))
    for split, m in manifests.items():
        print(f"{split}: {m.num_classes} classes, {len(m)} samples, shape {m.sample_shape}")
    return 0


def main_trainer():
    sys.exit(run_trainer())


def main_tester():
    sys.exit(run_tester())


def main_synthetic():
    sys.exit(make_synthetic())
