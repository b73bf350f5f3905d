"""Named synthetic benchmarks used by the shipped configs and the acceptance suite.

``flat`` is the base-class/novel-class benchmark: 32 informative dimensions,
32 pure-noise nuisance dimensions and a per-sample gain. ``flat-wide`` is the
same generator with 20 test classes; its train and val splits are identical
to ``flat``. ``shifted`` is a separate target domain whose class centers are
displaced along a common direction. ``spatial`` emits 8x8 descriptor grids
built from per-class parts for local-descriptor methods.
"""

from __future__ import annotations

import dataclasses

from .data.synthetic import SyntheticSpec

FLAT = SyntheticSpec(
    classes={"train": 40, "val": 10, "test": 10},
    samples_per_class=100,
    feature_dim=32,
    noise=0.75,
    nuisance_dim=32,
    nuisance_scale=2.0,
    gain_spread=0.25,
)

FLAT_WIDE = dataclasses.replace(FLAT, classes={"train": 40, "val": 10, "test": 20})

SHIFTED = dataclasses.replace(FLAT, classes={"test": 10}, center_shift=3.0, label_prefix="t", seed=1)

SPATIAL = SyntheticSpec(
    classes={"train": 40, "val": 10, "test": 10},
    samples_per_class=40,
    feature_dim=8,
    noise=0.75,
    spatial=True,
    grid=(8, 8),
    regions=(2, 2),
    parts_per_class=3,
    background_prob=0.25,
)

PRESETS = {"flat": FLAT, "flat-wide": FLAT_WIDE, "shifted": SHIFTED, "spatial": SPATIAL}
