from .episodes import (
    AUGMENT_STREAM,
    TEST_STREAM,
    TRAIN_STREAM,
    VAL_STREAM,
    Episode,
    GaussianJitter,
    apply_transforms,
    episode_rng,
    identity,
    sample_episode,
)
from .manifest import (
    SPLITS,
    DatasetManifest,
    Record,
    check_disjoint,
    load_manifest,
    read_feature_file,
    shared_classes,
    write_feature_file,
    write_manifest,
)
from .synthetic import SyntheticSpec, generate_synthetic

__all__ = [
    "AUGMENT_STREAM",
    "TEST_STREAM",
    "TRAIN_STREAM",
    "VAL_STREAM",
    "SPLITS",
    "DatasetManifest",
    "Episode",
    "GaussianJitter",
    "Record",
    "SyntheticSpec",
    "apply_transforms",
    "check_disjoint",
    "episode_rng",
    "generate_synthetic",
    "identity",
    "load_manifest",
    "read_feature_file",
    "sample_episode",
    "shared_classes",
    "write_feature_file",
    "write_manifest",
]
