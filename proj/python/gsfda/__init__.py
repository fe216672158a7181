"""Generalized source-free domain adaptation at desk scale.

Thin Python surface over the C++ core: dataset generators, source
pretraining with sparse domain attention, source-free target adaptation via
neighborhood clustering, continual multi-target adaptation, and
domain-aware/agnostic evaluation.
"""

from ._core import (
    AdaptResult,
    Banks,
    Checkpoint,
    ConfigError,
    ContinualResult,
    DataBundle,
    Dataset,
    DomainAttention,
    DomainClassifier,
    EpochRecord,
    EvalResult,
    FullConfig,
    GradCheckResult,
    IoError,
    MaskSet,
    ModelState,
    NetworkDims,
    NumericError,
    PretrainResult,
    RunConfig,
    ShapeError,
    UsageError,
    adapt_continual,
    adapt_target,
    build_data,
    evaluate,
    gen_blobs,
    gen_two_moons,
    harmonic_mean,
    load_checkpoint,
    load_config,
    load_csv,
    merge_masks,
    neighbor_purity,
    pretrain_source,
    run_cli,
    run_gradchecks,
    save_checkpoint,
    save_csv,
    split,
    train_domain_classifier,
)

__version__ = "1.0.0"

__all__ = [
    "AdaptResult",
    "Banks",
    "Checkpoint",
    "ConfigError",
    "ContinualResult",
    "DataBundle",
    "Dataset",
    "DomainAttention",
    "DomainClassifier",
    "EpochRecord",
    "EvalResult",
    "FullConfig",
    "GradCheckResult",
    "IoError",
    "MaskSet",
    "ModelState",
    "NetworkDims",
    "NumericError",
    "PretrainResult",
    "RunConfig",
    "ShapeError",
    "UsageError",
    "adapt_continual",
    "adapt_target",
    "build_data",
    "evaluate",
    "gen_blobs",
    "gen_two_moons",
    "harmonic_mean",
    "load_checkpoint",
    "load_config",
    "load_csv",
    "merge_masks",
    "neighbor_purity",
    "pretrain_source",
    "run_cli",
    "run_gradchecks",
    "save_checkpoint",
    "save_csv",
    "split",
    "train_domain_classifier",
]
