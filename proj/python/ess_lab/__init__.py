"""Python bindings for the ess_lab contrastive learning toolkit."""

from ._ess import (
    ConfigError,
    Pose,
    SimilarityThreshold,
    WeightParams,
    cluster_metrics,
    delta_pos,
    delta_rot,
    evaluate,
    find_positives,
    generate,
    generate_plan,
    gradcheck,
    is_positive,
    loss_baseline,
    loss_mb,
    loss_mw,
    pair_weight,
    render,
    resolve_config,
    room_label,
    rotation_error,
    train,
)

__all__ = [
    "ConfigError",
    "Pose",
    "SimilarityThreshold",
    "WeightParams",
    "cluster_metrics",
    "delta_pos",
    "delta_rot",
    "evaluate",
    "find_positives",
    "generate",
    "generate_plan",
    "gradcheck",
    "is_positive",
    "loss_baseline",
    "loss_mb",
    "loss_mw",
    "pair_weight",
    "render",
    "resolve_config",
    "room_label",
    "rotation_error",
    "train",
]
