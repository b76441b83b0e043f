"""Losses, the training loop, evaluation, and the RANSAC baseline."""

from .evaluate import (
    evaluate,
    identity_estimator,
    model_estimator,
    oracle_estimator,
    write_metrics,
)
from .loop import TrainConfig, train
from .losses import (
    LossWeights,
    bce_value,
    homography_loss,
    mask_loss,
    residual_displacement_targets,
    total_loss,
)
from .ransac import ransac_baseline, ransac_estimator

__all__ = [
    "LossWeights",
    "homography_loss",
    "mask_loss",
    "total_loss",
    "bce_value",
    "residual_displacement_targets",
    "TrainConfig",
    "train",
    "evaluate",
    "write_metrics",
    "model_estimator",
    "identity_estimator",
    "oracle_estimator",
    "ransac_baseline",
    "ransac_estimator",
]
