"""Metric-learning anomaly detection for presentation attack detection."""

from .core import Label, Sample, Triplet, normalize, pairwise_distances, squared_distance
from .losses import (
    ClassCenters,
    LossConfig,
    LossOutput,
    SoftmaxSign,
    anomaly_loss,
    center_loss,
    contrastive_loss,
    finite_difference_check,
    metric_softmax_loss,
    triplet_focal_loss,
    triplet_loss,
    update_centers,
)

__version__ = "0.1.0"

__all__ = [
    "ClassCenters",
    "Label",
    "LossConfig",
    "LossOutput",
    "Sample",
    "SoftmaxSign",
    "Triplet",
    "anomaly_loss",
    "center_loss",
    "contrastive_loss",
    "finite_difference_check",
    "metric_softmax_loss",
    "normalize",
    "pairwise_distances",
    "squared_distance",
    "triplet_focal_loss",
    "triplet_loss",
    "update_centers",
]
