"""Positive pairing and contrastive losses."""

from .losses import (
    ContrastiveConfig,
    LossOutput,
    bce_loss,
    combined_loss,
    infonce_loss,
    pecl_loss,
    supcon_loss,
    weighted_contrastive_loss,
)
from .pairing import (
    NeighborSet,
    SoftLabelSource,
    exact_match_positive_sets,
    knn_neighbors,
    label_similarity_matrix,
    soft_labels,
)

__all__ = [
    "ContrastiveConfig",
    "LossOutput",
    "NeighborSet",
    "SoftLabelSource",
    "bce_loss",
    "combined_loss",
    "exact_match_positive_sets",
    "infonce_loss",
    "knn_neighbors",
    "label_similarity_matrix",
    "pecl_loss",
    "soft_labels",
    "supcon_loss",
    "weighted_contrastive_loss",
]
