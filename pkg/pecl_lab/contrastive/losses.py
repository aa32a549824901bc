"""
Prediction and contrastive losses with analytic gradients.

All three contrastive losses (InfoNCE, SupCon, PECL) reduce to one weighted
cross-entropy over the in-batch softmax

    w_ij = exp(z_i . z_j / tau) / sum_{k != i} exp(z_i . z_k / tau)
    L    = -(1/N) sum_i sum_j W_ij log w_ij

and differ only in the weight matrix W:

    InfoNCE  W_ij = 1             for j = p_i
    SupCon   W_ij = 1 / |P_i|     for j in P_i
    PECL     W_ij = s_ij / |N_i|  for j in N_i (k nearest neighbours by label similarity)

The positive sets and soft labels are constants of the batch, so gradients
flow only through the embeddings (and through the predictions for BCE).
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field

from ..core.numeric import as_matrix
from ..exceptions import (
    EmptyBatchError,
    EmptyPositiveSetError,
    InvalidPositiveIndexError,
    NonPositiveTemperatureError,
    ShapeMismatchError,
)
from .pairing import (
    SoftLabelSource,
    knn_neighbors,
    label_matrix,
    label_similarity_matrix,
    neighbor_weight_matrix,
    soft_labels,
)

logger = logging.getLogger(__name__)

PREDICTION_EPS = 1e-7


class ContrastiveConfig(BaseModel):
    """Hyperparameters of the contrastive regulariser."""

    k: int = Field(default=5, ge=1)
    tau: float = Field(default=0.5, gt=0)
    alpha: float = Field(default=0.1, ge=0)
    soft_label_source: SoftLabelSource = SoftLabelSource.LABEL_COSINE_SQUARED


@dataclass
class LossOutput:
    """Loss value plus per-sample gradients (rows align with the batch)."""

    value: float
    grad_embeddings: Optional[np.ndarray] = None
    grad_predictions: Optional[np.ndarray] = None
    per_anchor: Optional[np.ndarray] = None
    components: Dict[str, float] = field(default_factory=dict)


def bce_loss(labels, preds, eps: float = PREDICTION_EPS) -> LossOutput:
    """Mean binary cross-entropy over all N x S entries.

    Predictions are clamped to [eps, 1 - eps] before taking logs; the
    gradient is zero where the clamp is active.
    """
    y = label_matrix(labels)
    p = as_matrix(preds, "preds")
    if y.shape != p.shape:
        raise ShapeMismatchError(f"labels {y.shape} and predictions {p.shape} differ")
    n, s = y.shape
    count = n * s
    clamped = (p < eps) | (p > 1.0 - eps)
    p = np.clip(p, eps, 1.0 - eps)

    terms = y * np.log(p) + (1.0 - y) * np.log(1.0 - p)
    value = -float(np.sum(terms)) / count
    grad = np.where(clamped, 0.0, (p - y) / (count * p * (1.0 - p)))
    return LossOutput(value=max(value, 0.0), grad_predictions=grad, components={"bce": max(value, 0.0)})


def weighted_contrastive_loss(embeddings, weights, tau: float) -> LossOutput:
    """Shared core: ``-(1/N) sum_ij W_ij log w_ij`` and its gradient in z."""
    if not tau > 0:
        raise NonPositiveTemperatureError(f"temperature must be > 0, got {tau}")
    z = as_matrix(embeddings, "embeddings")
    n = z.shape[0]
    if n < 2:
        raise EmptyBatchError(f"contrastive loss needs a batch of at least 2, got {n}")
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (n, n):
        raise ShapeMismatchError(f"weight matrix {w.shape} for batch of {n}")

    logits = (z @ z.T) / tau
    off_diag = ~np.eye(n, dtype=bool)
    masked = np.where(off_diag, logits, -np.inf)
    row_max = np.max(masked, axis=1, keepdims=True)
    shifted = np.where(off_diag, logits - row_max, 0.0)
    exp = np.where(off_diag, np.exp(shifted), 0.0)
    row_sum = np.sum(exp, axis=1, keepdims=True)
    log_w = np.where(off_diag, np.minimum(shifted - np.log(row_sum), 0.0), 0.0)
    probs = exp / row_sum

    per_anchor = -np.sum(w * log_w, axis=1)
    value = float(np.sum(per_anchor)) / n

    mass = np.sum(w, axis=1, keepdims=True)
    grad_logits = -(w - mass * probs) / n
    grad_logits[~off_diag] = 0.0
    grad_z = (grad_logits + grad_logits.T) @ z / tau

    return LossOutput(
        value=max(value, 0.0),
        grad_embeddings=grad_z,
        per_anchor=per_anchor,
    )


def infonce_loss(embeddings, positives: Sequence[int], tau: float) -> LossOutput:
    """Contrastive loss with exactly one positive ``positives[i]`` per anchor."""
    z = as_matrix(embeddings, "embeddings")
    n = z.shape[0]
    if len(positives) != n:
        raise ShapeMismatchError(f"{len(positives)} positives for batch of {n}")
    weights = np.zeros((n, n))
    for i, p in enumerate(positives):
        p = int(p)
        if p == i or not 0 <= p < n:
            raise InvalidPositiveIndexError(f"anchor {i} has invalid positive {p}")
        weights[i, p] = 1.0
    out = weighted_contrastive_loss(z, weights, tau)
    out.components = {"infonce": out.value}
    return out


def _positive_weights(positive_sets: Sequence[Sequence[int]], n: int) -> np.ndarray:
    if len(positive_sets) != n:
        raise ShapeMismatchError(f"{len(positive_sets)} positive sets for batch of {n}")
    weights = np.zeros((n, n))
    for i, members in enumerate(positive_sets):
        unique = sorted({int(j) for j in members})
        if not unique:
            raise EmptyPositiveSetError(f"anchor {i} has no positives")
        if i in unique:
            raise EmptyPositiveSetError(f"anchor {i} is listed among its own positives")
        if unique[0] < 0 or unique[-1] >= n:
            raise InvalidPositiveIndexError(f"anchor {i} has out-of-range positives {unique}")
        weights[i, unique] = 1.0 / len(unique)
    return weights


def supcon_loss(embeddings, positive_sets: Sequence[Sequence[int]], tau: float) -> LossOutput:
    """Supervised contrastive loss averaging over each anchor's positive set."""
    z = as_matrix(embeddings, "embeddings")
    weights = _positive_weights(positive_sets, z.shape[0])
    out = weighted_contrastive_loss(z, weights, tau)
    out.components = {"supcon": out.value}
    return out


def pecl_weights(labels, config: ContrastiveConfig, embeddings=None) -> np.ndarray:
    """Weight matrix of PECL for one batch: kNN over label similarity, soft labels."""
    sim = label_similarity_matrix(labels)
    neighbor_sets = knn_neighbors(sim, config.k)
    soft = soft_labels(sim, config.soft_label_source, embeddings)
    return neighbor_weight_matrix(neighbor_sets, soft)


def pecl_loss(embeddings, labels, config: ContrastiveConfig) -> LossOutput:
    """Paired Embeddings Contrastive Loss for one batch.

    Embedding-derived soft labels are treated as constants (no gradient
    flows through s_ij).
    """
    z = as_matrix(embeddings, "embeddings")
    y = label_matrix(labels)
    if z.shape[0] < 2:
        raise EmptyBatchError(f"PECL needs a batch of at least 2, got {z.shape[0]}")
    if y.shape[0] != z.shape[0]:
        raise ShapeMismatchError(f"{y.shape[0]} labels for {z.shape[0]} embeddings")
    weights = pecl_weights(y, config, z)
    out = weighted_contrastive_loss(z, weights, config.tau)
    out.components = {"pecl": out.value}
    return out


def combined_loss(labels, preds, embeddings, config: ContrastiveConfig) -> LossOutput:
    """``L_BCE + alpha * L_PECL``; the PECL term is skipped for alpha = 0 or batches < 2."""
    bce = bce_loss(labels, preds)
    z = as_matrix(embeddings, "embeddings")
    if z.shape[0] != bce.grad_predictions.shape[0]:
        raise ShapeMismatchError(
            f"{z.shape[0]} embeddings for {bce.grad_predictions.shape[0]} predictions"
        )

    grad_z = np.zeros_like(z)
    pecl_value = 0.0
    if config.alpha > 0 and z.shape[0] >= 2:
        pecl = pecl_loss(z, labels, config)
        pecl_value = pecl.value
        grad_z = config.alpha * pecl.grad_embeddings

    return LossOutput(
        value=bce.value + config.alpha * pecl_value,
        grad_embeddings=grad_z,
        grad_predictions=bce.grad_predictions,
        components={"bce": bce.value, "pecl": pecl_value},
    )
