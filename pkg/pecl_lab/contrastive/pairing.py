"""
Positive-pair structure over label similarity.

For a batch of species-presence vectors this module computes the label
cosine-similarity matrix, each anchor's k nearest neighbours by that
similarity (ties broken by ascending batch index) and the soft similarity
labels s_ij that weight each positive pair.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence

import numpy as np

from ..core.numeric import as_matrix, cosine_similarity_matrix
from ..exceptions import (
    EmptyBatchError,
    LengthMismatchError,
    MissingEmbeddingsError,
    ShapeMismatchError,
)

logger = logging.getLogger(__name__)


class SoftLabelSource(str, Enum):
    """Where the soft label s_ij of a positive pair comes from."""

    LABEL_COSINE_SQUARED = "label_cosine_squared"
    LABEL_COSINE = "label_cosine"
    CONSTANT_ONE = "constant_one"
    EMBEDDING_COSINE = "embedding_cosine"


@dataclass(frozen=True)
class NeighborSet:
    """The k nearest neighbours of one anchor, best first."""

    anchor: int
    neighbors: tuple
    similarities: tuple

    def __len__(self):
        return len(self.neighbors)

    def __contains__(self, index):
        return index in self.neighbors


def label_matrix(labels: Sequence) -> np.ndarray:
    """Stack species vectors into an N x S matrix, checking equal lengths."""
    if isinstance(labels, np.ndarray) and labels.ndim == 2:
        return as_matrix(labels, "labels")
    lengths = {len(y) for y in labels}
    if len(lengths) > 1:
        raise LengthMismatchError(f"species vectors have differing lengths {sorted(lengths)}")
    return as_matrix([list(y) for y in labels], "labels")


def label_similarity_matrix(labels: Sequence) -> np.ndarray:
    """M[i][j] = cosine_similarity(y_i, y_j); all-zero vectors give 0."""
    y = label_matrix(labels)
    if y.shape[0] < 2:
        raise EmptyBatchError(f"need at least 2 labels, got {y.shape[0]}")
    sim = cosine_similarity_matrix(y)
    # exact symmetry regardless of matmul rounding
    return 0.5 * (sim + sim.T)


def knn_neighbors(sim_matrix, k: int) -> List[NeighborSet]:
    """For every anchor, the k indices j != i with the largest similarity.

    ``k`` is clamped to ``batch_size - 1``. Equal similarities are ordered
    by ascending index.
    """
    sim = np.asarray(sim_matrix, dtype=np.float64)
    if sim.ndim != 2 or sim.shape[0] != sim.shape[1]:
        raise ShapeMismatchError(f"similarity matrix must be square, got {sim.shape}")
    n = sim.shape[0]
    if n < 2:
        raise EmptyBatchError(f"need a batch of at least 2, got {n}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    k_eff = min(int(k), n - 1)
    if k_eff < k:
        logger.debug(f"k={k} clamped to {k_eff} for batch of {n}")

    indices = np.arange(n)
    result = []
    for i in range(n):
        candidates = indices[indices != i]
        row = sim[i, candidates]
        # lexsort: last key is primary
        order = np.lexsort((candidates, -row))[:k_eff]
        chosen = candidates[order]
        result.append(
            NeighborSet(
                anchor=i,
                neighbors=tuple(int(j) for j in chosen),
                similarities=tuple(float(s) for s in sim[i, chosen]),
            )
        )
    return result


def soft_labels(
    sim_matrix,
    source: SoftLabelSource = SoftLabelSource.LABEL_COSINE_SQUARED,
    embeddings: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Soft similarity labels in [0, 1]; the diagonal is set to 0 and unused."""
    source = SoftLabelSource(source)
    sim = np.asarray(sim_matrix, dtype=np.float64)
    n = sim.shape[0]

    if source is SoftLabelSource.LABEL_COSINE_SQUARED:
        s = np.clip(sim, 0.0, 1.0) ** 2
    elif source is SoftLabelSource.LABEL_COSINE:
        s = np.clip(sim, 0.0, 1.0)
    elif source is SoftLabelSource.CONSTANT_ONE:
        s = np.ones((n, n))
    else:
        if embeddings is None:
            raise MissingEmbeddingsError("embedding_cosine soft labels need embeddings")
        z = as_matrix(embeddings, "embeddings")
        if z.shape[0] != n:
            raise ShapeMismatchError(f"{z.shape[0]} embeddings for a batch of {n}")
        s = np.clip(cosine_similarity_matrix(z), 0.0, 1.0)
        s = 0.5 * (s + s.T)

    s = np.array(s, dtype=np.float64)
    np.fill_diagonal(s, 0.0)
    return s


def neighbor_weight_matrix(neighbor_sets: List[NeighborSet], soft: np.ndarray) -> np.ndarray:
    """W[i][j] = s_ij / |N_i| for j in N_i, else 0."""
    n = len(neighbor_sets)
    weights = np.zeros((n, n))
    for ns in neighbor_sets:
        if not ns.neighbors:
            continue
        cols = list(ns.neighbors)
        weights[ns.anchor, cols] = soft[ns.anchor, cols] / len(cols)
    return weights


def exact_match_positive_sets(labels: Sequence) -> List[tuple]:
    """Conventional SupCon positives: every other sample with an identical label."""
    y = label_matrix(labels)
    n = y.shape[0]
    sets = []
    for i in range(n):
        same = np.all(y == y[i], axis=1)
        same[i] = False
        sets.append(tuple(int(j) for j in np.flatnonzero(same)))
    return sets


def similarity_histogram(labels: Sequence, bins: int = 20) -> dict:
    """Histogram of off-diagonal sim and sim^2 over all label pairs."""
    sim = label_similarity_matrix(labels)
    upper = sim[np.triu_indices(sim.shape[0], k=1)]
    upper = np.clip(upper, 0.0, 1.0)
    edges = np.linspace(0.0, 1.0, bins + 1)
    counts_sim, _ = np.histogram(upper, bins=edges)
    counts_sq, _ = np.histogram(upper**2, bins=edges)
    return {
        "bin_lo": edges[:-1],
        "bin_hi": edges[1:],
        "count_cosine": counts_sim,
        "count_cosine_squared": counts_sq,
        "mean_cosine": float(upper.mean()) if upper.size else 0.0,
        "mean_cosine_squared": float((upper**2).mean()) if upper.size else 0.0,
    }
