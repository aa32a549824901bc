"""Dense numeric primitives."""

from .numeric import (
    EPS_NORM,
    RNG_ALGORITHM,
    SeededRng,
    as_matrix,
    as_vector,
    cosine_similarity,
    cosine_similarity_matrix,
    finite_diff_grad,
    gradient_error,
    gradients_close,
    l2_normalize,
    l2_normalize_rows,
    log_softmax,
    sigmoid,
    stable_softmax,
)

__all__ = [
    "EPS_NORM",
    "RNG_ALGORITHM",
    "SeededRng",
    "as_matrix",
    "as_vector",
    "cosine_similarity",
    "cosine_similarity_matrix",
    "finite_diff_grad",
    "gradient_error",
    "gradients_close",
    "l2_normalize",
    "l2_normalize_rows",
    "log_softmax",
    "sigmoid",
    "stable_softmax",
]
