"""
Deterministic dense numerics shared by every other module.

Vectors and matrices are plain float64 numpy arrays. ``SeededRng`` wraps a
numpy ``Generator`` driven by the Philox4x64-10 counter-based bit generator,
whose stream is specified bit-for-bit and therefore identical on every
platform for the same seed.

Usage:
    rng = SeededRng(0)
    z = l2_normalize(rng.normal(size=8))
    w = stable_softmax(np.array([1.0, 0.0]), tau=0.5)
"""

import logging
from typing import Any, Callable, Dict, Iterable, Optional

import numpy as np

from ..exceptions import (
    NonFiniteValueError,
    NonPositiveTemperatureError,
    ShapeMismatchError,
    ZeroVectorError,
)

logger = logging.getLogger(__name__)

EPS_NORM = 1e-12
DEFAULT_FD_STEP = 1e-6
RNG_ALGORITHM = "Philox4x64-10"


def as_vector(values: Iterable[float], name: str = "vector") -> np.ndarray:
    """Convert to a 1-D float64 array, rejecting NaN/Inf and empty input."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ShapeMismatchError(f"{name} must be a non-empty 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise NonFiniteValueError(f"{name} contains NaN or Inf")
    return v


def as_matrix(values: Any, name: str = "matrix") -> np.ndarray:
    """Convert to a 2-D float64 array with at least one row and column."""
    m = np.asarray(values, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] == 0 or m.shape[1] == 0:
        raise ShapeMismatchError(f"{name} must be a non-empty 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NonFiniteValueError(f"{name} contains NaN or Inf")
    return m


class SeededRng:
    """Seeded random stream with a fixed, documented algorithm.

    Equal seeds produce bitwise-equal streams. ``spawn`` derives an
    independent child stream from a (seed, key) pair so that seeds and
    search candidates never share state.
    """

    algorithm = RNG_ALGORITHM

    def __init__(self, seed: int):
        if seed < 0 or seed >= 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self._generator = np.random.Generator(np.random.Philox(self.seed))

    @property
    def generator(self) -> np.random.Generator:
        return self._generator

    def spawn(self, key: int) -> "SeededRng":
        """Derive a child stream keyed on ``key``; deterministic in (seed, key)."""
        child_seed = np.random.SeedSequence([self.seed, int(key)]).generate_state(
            1, dtype=np.uint64
        )[0]
        return SeededRng(int(child_seed))

    def random(self, size=None):
        return self._generator.random(size)

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None):
        return self._generator.uniform(low, high, size)

    def normal(self, loc: float = 0.0, scale: float = 1.0, size=None):
        return self._generator.normal(loc, scale, size)

    def integers(self, low: int, high: Optional[int] = None, size=None):
        """Integers in [low, high)."""
        return self._generator.integers(low, high, size=size)

    def choice(self, values, size=None):
        return self._generator.choice(values, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._generator.permutation(n)

    def dirichlet(self, alpha, size=None):
        return self._generator.dirichlet(alpha, size)

    def get_state(self) -> Dict[str, Any]:
        """JSON-serialisable snapshot of the bit generator state."""
        state = self._generator.bit_generator.state
        return {"seed": self.seed, "bit_generator": _to_jsonable(state)}

    @classmethod
    def from_state(cls, snapshot: Dict[str, Any]) -> "SeededRng":
        rng = cls(int(snapshot["seed"]))
        raw = snapshot["bit_generator"]
        state = {
            "bit_generator": raw["bit_generator"],
            "state": {
                "counter": np.array(raw["state"]["counter"], dtype=np.uint64),
                "key": np.array(raw["state"]["key"], dtype=np.uint64),
            },
            "buffer": np.array(raw["buffer"], dtype=np.uint64),
            "buffer_pos": int(raw["buffer_pos"]),
            "has_uint32": int(raw["has_uint32"]),
            "uinteger": int(raw["uinteger"]),
        }
        rng._generator.bit_generator.state = state
        return rng


def _to_jsonable(value):
    if isinstance(value, dict):
        return {k: _to_jsonable(v) for k, v in value.items()}
    if isinstance(value, np.ndarray):
        return [int(x) for x in value.tolist()]
    if isinstance(value, np.integer):
        return int(value)
    return value


def l2_normalize(v, eps: float = EPS_NORM) -> np.ndarray:
    """Return ``v / ||v||``; raises ZeroVectorError when ``||v|| <= eps``."""
    v = as_vector(v)
    norm = float(np.linalg.norm(v))
    if norm <= eps:
        raise ZeroVectorError(f"cannot normalise vector with norm {norm:.3e}")
    return v / norm


def l2_normalize_rows(m, eps: float = EPS_NORM) -> np.ndarray:
    """Row-wise ``l2_normalize``; raises ZeroVectorError on any degenerate row."""
    m = as_matrix(m)
    norms = np.linalg.norm(m, axis=1)
    bad = np.flatnonzero(norms <= eps)
    if bad.size:
        raise ZeroVectorError(f"rows {bad.tolist()} have norm <= {eps}")
    return m / norms[:, None]


def cosine_similarity(a, b) -> float:
    """Cosine similarity clamped to [-1, 1]; 0 when either vector is all-zero."""
    a = as_vector(a, "a")
    b = as_vector(b, "b")
    if a.shape != b.shape:
        raise ShapeMismatchError(f"length mismatch: {a.size} vs {b.size}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def cosine_similarity_matrix(rows) -> np.ndarray:
    """Pairwise cosine similarity of the rows of a matrix (zero rows give 0)."""
    m = as_matrix(rows)
    norms = np.linalg.norm(m, axis=1)
    safe = np.where(norms > 0.0, norms, 1.0)
    unit = m / safe[:, None]
    sim = unit @ unit.T
    zero = norms == 0.0
    sim[zero, :] = 0.0
    sim[:, zero] = 0.0
    np.fill_diagonal(sim, np.where(zero, 0.0, 1.0))
    return np.clip(sim, -1.0, 1.0)


def _check_tau(tau: float):
    if not tau > 0:
        raise NonPositiveTemperatureError(f"temperature must be > 0, got {tau}")


def stable_softmax(scores, tau: float) -> np.ndarray:
    """Softmax of ``scores / tau`` computed with a max shift."""
    _check_tau(tau)
    s = as_vector(scores, "scores") / tau
    e = np.exp(s - np.max(s))
    return e / np.sum(e)


def log_softmax(scores, tau: float) -> np.ndarray:
    """Log of ``stable_softmax``; entries are <= 0."""
    _check_tau(tau)
    s = as_vector(scores, "scores") / tau
    shifted = s - np.max(s)
    return np.minimum(shifted - np.log(np.sum(np.exp(shifted))), 0.0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def finite_diff_grad(
    f: Callable[[np.ndarray], float], x, h: float = DEFAULT_FD_STEP
) -> np.ndarray:
    """Central-difference gradient of a scalar function, any array shape."""
    x = np.array(x, dtype=np.float64, copy=True)
    grad = np.zeros_like(x)
    flat_x = x.reshape(-1)
    flat_g = grad.reshape(-1)
    for m in range(flat_x.size):
        original = flat_x[m]
        flat_x[m] = original + h
        f_plus = float(f(x))
        flat_x[m] = original - h
        f_minus = float(f(x))
        flat_x[m] = original
        flat_g[m] = (f_plus - f_minus) / (2.0 * h)
    return grad


def gradient_error(analytic, numeric, atol: float = 1e-8) -> float:
    """Largest elementwise relative error with an absolute floor."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.shape != n.shape:
        raise ShapeMismatchError(f"gradient shapes differ: {a.shape} vs {n.shape}")
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), atol)
    return float(np.max(np.abs(a - n) / denom))


def gradients_close(analytic, numeric, rtol: float = 1e-5, atol: float = 1e-8) -> bool:
    """True when every entry satisfies ``|a - n| <= atol + rtol * max(|a|, |n|)``."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.shape != n.shape:
        raise ShapeMismatchError(f"gradient shapes differ: {a.shape} vs {n.shape}")
    bound = atol + rtol * np.maximum(np.abs(a), np.abs(n))
    return bool(np.all(np.abs(a - n) <= bound))
