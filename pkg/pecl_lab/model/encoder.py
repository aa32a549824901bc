"""Frozen feature extractors standing in for a pretrained backbone."""

import logging
from enum import Enum
from typing import Optional

import numpy as np

from ..core.numeric import SeededRng, as_matrix, l2_normalize_rows
from ..exceptions import InvalidConfigError, ShapeMismatchError

logger = logging.getLogger(__name__)


class EncoderKind(str, Enum):
    IDENTITY = "identity"
    RANDOM_PROJECTION = "random_projection"


class FrozenEncoder:
    """Maps raw feature rows to l2-normalised embeddings; never trained.

    ``identity`` passes precomputed features through (output_dim equals the
    input dimension). ``random_projection`` applies a fixed seeded linear map
    followed by tanh. Parameters are read-only arrays.
    """

    def __init__(
        self,
        kind: EncoderKind,
        input_dim: int,
        output_dim: Optional[int] = None,
        seed: int = 0,
    ):
        self.kind = EncoderKind(kind)
        self.input_dim = int(input_dim)
        self.seed = int(seed)
        if self.input_dim < 1:
            raise InvalidConfigError(f"input_dim must be >= 1, got {input_dim}")

        if self.kind is EncoderKind.IDENTITY:
            if output_dim is not None and output_dim != input_dim:
                logger.warning(
                    f"identity encoder ignores output_dim={output_dim}; using {input_dim}"
                )
            self.output_dim = self.input_dim
            self.weight = None
            self.bias = None
        else:
            self.output_dim = int(output_dim or 256)
            if self.output_dim < 1:
                raise InvalidConfigError(f"output_dim must be >= 1, got {output_dim}")
            rng = SeededRng(self.seed).spawn(0xE1C0DE)
            weight = rng.normal(0.0, 1.0 / np.sqrt(self.input_dim), (self.input_dim, self.output_dim))
            bias = rng.normal(0.0, 0.1, self.output_dim)
            weight.flags.writeable = False
            bias.flags.writeable = False
            self.weight = weight
            self.bias = bias

    def encode(self, features) -> np.ndarray:
        x = as_matrix(features, "features")
        if x.shape[1] != self.input_dim:
            raise ShapeMismatchError(
                f"encoder expects {self.input_dim} features per row, got {x.shape[1]}"
            )
        if self.kind is EncoderKind.IDENTITY:
            return l2_normalize_rows(x)
        return l2_normalize_rows(np.tanh(x @ self.weight + self.bias))

    __call__ = encode

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "input_dim": self.input_dim,
            "output_dim": self.output_dim,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FrozenEncoder":
        return cls(
            kind=data["kind"],
            input_dim=data["input_dim"],
            output_dim=data["output_dim"],
            seed=data["seed"],
        )
