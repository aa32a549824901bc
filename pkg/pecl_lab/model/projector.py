"""
Trainable MLP projector with exact reverse-mode gradients.

Network, applied to the frozen embedding e = encoder(x):

    u = e A + c                (optional D -> D adapter, identity at init)
    z = u / ||u||              (the embedding fed to the contrastive loss)
    h_0 = z
    h_l = relu(h_{l-1} W_l + b_l)      l = 1 .. L-1 (hidden width H)
    y_hat = sigmoid(h_{L-1} W_L + b_L)

Weights are stored (fan_in, fan_out) and rows are samples.
"""

import copy
import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from ..core.numeric import EPS_NORM, SeededRng, as_matrix, sigmoid
from ..exceptions import (
    InvalidConfigError,
    MissingForwardCacheError,
    ShapeMismatchError,
    ZeroVectorError,
)
from .encoder import FrozenEncoder

logger = logging.getLogger(__name__)


class MlpProjector:
    """The trainable part of the predictor: optional adapter plus an L-layer MLP."""

    def __init__(
        self,
        input_dim: int,
        output_dim: int,
        n_layers: int = 3,
        hidden_width: int = 256,
        use_adapter: bool = True,
        seed: int = 0,
    ):
        if n_layers < 1:
            raise InvalidConfigError(f"n_layers must be >= 1, got {n_layers}")
        if min(input_dim, output_dim, hidden_width) < 1:
            raise InvalidConfigError("projector dimensions must be positive")
        self.input_dim = int(input_dim)
        self.output_dim = int(output_dim)
        self.n_layers = int(n_layers)
        self.hidden_width = int(hidden_width)
        self.use_adapter = bool(use_adapter)
        self.params: "OrderedDict[str, np.ndarray]" = OrderedDict()
        self._initialise(SeededRng(int(seed)).spawn(0x9E0))

    def _initialise(self, rng: SeededRng):
        if self.use_adapter:
            self.params["adapter.weight"] = np.eye(self.input_dim)
            self.params["adapter.bias"] = np.zeros(self.input_dim)
        dims = self.layer_dims()
        for l, (fan_in, fan_out) in enumerate(dims):
            # uniform He-style fan-in scaling
            limit = np.sqrt(6.0 / fan_in)
            self.params[f"layer{l}.weight"] = rng.uniform(-limit, limit, (fan_in, fan_out))
            self.params[f"layer{l}.bias"] = np.zeros(fan_out)

    def layer_dims(self) -> List[tuple]:
        widths = [self.input_dim] + [self.hidden_width] * (self.n_layers - 1) + [self.output_dim]
        return list(zip(widths[:-1], widths[1:]))

    def parameters(self) -> Dict[str, np.ndarray]:
        return self.params

    def set_parameters(self, params: Dict[str, np.ndarray]):
        for name, value in params.items():
            if name not in self.params:
                raise ShapeMismatchError(f"unknown parameter {name}")
            if np.shape(value) != self.params[name].shape:
                raise ShapeMismatchError(
                    f"{name}: expected {self.params[name].shape}, got {np.shape(value)}"
                )
            self.params[name] = np.array(value, dtype=np.float64)

    def copy(self) -> "MlpProjector":
        return copy.deepcopy(self)

    def config_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "output_dim": self.output_dim,
            "n_layers": self.n_layers,
            "hidden_width": self.hidden_width,
            "use_adapter": self.use_adapter,
        }


@dataclass
class ForwardPass:
    """Outputs of one forward pass plus the activations backward needs."""

    embeddings: np.ndarray
    predictions: np.ndarray
    cache: Optional[Dict[str, object]] = field(default=None, repr=False)

    def __iter__(self):
        yield self.embeddings
        yield self.predictions


def forward(encoder: FrozenEncoder, projector: MlpProjector, features) -> ForwardPass:
    """Embeddings z and predictions y_hat for a batch of feature rows."""
    encoded = encoder.encode(features)
    if encoded.shape[1] != projector.input_dim:
        raise ShapeMismatchError(
            f"projector expects {projector.input_dim}-dim embeddings, encoder gives {encoded.shape[1]}"
        )
    p = projector.params

    if projector.use_adapter:
        pre_norm = encoded @ p["adapter.weight"] + p["adapter.bias"]
        norms = np.linalg.norm(pre_norm, axis=1, keepdims=True)
        if np.any(norms <= EPS_NORM):
            raise ZeroVectorError("adapter produced a zero embedding")
        z = pre_norm / norms
    else:
        pre_norm, norms = None, None
        z = encoded

    inputs, pre_acts = [], []
    h = z
    for l in range(projector.n_layers):
        inputs.append(h)
        a = h @ p[f"layer{l}.weight"] + p[f"layer{l}.bias"]
        pre_acts.append(a)
        h = np.maximum(a, 0.0) if l < projector.n_layers - 1 else sigmoid(a)

    cache = {
        "encoded": encoded,
        "pre_norm": pre_norm,
        "norms": norms,
        "inputs": inputs,
        "pre_acts": pre_acts,
    }
    return ForwardPass(embeddings=z, predictions=h, cache=cache)


def backward(projector: MlpProjector, forward_pass: Optional[ForwardPass], loss_grads) -> Dict[str, np.ndarray]:
    """Parameter gradients of a loss given its gradients w.r.t. y_hat and z.

    ``loss_grads`` is a ``LossOutput``; ``grad_embeddings`` may be None when
    the loss has no contrastive term. Without an adapter there is no
    trainable path into z, so the embedding gradient is dropped.
    """
    if forward_pass is None or forward_pass.cache is None:
        raise MissingForwardCacheError("backward requires a cached forward pass")
    cache = forward_pass.cache
    p = projector.params
    y_hat = forward_pass.predictions

    grad_pred = loss_grads.grad_predictions
    if grad_pred is None:
        grad_pred = np.zeros_like(y_hat)
    if grad_pred.shape != y_hat.shape:
        raise ShapeMismatchError(f"prediction gradient {grad_pred.shape} vs outputs {y_hat.shape}")

    grads: Dict[str, np.ndarray] = OrderedDict()
    delta = grad_pred * y_hat * (1.0 - y_hat)
    for l in reversed(range(projector.n_layers)):
        h_in = cache["inputs"][l]
        grads[f"layer{l}.weight"] = h_in.T @ delta
        grads[f"layer{l}.bias"] = np.sum(delta, axis=0)
        delta = delta @ p[f"layer{l}.weight"].T
        if l > 0:
            delta = delta * (cache["pre_acts"][l - 1] > 0.0)

    if projector.use_adapter:
        grad_z = delta
        if loss_grads.grad_embeddings is not None:
            if loss_grads.grad_embeddings.shape != grad_z.shape:
                raise ShapeMismatchError(
                    f"embedding gradient {loss_grads.grad_embeddings.shape} vs {grad_z.shape}"
                )
            grad_z = grad_z + loss_grads.grad_embeddings
        z = forward_pass.embeddings
        # d(u/||u||)/du applied to grad_z
        radial = np.sum(z * grad_z, axis=1, keepdims=True)
        grad_u = (grad_z - z * radial) / cache["norms"]
        grads["adapter.weight"] = cache["encoded"].T @ grad_u
        grads["adapter.bias"] = np.sum(grad_u, axis=0)

    return OrderedDict((name, grads[name]) for name in p)


def predict(encoder: FrozenEncoder, projector: MlpProjector, features) -> np.ndarray:
    return forward(encoder, projector, features).predictions
