"""Adam optimiser over named parameter arrays."""

from collections import OrderedDict
from dataclasses import dataclass, field, replace
from typing import Dict

import numpy as np

from ..exceptions import ShapeMismatchError


@dataclass
class AdamState:
    """Moment accumulators and step count for Adam."""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def copy(self) -> "AdamState":
        return replace(
            self,
            m={k: a.copy() for k, a in self.m.items()},
            v={k: a.copy() for k, a in self.v.items()},
        )

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "step": self.step,
            "m": {k: {"shape": list(a.shape), "values": a.ravel().tolist()} for k, a in self.m.items()},
            "v": {k: {"shape": list(a.shape), "values": a.ravel().tolist()} for k, a in self.v.items()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AdamState":
        def _arrays(section):
            return {
                k: np.array(entry["values"], dtype=np.float64).reshape(entry["shape"])
                for k, entry in section.items()
            }

        return cls(
            learning_rate=data["learning_rate"],
            beta1=data["beta1"],
            beta2=data["beta2"],
            eps=data["eps"],
            step=data["step"],
            m=_arrays(data["m"]),
            v=_arrays(data["v"]),
        )


def adam_step(
    state: AdamState, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]
) -> Dict[str, np.ndarray]:
    """One bias-corrected Adam update; returns new parameter arrays.

    ``state`` is advanced in place.
    """
    for name, value in params.items():
        if name not in grads:
            raise ShapeMismatchError(f"missing gradient for {name}")
        if grads[name].shape != value.shape:
            raise ShapeMismatchError(
                f"{name}: gradient {grads[name].shape} vs parameter {value.shape}"
            )

    state.step += 1
    t = state.step
    correction1 = 1.0 - state.beta1**t
    correction2 = 1.0 - state.beta2**t

    updated = OrderedDict()
    for name, value in params.items():
        g = grads[name]
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(value)
            v = np.zeros_like(value)
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        state.m[name] = m
        state.v[name] = v
        m_hat = m / correction1
        v_hat = v / correction2
        updated[name] = value - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
    return updated
