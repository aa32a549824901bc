"""Frozen encoder, trainable projector, optimiser, trainer and baseline."""

from .baseline import MeanRateModel, mean_rate_fit, mean_rate_predict
from .encoder import EncoderKind, FrozenEncoder
from .optim import AdamState, adam_step
from .projector import ForwardPass, MlpProjector, backward, forward, predict

__all__ = [
    "AdamState",
    "EncoderKind",
    "ForwardPass",
    "FrozenEncoder",
    "MeanRateModel",
    "MlpProjector",
    "adam_step",
    "backward",
    "forward",
    "mean_rate_fit",
    "mean_rate_predict",
    "predict",
]
