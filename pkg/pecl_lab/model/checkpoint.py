"""
Versioned JSON checkpoints.

Layout:
    {
      "format": "pecl-lab-checkpoint",
      "version": 1,
      "encoder": {kind, input_dim, output_dim, seed},
      "projector": {input_dim, output_dim, n_layers, hidden_width, use_adapter},
      "parameters": {name: {"shape": [...], "values": [row-major floats]}},
      "optimizer": AdamState.to_dict() or null,
      "rng": SeededRng.get_state() or null,
      "report": TrainReport or null
    }

Floats are written with ``repr`` precision by the json module, so a
load/save cycle reproduces every weight exactly.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from ..exceptions import DataError
from .encoder import FrozenEncoder
from .optim import AdamState
from .projector import MlpProjector

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "pecl-lab-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class Checkpoint:
    encoder: FrozenEncoder
    projector: MlpProjector
    optimizer: Optional[AdamState] = None
    rng_state: Optional[dict] = None
    report: Optional[dict] = None


def save_checkpoint(
    path,
    encoder: FrozenEncoder,
    projector: MlpProjector,
    optimizer: Optional[AdamState] = None,
    rng_state: Optional[dict] = None,
    report=None,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "encoder": encoder.to_dict(),
        "projector": projector.config_dict(),
        "parameters": {
            name: {"shape": list(value.shape), "values": value.ravel().tolist()}
            for name, value in projector.parameters().items()
        },
        "optimizer": optimizer.to_dict() if optimizer is not None else None,
        "rng": rng_state,
        "report": report.model_dump(mode="json") if hasattr(report, "model_dump") else report,
    }
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
    logger.debug(f"Checkpoint written to {path}")
    return path


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    try:
        with open(path, "r") as f:
            payload = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"cannot read checkpoint {path}: {e}") from e

    if payload.get("format") != CHECKPOINT_FORMAT:
        raise DataError(f"{path} is not a pecl-lab checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise DataError(f"unsupported checkpoint version {payload.get('version')}")

    encoder = FrozenEncoder.from_dict(payload["encoder"])
    projector = MlpProjector(**payload["projector"])
    projector.set_parameters(
        {
            name: np.array(entry["values"], dtype=np.float64).reshape(entry["shape"])
            for name, entry in payload["parameters"].items()
        }
    )
    optimizer = AdamState.from_dict(payload["optimizer"]) if payload.get("optimizer") else None
    return Checkpoint(
        encoder=encoder,
        projector=projector,
        optimizer=optimizer,
        rng_state=payload.get("rng"),
        report=payload.get("report"),
    )
