"""Configuration management for pecl-lab."""

import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple

import yaml
from pydantic import BaseModel, Field, ValidationError, field_validator

from ..contrastive.losses import ContrastiveConfig
from ..contrastive.pairing import SoftLabelSource
from ..exceptions import ConfigError
from .app_dirs import app_dirs

logger = logging.getLogger(__name__)

DEFAULTS_FILE = Path(__file__).parent / "defaults" / "settings.yaml"
SEED_ENV_VAR = "PECL_LAB_SEED"


def default_seed(fallback: int = 0) -> int:
    """Seed from PECL_LAB_SEED, or ``fallback``."""
    raw = os.getenv(SEED_ENV_VAR)
    if raw is None or raw == "":
        return fallback
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {raw!r}")


class PathsConfig(BaseModel):
    """Input and output locations."""

    observations: Optional[str] = None
    locations: Optional[str] = None
    labels: Optional[str] = None
    features: Optional[str] = None
    splits: Optional[str] = None
    output_dir: str = "runs"


class ModelConfig(BaseModel):
    """Frozen encoder and trainable projector shape."""

    encoder: Literal["identity", "random_projection"] = "identity"
    embedding_dim: int = Field(default=256, ge=1)
    n_layers: int = Field(default=3, ge=1)
    hidden_width: int = Field(default=256, ge=1)
    use_adapter: bool = True
    raster_shape: Optional[Tuple[int, int, int]] = None
    crop_to: Tuple[int, int] = (224, 224)


class LossConfig(ContrastiveConfig):
    """Contrastive regulariser settings (k, tau, alpha, soft-label source)."""


class TrainingConfig(BaseModel):
    """Optimisation protocol."""

    learning_rate: float = Field(default=1e-3, gt=0)
    batch_size: int = Field(default=64, ge=1)
    epochs: int = Field(default=50, ge=0)
    patience: int = Field(default=10, ge=0)
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2])
    selection_metric: Literal["combined", "bce"] = "combined"
    workers: int = Field(default=1, ge=1)

    @field_validator("seeds")
    @classmethod
    def _seeds_nonempty(cls, value):
        if not value:
            raise ValueError("seeds list must not be empty")
        return value


class SplitConfig(BaseModel):
    """Spatial clustering and split fractions."""

    eps_metres: float = Field(default=4000.0, gt=0)
    min_pts: int = Field(default=2, ge=1)
    fractions: Tuple[float, float, float] = (0.70, 0.15, 0.15)
    seed: int = 0

    @field_validator("fractions")
    @classmethod
    def _fractions_sum_to_one(cls, value):
        if any(f < 0 for f in value) or abs(sum(value) - 1.0) > 1e-9:
            raise ValueError(f"fractions must be non-negative and sum to 1, got {value}")
        return value


class PrepConfig(BaseModel):
    """Observation ingestion settings."""

    min_observations: int = Field(default=200, ge=0)
    species_count: Optional[int] = Field(default=None, ge=1)
    planar: bool = False
    histogram_bins: int = Field(default=20, ge=1)


class SynthConfig(BaseModel):
    """Synthetic benchmark generator settings."""

    species_count: int = 62
    feature_dim: int = 32
    n_locations: int = 600
    n_habitats: int = 8
    noise: float = 0.05
    seed: int = 0
    n_regions: int = 40
    extent_metres: float = 600_000.0
    region_spread_metres: float = 6_000.0


class SearchConfig(BaseModel):
    """Hyperparameter search settings."""

    mode: Literal["grid", "random"] = "grid"
    n_samples: int = Field(default=30, ge=0)
    seed: int = 0
    grid: Dict[str, List[Any]] = Field(
        default_factory=lambda: {
            "learning_rate": [1e-3],
            "batch_size": [32],
            "k": [1, 2, 5],
            "alpha": [0.1, 0.3],
            "tau": [0.5],
        }
    )


class ReportingConfig(BaseModel):
    """Report emission settings."""

    formats: List[Literal["json", "csv", "markdown", "html"]] = ["json", "csv", "markdown", "html"]


class LoggingConfig(BaseModel):
    """Logging settings."""

    level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = "INFO"
    log_dir: Optional[str] = None


class HyperParams(BaseModel):
    """One concrete hyperparameter setting (a search candidate)."""

    learning_rate: float = Field(gt=0)
    batch_size: int = Field(ge=1)
    k: int = Field(ge=1)
    alpha: float = Field(ge=0)
    tau: float = Field(gt=0)
    seed: int = 0
    epochs: int = Field(default=50, ge=0)
    soft_label_source: SoftLabelSource = SoftLabelSource.LABEL_COSINE_SQUARED

    def loss_config(self) -> LossConfig:
        return LossConfig(
            k=self.k, tau=self.tau, alpha=self.alpha, soft_label_source=self.soft_label_source
        )


class ExperimentConfig(BaseModel):
    """Main configuration class."""

    paths: PathsConfig = Field(default_factory=PathsConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    loss: LossConfig = Field(default_factory=LossConfig)
    training: TrainingConfig = Field(default_factory=TrainingConfig)
    split: SplitConfig = Field(default_factory=SplitConfig)
    prep: PrepConfig = Field(default_factory=PrepConfig)
    synth: SynthConfig = Field(default_factory=SynthConfig)
    search: SearchConfig = Field(default_factory=SearchConfig)
    reporting: ReportingConfig = Field(default_factory=ReportingConfig)
    logging: LoggingConfig = Field(default_factory=LoggingConfig)

    def hyperparams(self, seed: int) -> HyperParams:
        return HyperParams(
            learning_rate=self.training.learning_rate,
            batch_size=self.training.batch_size,
            k=self.loss.k,
            alpha=self.loss.alpha,
            tau=self.loss.tau,
            seed=seed,
            epochs=self.training.epochs,
            soft_label_source=self.loss.soft_label_source,
        )

    def with_hyperparams(self, params: HyperParams) -> "ExperimentConfig":
        """Copy of this config with training/loss fields taken from ``params``."""
        data = self.model_dump()
        data["training"].update(
            learning_rate=params.learning_rate,
            batch_size=params.batch_size,
            epochs=params.epochs,
        )
        data["loss"].update(
            k=params.k,
            alpha=params.alpha,
            tau=params.tau,
            soft_label_source=params.soft_label_source,
        )
        return ExperimentConfig.model_validate(data)


def _deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _set_dotted(data: Dict[str, Any], dotted_key: str, value: Any):
    node = data
    parts = dotted_key.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value


class ConfigManager:
    """Loads bundled defaults, a user settings file and flag overrides."""

    def __init__(self, config_path: Optional[str] = None):
        self.config_path = Path(config_path) if config_path else None
        self._config: Optional[ExperimentConfig] = None
        app_dirs.load_env_files()

    def load_config(self, overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
        """Load configuration from YAML/JSON files; ``overrides`` use dotted keys."""
        if self._config is not None and not overrides:
            return self._config

        data = self._read_file(DEFAULTS_FILE)
        if self.config_path is not None:
            if not self.config_path.exists():
                raise ConfigError(f"config file not found: {self.config_path}")
            data = _deep_merge(data, self._read_file(self.config_path))

        data = self._expand_env_vars(data)
        for dotted_key, value in (overrides or {}).items():
            if value is not None:
                _set_dotted(data, dotted_key, value)

        try:
            config = ExperimentConfig.model_validate(data)
        except ValidationError as e:
            raise ConfigError(f"invalid configuration: {e}") from e

        if not overrides:
            self._config = config
        logger.debug(f"Configuration loaded from {self.config_path or DEFAULTS_FILE}")
        return config

    @staticmethod
    def _read_file(path: Path) -> Dict[str, Any]:
        with open(path, "r") as f:
            if path.suffix.lower() == ".json":
                content = json.load(f)
            else:
                content = yaml.safe_load(f)
        if content is None:
            return {}
        if not isinstance(content, dict):
            raise ConfigError(f"{path} must contain a mapping at the top level")
        return content

    def _expand_env_vars(self, data: Any) -> Any:
        """Recursively expand ``${VAR}`` strings from the environment."""
        if isinstance(data, dict):
            return {k: self._expand_env_vars(v) for k, v in data.items()}
        elif isinstance(data, list):
            return [self._expand_env_vars(item) for item in data]
        elif isinstance(data, str):
            if data.startswith("${") and data.endswith("}"):
                return os.getenv(data[2:-1], data)
        return data
