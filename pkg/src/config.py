"""Configuration management for training, detection and reporting defaults."""
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from pydantic import Field, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from src.errors import ConfigError
from src.models.schemas import (
    Activation,
    CounterSpec,
    DefectMapping,
    Optimizer,
    ProfileFormat,
    Topology,
    TrainConfig,
)

logger = logging.getLogger(__name__)

ENV_PREFIX = "PERFSENTINEL_"


class Settings(BaseSettings):
    """Effective configuration.

    Values come from (highest first) explicit overrides such as CLI flags,
    ``PERFSENTINEL_*`` environment variables, the flat ``KEY=value`` config file,
    then the defaults below.
    """
    model_config = SettingsConfigDict(
        env_prefix=ENV_PREFIX,
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Detection
    t: float = Field(2.0, ge=0.0, description="Threshold multiplier in gamma = mu + t * sigma")
    rho: float = Field(0.5, gt=0.0, le=1.0, description="Anomalous-sample fraction that flags a run")
    k: Optional[int] = Field(None, gt=0, description="Clusters; min(4, #functions) when unset")

    # Training
    epochs: int = Field(500, ge=0)
    batch_size: int = Field(32, gt=0)
    learning_rate: float = Field(1e-3, gt=0.0)
    optimizer: Optimizer = Optimizer.ADAM
    early_stop_patience: int = Field(20, ge=0)
    validation_fraction: float = Field(0.1, ge=0.0, lt=0.5)
    seed: int = 0
    activation: Activation = Activation.TANH
    hidden_layers: Optional[List[int]] = Field(None, description="Encoder widths, e.g. [16, 8]")
    min_samples_per_function: int = Field(50, ge=2)
    max_workers: int = Field(1, ge=1, description="Clusters trained in parallel")

    # Clustering
    kmeans_max_iters: int = Field(300, ge=1)
    kmeans_n_init: int = Field(10, ge=1)
    route_fallback: bool = True

    # Pipeline
    functions: Optional[List[str]] = Field(None, description="Changed functions; all shared ones when unset")
    cycle_counter: str = "TOT_CYC"
    min_degradation_fraction: float = Field(0.05, ge=0.0)

    # Includes
    counter_spec_path: Optional[str] = None
    defect_mapping_path: Optional[str] = None

    # Output
    format: ProfileFormat = ProfileFormat.CSV
    out: str = "./out"
    history_db_path: Optional[str] = None
    log_level: str = "INFO"

    def effective_k(self, n_functions: int) -> int:
        return self.k if self.k is not None else min(4, n_functions)

    def train_config(self, seed: Optional[int] = None) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            optimizer=self.optimizer,
            seed=self.seed if seed is None else seed,
            early_stop_patience=self.early_stop_patience,
            validation_fraction=self.validation_fraction,
        )

    def topology(self, d: int) -> Topology:
        try:
            if self.hidden_layers:
                return Topology.from_hidden(d, self.hidden_layers, self.activation)
            return Topology.default(d, self.activation)
        except ValidationError as e:
            raise ConfigError(f"invalid topology for D={d}: {e}") from e

    def counter_spec(self) -> CounterSpec:
        """Included counter spec, or the 33-counter reference set."""
        if not self.counter_spec_path:
            return CounterSpec.reference()
        raw = _read_json(self.counter_spec_path, "counter spec")
        try:
            if isinstance(raw, list):
                return CounterSpec.from_names([str(n) for n in raw])
            if isinstance(raw, dict) and "names" in raw:
                return CounterSpec.from_names([str(n) for n in raw["names"]])
            return CounterSpec.model_validate(raw)
        except ValidationError as e:
            raise ConfigError(f"invalid counter spec {self.counter_spec_path}: {e}") from e

    def defect_mapping(self) -> DefectMapping:
        """Included defect rules, or the default HITM / REMOTE_DRAM rules."""
        if not self.defect_mapping_path:
            return DefectMapping.default()
        raw = _read_json(self.defect_mapping_path, "defect mapping")
        try:
            if isinstance(raw, list):
                return DefectMapping.model_validate({"rules": raw})
            return DefectMapping.model_validate(raw)
        except ValidationError as e:
            raise ConfigError(f"invalid defect mapping {self.defect_mapping_path}: {e}") from e

    def echo(self) -> Dict[str, Any]:
        """Every effective field, JSON-ready, for embedding in reports."""
        return self.model_dump(mode="json")


def _read_json(path: str, what: str) -> Any:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"cannot read {what} {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{what} {path} is not valid JSON: {e}") from e


def load_settings(
    config_path: Optional[Union[str, Path]] = None,
    overrides: Optional[Dict[str, Any]] = None,
) -> Settings:
    """
    Build Settings from a config file plus explicit overrides.

    Args:
        config_path: Flat ``PERFSENTINEL_KEY=value`` file; ``.env`` when omitted
        overrides: Highest-precedence values (None entries are skipped)

    Returns:
        Settings
    """
    kwargs = {k: v for k, v in (overrides or {}).items() if v is not None}
    env_file: Optional[str] = ".env"
    if config_path is not None:
        if not Path(config_path).is_file():
            raise ConfigError(f"config file not found: {config_path}")
        env_file = str(config_path)
    try:
        loaded = Settings(_env_file=env_file, **kwargs)
    except ValidationError as e:
        fields = ", ".join(".".join(str(p) for p in err["loc"]) for err in e.errors())
        raise ConfigError(f"invalid configuration (fields: {fields}): {e}") from e
    logger.debug(f"Loaded settings from {env_file or 'environment'}")
    return loaded


_settings: Optional[Settings] = None


def get_settings() -> Settings:
    """Process-wide settings from the environment and ``.env``."""
    global _settings
    if _settings is None:
        _settings = load_settings()
    return _settings


def reload_settings(config_path: Optional[Union[str, Path]] = None) -> Settings:
    global _settings
    _settings = load_settings(config_path)
    return _settings
