"""Configuration manager for run settings, scale presets and manifests."""

import json
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from sampling.hmc import HmcConfig
from services.results_writer import version_drift
from utils.errors import ConfigError
from utils.logging_config import get_logger

logger = get_logger(__name__)


class Settings(BaseSettings):
    """Process-level settings read from the environment or a .env file."""

    model_config = SettingsConfigDict(env_file=".env", env_file_encoding="utf-8", extra="ignore")

    log_level: str = "INFO"
    log_file: Optional[str] = None
    output_dir: str = "results"
    max_workers: int = Field(default=1, ge=1)


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Get the cached settings instance."""
    return Settings()


# ============================================================================
# RUN CONFIGURATION
# ============================================================================


class RunConfig(BaseModel):
    """Validated configuration of one CLI run. Unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid")

    command: Optional[str] = None
    seed: int = 0
    chains: int = Field(default=1, ge=1)
    draws: Optional[int] = Field(default=None, ge=1)
    burn_in: Optional[int] = Field(default=None, ge=0)
    step_size: Union[Literal["auto"], float] = "auto"
    leapfrog_steps: int = Field(default=20, ge=1)
    family: str = "general"
    prior: str = "primitive"
    property_name: Literal["avg-fidelity", "min-fidelity"] = "avg-fidelity"
    scale: Literal["desk", "paper"] = "desk"
    out: str = "results"
    scheme: str = "tetrahedron"
    counts: Optional[str] = None
    channel: Optional[str] = None
    copies: Optional[List[int]] = None
    truth: Optional[str] = None
    restarts: int = Field(default=20, ge=1)
    n_channels: Optional[int] = Field(default=None, ge=1)
    n_values: Optional[List[int]] = None
    iterations: int = Field(default=1, ge=1)

    @field_validator("step_size")
    @classmethod
    def _positive_step(cls, value):
        if value != "auto" and value <= 0:
            raise ValueError("step_size must be 'auto' or a positive number")
        return value

    @field_validator("copies", "n_values")
    @classmethod
    def _non_negative(cls, value):
        if value is not None and any(v < 0 for v in value):
            raise ValueError("values must be non-negative")
        return value


class ScaleProfile(BaseModel):
    """Sample sizes for one named resource preset."""

    model_config = ConfigDict(frozen=True)

    name: str
    regions_draws: Dict[int, int]
    marginal_draws: Tuple[int, int, int]
    model_draws: int
    n_channels: int
    n_values: List[int]
    sample_draws: int


SCALE_PROFILES: Dict[str, ScaleProfile] = {
    "desk": ScaleProfile(
        name="desk",
        regions_draws={2: 50_000, 3: 20_000},
        marginal_draws=(50_000, 75_000, 75_000),
        model_draws=50_000,
        n_channels=100,
        n_values=[20, 1_000],
        sample_draws=10_000,
    ),
    "paper": ScaleProfile(
        name="paper",
        regions_draws={2: 500_000, 3: 100_000},
        marginal_draws=(1_000_000, 1_500_000, 1_500_000),
        model_draws=500_000,
        n_channels=1_000,
        n_values=[20, 50, 100, 1_000, 10_000, 100_000],
        sample_draws=100_000,
    ),
}


class ConfigManager:
    """Manager for run configuration."""

    DEFAULT_CONFIG: Dict[str, Any] = {
        "seed": 0,
        "chains": 1,
        "step_size": "auto",
        "leapfrog_steps": 20,
        "family": "general",
        "prior": "primitive",
        "property_name": "avg-fidelity",
        "scale": "desk",
        "scheme": "tetrahedron",
        "restarts": 20,
        "iterations": 1,
    }

    def __init__(self, settings: Optional[Settings] = None):
        """
        Initialize configuration manager.

        Args:
            settings: Process settings (defaults to the environment)
        """
        self.settings = settings or get_settings()
        logger.info("Config manager initialized")

    def load(self, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
        """
        Merge overrides into DEFAULT_CONFIG and validate.

        None values in overrides are ignored, so unset CLI flags keep their defaults.

        Raises:
            ConfigError: On unknown keys or invalid values
        """
        values = dict(self.DEFAULT_CONFIG)
        values["out"] = self.settings.output_dir
        values.update({k: v for k, v in (overrides or {}).items() if v is not None})
        try:
            config = RunConfig.model_validate(values)
        except ValidationError as e:
            raise ConfigError(f"Invalid configuration: {e}") from e
        logger.debug(f"Loaded run config: {config.model_dump()}")
        return config

    def profile(self, config: RunConfig) -> ScaleProfile:
        return SCALE_PROFILES[config.scale]

    def resolve_draws(self, config: RunConfig, default: int) -> int:
        """Explicit --draws wins over the scale preset."""
        return config.draws if config.draws is not None else default

    def hmc_config(self, config: RunConfig, draws: int, seed_offset: int = 0) -> HmcConfig:
        """
        HMC settings for one sampling stage.

        Raises:
            ConfigError: If the combination is invalid
        """
        try:
            return HmcConfig(
                step_size=None if config.step_size == "auto" else float(config.step_size),
                leapfrog_steps=config.leapfrog_steps,
                draws=draws,
                burn_in=config.burn_in,
                seed=config.seed + seed_offset,
            )
        except ValidationError as e:
            raise ConfigError(f"Invalid sampler configuration: {e}") from e

    def from_manifest(self, path: Union[str, Path]) -> RunConfig:
        """
        Rebuild the run configuration recorded in a manifest.json.

        Raises:
            ConfigError: If the manifest is missing or invalid
        """
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"Manifest {path} does not exist")
        try:
            with open(path, "r", encoding="utf-8") as f:
                manifest = json.load(f)
            recorded = manifest["config"]
        except (json.JSONDecodeError, KeyError) as e:
            raise ConfigError(f"Invalid manifest {path}: {e}") from e
        drifted = version_drift(manifest.get("versions") or {})
        if drifted:
            logger.warning(f"Package versions differ from the recorded run: {', '.join(drifted)}")
        logger.info(f"Loaded config from manifest {path}")
        return self.load(recorded)


# Global instance (initialized on first use)
config_manager: Optional[ConfigManager] = None


def get_config_manager() -> ConfigManager:
    """Get the global config manager instance."""
    global config_manager
    if config_manager is None:
        config_manager = ConfigManager()
    return config_manager
