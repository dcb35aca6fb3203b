"""Configuration loader for hybridpipe."""

import os
from pathlib import Path
from typing import Any, Literal

import yaml
from pydantic import BaseModel, Field, ValidationError

from .errors import ConfigurationError

CONFIG_FILE = "hybridpipe.yml"


class RendezvousSection(BaseModel):
    """Rendezvous server defaults."""

    host: str = "127.0.0.1"
    max_key_bytes: int = Field(default=256, gt=0)
    max_value_bytes: int = Field(default=4096, gt=0)


class CollectivesSection(BaseModel):
    """Peer-to-peer collective defaults."""

    step_timeout: float = Field(default=30.0, gt=0)


class EngineSection(BaseModel):
    """Driver/worker engine defaults."""

    workers: int = Field(default=0, ge=0)
    gang_timeout: float = Field(default=10.0, gt=0)
    connect_timeout: float = Field(default=120.0, gt=0)
    worker_start_timeout: float = Field(default=30.0, gt=0)
    task_modules: list[str] = Field(default_factory=list)


class StreamlogSection(BaseModel):
    """Message log defaults."""

    segment_bytes: int = Field(default=64 * 1024 * 1024, gt=64)
    control_topic: str = "_control"
    fsync: bool = False


class PtychoSection(BaseModel):
    """Ptychographic solver defaults."""

    algorithm: Literal["raar", "dm"] = "raar"
    beta: float = Field(default=0.9, gt=0, le=1)
    iterations: int = Field(default=100, ge=0)
    denominator_floor: float = Field(default=1e-8, gt=0)
    inner_iters: int = Field(default=1, ge=1)


class TomoSection(BaseModel):
    """ART defaults."""

    beta: float = Field(default=1.0, gt=0, lt=2)
    sweeps: int = Field(default=10, ge=1)
    row_order: Literal["sequential", "shuffled"] = "sequential"


class LoggingSection(BaseModel):
    """Logging defaults; LOG_LEVEL overrides the level."""

    level: str = "INFO"


class Settings(BaseModel):
    """All configuration sections."""

    rendezvous: RendezvousSection = Field(default_factory=RendezvousSection)
    collectives: CollectivesSection = Field(default_factory=CollectivesSection)
    engine: EngineSection = Field(default_factory=EngineSection)
    streamlog: StreamlogSection = Field(default_factory=StreamlogSection)
    ptycho: PtychoSection = Field(default_factory=PtychoSection)
    tomo: TomoSection = Field(default_factory=TomoSection)
    logging: LoggingSection = Field(default_factory=LoggingSection)


class ConfigLoader:
    """Loads configuration from the config directory."""

    def __init__(self, config_dir: str | Path | None = None):
        """Initialize config loader.

        Args:
            config_dir: Path to config directory. Defaults to $HYBRIDPIPE_CONFIG_DIR
                or ./config next to the package.
        """
        if config_dir is None:
            config_dir = os.getenv("HYBRIDPIPE_CONFIG_DIR")
        if config_dir is None:
            current_dir = Path(__file__).parent
            config_dir = current_dir.parent.parent / "config"

        self.config_dir = Path(config_dir)
        self._settings: Settings | None = None

    def load_raw(self) -> dict[str, Any]:
        """Load the YAML file as a plain dictionary.

        Returns:
            Parsed YAML content, or an empty dict when the file is absent

        Raises:
            ConfigurationError: If the file is not valid YAML or not a mapping
        """
        path = self.config_dir / CONFIG_FILE
        if not path.exists():
            return {}

        try:
            with open(path, encoding="utf-8") as f:
                data = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigurationError(f"Invalid YAML in {path}: {e}") from e

        if data is None:
            return {}
        if not isinstance(data, dict):
            raise ConfigurationError(f"{path} must contain a mapping")
        return data

    def load(self) -> Settings:
        """Load and validate settings, applying environment overrides.

        Returns:
            Validated settings

        Raises:
            ConfigurationError: If any section fails validation
        """
        raw = self.load_raw()
        level = os.getenv("LOG_LEVEL")
        if level:
            raw.setdefault("logging", {})["level"] = level
        modules = os.getenv("HYBRIDPIPE_TASK_MODULES")
        if modules:
            raw.setdefault("engine", {})["task_modules"] = [
                m.strip() for m in modules.split(",") if m.strip()
            ]

        try:
            return Settings.model_validate(raw)
        except ValidationError as e:
            raise ConfigurationError(f"Invalid configuration: {e}") from e

    @property
    def settings(self) -> Settings:
        """Settings loaded once and cached."""
        if self._settings is None:
            self._settings = self.load()
        return self._settings

    def reset(self) -> None:
        """Drop cached settings (used after environment changes)."""
        self._settings = None


# Global config loader instance
config_loader = ConfigLoader()


def get_settings() -> Settings:
    """Return the process-wide settings."""
    return config_loader.settings
