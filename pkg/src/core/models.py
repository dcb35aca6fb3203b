"""Typed run configuration shared by the CLI commands."""

from pathlib import Path
from typing import Any

from pydantic import BaseModel, Field, ValidationError, field_validator

from .errors import ConfigurationError


class RunConfig(BaseModel):
    """Validated flags of one CLI invocation, checked before any process launch."""

    subcommand: str
    workers: list[int] = Field(default_factory=lambda: [0])
    partitions: int | None = Field(default=None, ge=1)
    seed: int = 0
    out: Path = Path("out")
    rdv: str | None = None
    solver: dict[str, Any] = Field(default_factory=dict)
    art: dict[str, Any] = Field(default_factory=dict)

    @field_validator("workers")
    @classmethod
    def _workers(cls, value: list[int]) -> list[int]:
        if not value:
            raise ValueError("at least one worker count is required")
        if any(w < 0 for w in value):
            raise ValueError("worker counts must be >= 0")
        return value

    @classmethod
    def build(cls, **fields: Any) -> "RunConfig":
        """Validate flags.

        Raises:
            ConfigurationError: If any flag is out of range
        """
        try:
            return cls(**fields)
        except ValidationError as e:
            raise ConfigurationError(f"Invalid options for {fields.get('subcommand')}: {e}") from e


def parse_int_list(text: str) -> list[int]:
    """``"1,2,4"`` -> ``[1, 2, 4]``.

    Raises:
        ConfigurationError: On an empty or non-integer item
    """
    try:
        values = [int(item) for item in text.split(",")]
    except ValueError:
        raise ConfigurationError(f"expected a comma list of integers, got {text!r}") from None
    return values


def parse_group(text: str) -> tuple[str, int]:
    """``"g0:4"`` -> ``("g0", 4)``."""
    name, sep, size = text.rpartition(":")
    if not sep or not name:
        raise ConfigurationError(f"group must be name:size, got {text!r}")
    try:
        return name, int(size)
    except ValueError:
        raise ConfigurationError(f"group size is not an integer in {text!r}") from None


def parse_range(text: str) -> tuple[float, float, float]:
    """``"-90:90:2"`` -> ``(-90.0, 90.0, 2.0)``."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigurationError(f"range must be start:stop:step, got {text!r}")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError:
        raise ConfigurationError(f"range has a non-numeric field: {text!r}") from None
    return start, stop, step
