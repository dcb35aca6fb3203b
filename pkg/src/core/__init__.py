"""Core modules for hybridpipe: configuration, logging, errors and shared models."""

from .config import Settings, get_settings
from .errors import HybridPipeError
from .models import RunConfig

__all__ = ["HybridPipeError", "RunConfig", "Settings", "get_settings"]
