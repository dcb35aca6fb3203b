"""Static registry of named task functions and the TaskSpec that refers to them.

Task functions are looked up by string id on whichever process runs the
partition; closures are never shipped. Two shapes are registered:

* ``map`` functions: ``fn(element, config) -> element``
* partition functions: ``fn(index, iterator, context) -> iterable``

``config`` is the TaskSpec's opaque blob; ``load_config`` reads the JSON
convention used by the built-in tasks.
"""

import importlib
import json
import logging
from collections.abc import Callable, Iterable, Mapping
from enum import Enum
from typing import Any

from pydantic import BaseModel, ConfigDict

from src.core.errors import ArgumentError, ConfigurationError, TaskError

logger = logging.getLogger(__name__)

BUILTIN_TASK_MODULES = ("src.tasks",)

_TASKS: dict[str, Callable[..., Any]] = {}


class TaskKind(str, Enum):
    PLAIN = "plain"
    COLLECTIVE = "collective"


class TaskSpec(BaseModel):
    """A reference to a registered task function plus its configuration."""

    model_config = ConfigDict(frozen=True)

    function_id: str
    kind: TaskKind = TaskKind.PLAIN
    config: bytes = b""
    output_kind: str = "pickle"
    group_id: str | None = None
    rendezvous: str | None = None

    @classmethod
    def build(
        cls,
        function_id: str,
        config: Mapping[str, Any] | bytes | None = None,
        kind: TaskKind | str = TaskKind.PLAIN,
        **fields: Any,
    ) -> "TaskSpec":
        """Create a spec, JSON-encoding a mapping config."""
        if isinstance(config, Mapping):
            blob = json.dumps(dict(config), sort_keys=True).encode("utf-8")
        else:
            blob = config or b""
        return cls(function_id=function_id, config=blob, kind=TaskKind(kind), **fields)

    @property
    def collective(self) -> bool:
        return self.kind is TaskKind.COLLECTIVE


def task(function_id: str) -> Callable[[Callable[..., Any]], Callable[..., Any]]:
    """Register a task function under ``function_id``."""

    def decorator(fn: Callable[..., Any]) -> Callable[..., Any]:
        existing = _TASKS.get(function_id)
        if existing is not None and existing is not fn:
            if (existing.__module__, existing.__qualname__) != (fn.__module__, fn.__qualname__):
                raise ArgumentError(f"task id {function_id!r} already registered by {existing.__module__}")
        _TASKS[function_id] = fn
        return fn

    return decorator


def lookup(function_id: str) -> Callable[..., Any]:
    """Resolve a task id on the executing process.

    Raises:
        TaskError: If nothing is registered under ``function_id``
    """
    fn = _TASKS.get(function_id)
    if fn is None:
        raise TaskError(f"unknown task function {function_id!r}")
    return fn


def registered() -> list[str]:
    return sorted(_TASKS)


def load_task_modules(modules: Iterable[str] = ()) -> None:
    """Import the built-in task module and any extra ``modules``.

    Raises:
        ConfigurationError: If a module cannot be imported
    """
    for name in (*BUILTIN_TASK_MODULES, *modules):
        try:
            importlib.import_module(name)
        except ImportError as e:
            raise ConfigurationError(f"cannot import task module {name!r}: {e}") from e
    logger.debug("task registry holds %d functions", len(_TASKS))


def load_config(blob: bytes) -> dict[str, Any]:
    """Decode a JSON config blob; an empty blob is an empty config.

    Raises:
        TaskError: If the blob is not a JSON object
    """
    if not blob:
        return {}
    try:
        value = json.loads(blob)
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise TaskError(f"task config is not JSON: {e}") from e
    if not isinstance(value, dict):
        raise TaskError("task config must be a JSON object")
    return value
