"""Driver-worker partitioned-dataset engine."""

from .context import EngineContext
from .dataset import Partition, PartitionedDataset, parallelize, union
from .registry import TaskKind, TaskSpec, load_config, task
from .runtime import TaskContext

__all__ = [
    "EngineContext",
    "Partition",
    "PartitionedDataset",
    "TaskContext",
    "TaskKind",
    "TaskSpec",
    "load_config",
    "parallelize",
    "task",
    "union",
]
