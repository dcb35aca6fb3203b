"""Partitioned datasets with shallow-lazy transformations.

A dataset is a list of partitions, each carrying its encoded source elements
and the ordered stages to apply to them. ``map`` and
``map_partitions_with_index`` only append stages; ``collect``, ``count`` and
``collect_partitions`` hand the plan to the owning context for execution.
"""

from collections.abc import Iterable, Sequence
from dataclasses import dataclass, replace
from enum import Enum
from typing import TYPE_CHECKING, Any

from src.core.errors import ArgumentError

from .codecs import get_codec
from .registry import TaskSpec

if TYPE_CHECKING:
    from .context import EngineContext


class StageMethod(str, Enum):
    MAP = "map"
    MAP_PARTITIONS = "map_partitions"


@dataclass(frozen=True)
class Stage:
    method: StageMethod
    task: TaskSpec


@dataclass(frozen=True)
class Partition:
    """One partition: its index, encoded elements and pending stages."""

    index: int
    kind: str
    elements: tuple[bytes, ...]
    stages: tuple[Stage, ...] = ()

    @property
    def collective_stage(self) -> Stage | None:
        for stage in self.stages:
            if stage.task.collective:
                return stage
        return None


def block_split(items: Sequence[Any], num_partitions: int) -> list[list[Any]]:
    """Contiguous blocks of ceil(N/p) items; trailing partitions may be short or empty."""
    if num_partitions < 1:
        raise ArgumentError(f"num_partitions must be >= 1, got {num_partitions}")
    block = -(-len(items) // num_partitions) if items else 0
    return [list(items[i * block:(i + 1) * block]) for i in range(num_partitions)]


class PartitionedDataset:
    """An ordered list of partitions plus the context that executes them."""

    def __init__(self, context: "EngineContext", partitions: Sequence[Partition], kind: str):
        self.context = context
        self.kind = kind
        self.partitions = tuple(
            p if p.index == i else replace(p, index=i) for i, p in enumerate(partitions)
        )

    @property
    def num_partitions(self) -> int:
        return len(self.partitions)

    @property
    def is_collective(self) -> bool:
        return any(p.collective_stage is not None for p in self.partitions)

    def map(self, task: TaskSpec) -> "PartitionedDataset":
        """Apply ``task`` to each element when the dataset is executed."""
        if task.collective:
            raise ArgumentError("collective tasks run through map_partitions_with_index")
        return self._with_stage(Stage(StageMethod.MAP, task), task.output_kind)

    def map_partitions_with_index(self, task: TaskSpec) -> "PartitionedDataset":
        """Apply ``task`` once per partition with (index, iterator, context).

        A collective task becomes the dataset's gang stage: every partition
        runs it concurrently with rank equal to its partition index.
        """
        if task.collective and self.is_collective:
            raise ArgumentError("a dataset may carry only one collective stage")
        return self._with_stage(Stage(StageMethod.MAP_PARTITIONS, task), task.output_kind)

    def union(self, *others: "PartitionedDataset") -> "PartitionedDataset":
        return union([self, *others])

    def collect(self) -> list[Any]:
        """Execute and return all results in partition order."""
        return [x for part in self.collect_partitions() for x in part]

    def collect_partitions(self) -> list[list[Any]]:
        """Execute and return one result list per partition."""
        return self.context.run_job(self)

    def count(self) -> int:
        """Execute and return the element total; payloads stay on the workers."""
        return sum(self.context.run_job(self, count_only=True))

    def _with_stage(self, stage: Stage, kind: str) -> "PartitionedDataset":
        get_codec(kind)
        return PartitionedDataset(
            self.context,
            [replace(p, stages=p.stages + (stage,)) for p in self.partitions],
            kind,
        )

    def __repr__(self) -> str:
        return f"PartitionedDataset(partitions={self.num_partitions}, kind={self.kind!r})"


def parallelize(
    context: "EngineContext", items: Iterable[Any], num_partitions: int, kind: str = "pickle"
) -> PartitionedDataset:
    """Split ``items`` into ``num_partitions`` contiguous blocks.

    Raises:
        ArgumentError: If num_partitions < 1 or an element does not fit ``kind``
    """
    codec = get_codec(kind)
    blocks = block_split(list(items), num_partitions)
    partitions = [
        Partition(i, kind, tuple(codec.encode(x) for x in block)) for i, block in enumerate(blocks)
    ]
    return PartitionedDataset(context, partitions, kind)


def from_encoded(
    context: "EngineContext", blocks: Sequence[Sequence[bytes]], kind: str
) -> PartitionedDataset:
    """Build a dataset from already-encoded partition contents."""
    get_codec(kind)
    return PartitionedDataset(
        context, [Partition(i, kind, tuple(b)) for i, b in enumerate(blocks)], kind
    )


def union(datasets: Sequence[PartitionedDataset]) -> PartitionedDataset:
    """Concatenate partitions in operand order.

    Raises:
        ArgumentError: With no operands, mixed element kinds or contexts, or an
            operand that already carries a collective stage
    """
    if not datasets:
        raise ArgumentError("union needs at least one dataset")
    first = datasets[0]
    if len(datasets) == 1:
        return first
    for ds in datasets:
        if ds.kind != first.kind:
            raise ArgumentError(f"union of mismatched element kinds {first.kind!r} and {ds.kind!r}")
        if ds.context is not first.context:
            raise ArgumentError("union operands belong to different contexts")
        if ds.is_collective:
            raise ArgumentError("union operands cannot carry a collective stage")
    partitions = [p for ds in datasets for p in ds.partitions]
    return PartitionedDataset(first.context, partitions, first.kind)
