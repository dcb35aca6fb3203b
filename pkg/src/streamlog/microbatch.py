"""Micro-batch driver: offset windows of topics become dataset partitions.

``run_batch`` turns one window [start, until) of every topic into a
one-partition dataset, unions them and hands the union to a (collective)
partition task. ``run_stream`` waits for an ``init`` control record and then
runs one batch per interval over the newly complete window until a ``stop``
record arrives.
"""

import logging
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import Any

from pydantic import BaseModel, Field, ValidationError, field_validator

from src.core.config import get_settings
from src.core.errors import ConfigurationError, TaskError
from src.engine import EngineContext, PartitionedDataset, TaskSpec
from src.engine.codecs import get_codec

from .decoders import DECODER_KINDS, get_decoder
from .log import MessageLog, OffsetRange

logger = logging.getLogger(__name__)

INIT_KEY = b"init"
STOP_KEY = b"stop"


class MicroBatchPlan(BaseModel):
    """What run_stream consumes and how often."""

    topics: list[str] = Field(min_length=1)
    interval: float = Field(default=1.0, ge=0)
    partition: int = Field(default=0, ge=0)
    decoder: str = "f32"
    start_offset: int = Field(default=0, ge=0)
    max_records_per_batch: int | None = Field(default=None, ge=1)
    max_batches: int | None = Field(default=None, ge=1)
    control_topic: str | None = None

    @field_validator("topics")
    @classmethod
    def _unique_topics(cls, topics: list[str]) -> list[str]:
        if len(set(topics)) != len(topics):
            raise ValueError("topics must be distinct")
        return topics

    @classmethod
    def build(cls, **fields: Any) -> "MicroBatchPlan":
        try:
            return cls(**fields)
        except ValidationError as e:
            raise ConfigurationError(f"Invalid micro-batch plan: {e}") from e


@dataclass
class BatchReport:
    """Outcome of one micro-batch."""

    start: int
    until: int
    record_counts: dict[str, int]
    results: list[list[Any]]
    seconds: float

    @property
    def count(self) -> int:
        return sum(self.record_counts.values())

    @property
    def num_partitions(self) -> int:
        return len(self.results)


@dataclass
class StreamReport:
    batches: list[BatchReport] = field(default_factory=list)
    skipped_intervals: int = 0
    stopped: bool = False
    final_offset: int = 0

    @property
    def windows(self) -> list[tuple[int, int]]:
        return [(b.start, b.until) for b in self.batches]


def dataset_from_ranges(
    context: EngineContext,
    log: MessageLog,
    ranges: Sequence[OffsetRange],
    decoder: str = "identity",
) -> PartitionedDataset:
    """One partition per range holding the decoded record values.

    Raises:
        OffsetRangeError: If a range reaches past its partition's next offset
        TaskError: If a record cannot be decoded, naming its topic and offset
    """
    decode = get_decoder(decoder)
    codec = get_codec(DECODER_KINDS.get(decoder, "pickle"))
    batches = [log.read_range(r) for r in ranges]

    blocks = []
    for index, (r, records) in enumerate(zip(ranges, batches)):
        encoded = []
        for record in records:
            try:
                encoded.append(codec.encode(decode(record.value)))
            except (ValueError, TypeError) as e:
                raise TaskError(
                    f"cannot decode {r.topic}[{r.partition}] offset {record.offset} with {decoder!r}: {e}",
                    partition=index,
                ) from e
        blocks.append(encoded)
    return context.from_encoded(blocks, codec.kind)


def run_batch(
    context: EngineContext,
    log: MessageLog,
    topics: Sequence[str],
    start: int,
    until: int,
    task: TaskSpec,
    decoder: str = "f32",
    partition: int = 0,
) -> BatchReport:
    """Run ``task`` over the union of every topic's [start, until) window.

    All ranges are validated before anything executes, so a batch either runs
    over every topic or not at all.
    """
    began = time.perf_counter()
    ranges = [OffsetRange(t, partition, start, until) for t in topics]
    dataset = context.union([dataset_from_ranges(context, log, [r], decoder) for r in ranges])
    logger.info("batch [%d, %d): %d topics, %d partitions", start, until, len(topics), dataset.num_partitions)
    results = dataset.map_partitions_with_index(task).collect_partitions()
    report = BatchReport(
        start=start,
        until=until,
        record_counts={r.topic: r.count for r in ranges},
        results=results,
        seconds=time.perf_counter() - began,
    )
    logger.info("batch [%d, %d) done: %d records in %.3fs", start, until, report.count, report.seconds)
    return report


class _ControlCursor:
    """Reads the control topic incrementally."""

    def __init__(self, log: MessageLog, topic: str):
        self.log = log
        self.topic = topic
        self.offset = 0

    def poll(self) -> list[bytes]:
        available = self.log.next_offset(self.topic, 0)
        records = self.log.read_range(OffsetRange(self.topic, 0, self.offset, available))
        self.offset = available
        return [r.key for r in records]


def run_stream(
    context: EngineContext,
    log: MessageLog,
    plan: MicroBatchPlan,
    task: TaskSpec,
    sleep: Callable[[float], None] = time.sleep,
) -> StreamReport:
    """Block for ``init``, then run one batch per interval until ``stop``.

    Windows are common to all topics: each batch covers [start, until) with
    ``until`` the smallest next offset across the topics (capped by
    ``max_records_per_batch``). An interval with no new complete window is
    counted as skipped. After ``stop`` the remaining complete windows are
    drained and the loop exits.

    Raises:
        ConfigurationError: If the control topic does not exist
    """
    control_topic = plan.control_topic or get_settings().streamlog.control_topic
    if not log.has_topic(control_topic):
        raise ConfigurationError(f"control topic {control_topic!r} does not exist")
    for topic in plan.topics:
        log.partitions(topic)

    control = _ControlCursor(log, control_topic)
    pending: list[bytes] = []
    logger.info("waiting for init on %s", control_topic)
    while True:
        pending = control.poll()
        if INIT_KEY in pending:
            pending = pending[pending.index(INIT_KEY) + 1:]
            break
        sleep(plan.interval)
    logger.info("stream started over %s", ", ".join(plan.topics))

    report = StreamReport()
    start = plan.start_offset
    stopping = STOP_KEY in pending
    while True:
        if not stopping:
            sleep(plan.interval)
            stopping = STOP_KEY in control.poll()

        available = min(log.next_offset(t, plan.partition) for t in plan.topics)
        until = available
        if plan.max_records_per_batch is not None:
            until = min(until, start + plan.max_records_per_batch)

        if until > start:
            report.batches.append(
                run_batch(context, log, plan.topics, start, until, task, plan.decoder, plan.partition)
            )
            start = until
            if plan.max_batches is not None and len(report.batches) >= plan.max_batches:
                break
        elif stopping:
            break
        else:
            report.skipped_intervals += 1
            logger.debug("interval skipped: no new records past offset %d", start)

    report.stopped = stopping
    report.final_offset = start
    logger.info(
        "stream finished: %d batches, %d skipped intervals, offset %d",
        len(report.batches), report.skipped_intervals, start,
    )
    return report
