"""Append-only message log and the micro-batch driver built on it."""

from .log import MessageLog, OffsetRange
from .microbatch import (
    BatchReport,
    MicroBatchPlan,
    StreamReport,
    dataset_from_ranges,
    run_batch,
    run_stream,
)
from .segment import Record

__all__ = [
    "BatchReport",
    "MessageLog",
    "MicroBatchPlan",
    "OffsetRange",
    "Record",
    "StreamReport",
    "dataset_from_ranges",
    "run_batch",
    "run_stream",
]
