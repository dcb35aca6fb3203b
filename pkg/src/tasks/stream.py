"""Streaming demo task: per-partition record sums reduced across the batch."""

from collections.abc import Iterator
from typing import Any

import numpy as np

from src.engine import TaskContext, load_config, task

ALLREDUCE_SUM = "stream.allreduce_sum"


@task(ALLREDUCE_SUM)
def allreduce_sum(index: int, records: Iterator[np.ndarray], ctx: TaskContext) -> Iterator[dict[str, Any]]:
    """Sum this partition's records, then allreduce the partial sums over the gang."""
    length = int(load_config(ctx.config)["length"])
    local = np.zeros(length, dtype=np.float64)
    count = 0
    for record in records:
        local += np.asarray(record, dtype=np.float64)
        count += 1
    total = ctx.connect().allreduce(local)
    yield {"rank": ctx.rank, "records": count, "sum": total}
