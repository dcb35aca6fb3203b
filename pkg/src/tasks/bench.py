"""Allreduce benchmark tasks: driver-collect versus collective sums."""

from collections.abc import Iterator

import numpy as np

from src.engine import TaskContext, load_config, task

SENDBUF = "bench.sendbuf"
ALLREDUCE = "bench.allreduce"


def sendbuf(rank: int, n: int) -> np.ndarray:
    """0, 1, ..., n-2 followed by ``rank``: distinct per rank, exact in float32 for n < 2**24."""
    buf = np.arange(n, dtype=np.float32)
    if n:
        buf[-1] = rank
    return buf


def oracle(ranks: int, n: int) -> np.ndarray:
    """Serial sum of every rank's send buffer."""
    total = np.zeros(n, dtype=np.float64)
    for rank in range(ranks):
        total += sendbuf(rank, n)
    return total.astype(np.float32)


@task(SENDBUF)
def make_sendbuf(element: int, config: bytes) -> np.ndarray:
    return sendbuf(int(element), int(load_config(config)["n"]))


@task(ALLREDUCE)
def allreduce_sendbuf(index: int, elements: Iterator[int], ctx: TaskContext) -> Iterator[np.ndarray]:
    n = int(load_config(ctx.config)["n"])
    comm = ctx.connect()
    for element in elements:
        yield comm.allreduce(sendbuf(int(element), n))
