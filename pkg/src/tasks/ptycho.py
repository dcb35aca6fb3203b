"""Distributed ptychographic reconstruction as a collective partition task.

Each partition element is the list of frame indices owned by one rank; the
scan itself is read from a shared directory.
"""

from collections.abc import Iterator
from typing import Any

from src.engine import TaskContext, load_config, task
from src.ptycho.io import read_scan
from src.ptycho.params import SolverParams
from src.ptycho.solver import reconstruct

RECONSTRUCT = "ptycho.reconstruct"


@task(RECONSTRUCT)
def reconstruct_frames(index: int, elements: Iterator[list[int]], ctx: TaskContext) -> Iterator[dict[str, Any]]:
    config = load_config(ctx.config)
    scan = read_scan(config["scan"])
    params = SolverParams(**config["params"])
    frames = [int(i) for block in elements for i in block]
    result = reconstruct(scan, params, ctx.connect(), frames=frames)
    if ctx.rank == 0 or config.get("all_ranks"):
        yield {
            "rank": ctx.rank,
            "probe": result.probe,
            "object": result.object,
            "epsilon": result.epsilon,
            "seconds": result.seconds,
        }
