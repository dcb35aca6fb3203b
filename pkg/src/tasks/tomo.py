"""Per-slice ART over a block of slices."""

from collections.abc import Iterator

import numpy as np

from src.engine import TaskContext, load_config, task
from src.tomo.art import art_slice
from src.tomo.params import ArtParams
from src.tomo.pipeline import ART_TASK
from src.tomo.system_matrix import cached_matrix


@task(ART_TASK)
def art_block(index: int, slices: Iterator[tuple[int, np.ndarray]], ctx: TaskContext) -> Iterator[tuple[int, np.ndarray]]:
    config = load_config(ctx.config)
    system = cached_matrix(
        int(config["n_side"]),
        float(config["pixel_width"]),
        config["angles"],
        int(config["n_ray"]),
        float(config["ray_width"]),
    )
    params = ArtParams(**config["params"])
    for s, rhs in slices:
        yield s, art_slice(system, rhs, params)
