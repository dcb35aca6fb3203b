"""Record value decoders, addressed by id."""

import json
from collections.abc import Callable
from typing import Any

import numpy as np

from src.core.errors import ArgumentError


def _f32(value: bytes) -> np.ndarray:
    if len(value) % 4:
        raise ValueError(f"{len(value)} bytes is not a whole number of float32 values")
    return np.frombuffer(value, dtype="<f4").copy()


DECODERS: dict[str, Callable[[bytes], Any]] = {
    "identity": bytes,
    "utf8": lambda v: v.decode("utf-8"),
    "json": json.loads,
    "f32": _f32,
}

# element kind each decoder's output travels as
DECODER_KINDS = {"identity": "bytes", "f32": "f32", "utf8": "pickle", "json": "pickle"}


def get_decoder(decoder_id: str) -> Callable[[bytes], Any]:
    try:
        return DECODERS[decoder_id]
    except KeyError:
        raise ArgumentError(f"unknown decoder {decoder_id!r}; known: {sorted(DECODERS)}") from None
