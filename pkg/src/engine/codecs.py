"""Element codecs: the kind tag of a dataset names how its elements travel."""

import pickle
from collections.abc import Callable
from dataclasses import dataclass
from typing import Any

import numpy as np

from src.core.errors import ArgumentError


@dataclass(frozen=True)
class Codec:
    kind: str
    encode: Callable[[Any], bytes]
    decode: Callable[[bytes], Any]


def _encode_bytes(value: Any) -> bytes:
    if not isinstance(value, (bytes, bytearray, memoryview)):
        raise ArgumentError(f"'bytes' elements must be bytes-like, got {type(value).__name__}")
    return bytes(value)


def _encode_f32(value: Any) -> bytes:
    return np.asarray(value, dtype="<f4").reshape(-1).tobytes()


def _decode_f32(data: bytes) -> np.ndarray:
    return np.frombuffer(data, dtype="<f4").copy()


_CODECS: dict[str, Codec] = {
    "pickle": Codec("pickle", lambda v: pickle.dumps(v, protocol=pickle.HIGHEST_PROTOCOL), pickle.loads),
    "bytes": Codec("bytes", _encode_bytes, bytes),
    "f32": Codec("f32", _encode_f32, _decode_f32),
}


def get_codec(kind: str) -> Codec:
    """Look up a codec by kind tag.

    Raises:
        ArgumentError: If no codec is registered under ``kind``
    """
    try:
        return _CODECS[kind]
    except KeyError:
        raise ArgumentError(f"unknown element kind {kind!r}; known: {sorted(_CODECS)}") from None


def register_codec(codec: Codec) -> None:
    if codec.kind in _CODECS:
        raise ArgumentError(f"codec {codec.kind!r} already registered")
    _CODECS[codec.kind] = codec
