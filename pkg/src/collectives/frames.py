"""Peer-to-peer frame codec.

Frame = 16-byte little-endian header followed by the payload::

    magic "PFCL" | u16 opcode | u16 op | u32 sequence | u32 payload length

The low byte of ``op`` is the ReduceOp, the high byte the element type
(0 = float32, 1 = float64). Payload elements are little-endian.
"""

import struct
from enum import IntEnum
from typing import NamedTuple

import numpy as np

from src.core.errors import ArgumentError, CollectiveError

MAGIC = b"PFCL"
HEADER = struct.Struct("<4sHHII")
HEADER_SIZE = HEADER.size


class Opcode(IntEnum):
    """Frame kinds."""
    HELLO = 1
    LENGTH = 2
    REDUCE_SCATTER = 3
    ALLGATHER = 4
    BCAST = 5
    ERROR = 6


class ReduceOp(IntEnum):
    """Elementwise reductions; all are associative and commutative."""
    SUM = 0
    MIN = 1
    MAX = 2

    def apply(self, acc: np.ndarray, incoming: np.ndarray) -> None:
        """Reduce ``incoming`` into ``acc`` in place."""
        if self is ReduceOp.SUM:
            np.add(acc, incoming, out=acc)
        elif self is ReduceOp.MIN:
            np.minimum(acc, incoming, out=acc)
        else:
            np.maximum(acc, incoming, out=acc)


ELEMENT_TYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_TYPE_CODES = {dtype: code for code, dtype in ELEMENT_TYPES.items()}


class FrameHeader(NamedTuple):
    opcode: Opcode
    op: int
    sequence: int
    length: int


def dtype_code(dtype: np.dtype) -> int:
    """Wire code for a buffer's element type."""
    code = _TYPE_CODES.get(np.dtype(dtype).newbyteorder("<"))
    if code is None:
        raise ArgumentError(f"unsupported buffer element type {dtype}; use float32 or float64")
    return code


def pack_op(op: ReduceOp, type_code: int) -> int:
    return int(op) | (type_code << 8)


def unpack_op(value: int) -> tuple[ReduceOp, np.dtype]:
    try:
        return ReduceOp(value & 0xFF), ELEMENT_TYPES[value >> 8]
    except (ValueError, KeyError):
        raise CollectiveError(f"bad op field 0x{value:04x}") from None


def encode_header(opcode: Opcode, op: int, sequence: int, length: int) -> bytes:
    return HEADER.pack(MAGIC, int(opcode), op, sequence & 0xFFFFFFFF, length)


def decode_header(data: bytes) -> FrameHeader:
    """Parse a frame header.

    Raises:
        CollectiveError: On a bad magic or unknown opcode
    """
    magic, opcode, op, sequence, length = HEADER.unpack(data)
    if magic != MAGIC:
        raise CollectiveError(f"bad frame magic {magic!r}")
    try:
        return FrameHeader(Opcode(opcode), op, sequence, length)
    except ValueError:
        raise CollectiveError(f"unknown opcode {opcode}") from None
