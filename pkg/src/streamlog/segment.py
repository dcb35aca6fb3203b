"""Append-only segment files.

Record layout (little-endian)::

    u32 length | u32 crc32c | u32 key_len | key | value

``length`` counts the bytes after the CRC field (4 + key_len + value_len) and
the CRC-32C covers exactly those bytes.
"""

import logging
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import crc32c

from src.core.errors import SegmentError

logger = logging.getLogger(__name__)

SUFFIX = ".seg"
PREFIX = struct.Struct("<II")
KEY_LEN = struct.Struct("<I")
OVERHEAD = PREFIX.size + KEY_LEN.size


@dataclass(frozen=True)
class Record:
    offset: int
    key: bytes
    value: bytes


def encode_record(key: bytes, value: bytes) -> bytes:
    body = KEY_LEN.pack(len(key)) + key + value
    return PREFIX.pack(len(body), crc32c.crc32c(body)) + body


def segment_name(topic: str, partition: int, base_offset: int) -> str:
    return f"{topic}-{partition}-{base_offset:020d}{SUFFIX}"


def parse_segment_name(name: str) -> tuple[str, int, int]:
    """Split ``<topic>-<partition>-<base>.seg``; topics may contain dashes.

    Raises:
        SegmentError: If the name does not follow the pattern
    """
    if not name.endswith(SUFFIX):
        raise SegmentError(f"not a segment file: {name}")
    try:
        topic, partition, base = name[: -len(SUFFIX)].rsplit("-", 2)
        return topic, int(partition), int(base)
    except ValueError:
        raise SegmentError(f"bad segment file name: {name}") from None


class Segment:
    """One segment file plus an in-memory index of record positions."""

    def __init__(self, path: Path, base_offset: int, fsync: bool = False):
        self.path = path
        self.base_offset = base_offset
        self.fsync = fsync
        self.positions: list[int] = []
        self.size = 0
        self._fh = None

    @classmethod
    def create(cls, directory: Path, topic: str, partition: int, base_offset: int, fsync: bool = False) -> "Segment":
        segment = cls(directory / segment_name(topic, partition, base_offset), base_offset, fsync)
        segment.path.touch(exist_ok=False)
        return segment

    @classmethod
    def open(cls, path: Path, fsync: bool = False) -> "Segment":
        """Reopen an existing file, verifying every record and dropping a torn tail."""
        _, _, base = parse_segment_name(path.name)
        segment = cls(path, base, fsync)
        segment._recover()
        return segment

    @property
    def next_offset(self) -> int:
        return self.base_offset + len(self.positions)

    def append(self, data: bytes) -> int:
        """Append one encoded record; returns its offset."""
        if self._fh is None:
            self._fh = open(self.path, "ab")
        self._fh.write(data)
        self._fh.flush()
        if self.fsync:
            os.fsync(self._fh.fileno())
        self.positions.append(self.size)
        self.size += len(data)
        return self.next_offset - 1

    def read(self, from_offset: int, until_offset: int) -> list[Record]:
        """Records with from <= offset < until that live in this segment."""
        lo = max(from_offset, self.base_offset) - self.base_offset
        hi = min(until_offset, self.next_offset) - self.base_offset
        if lo >= hi:
            return []
        start = self.positions[lo]
        end = self.positions[hi] if hi < len(self.positions) else self.size
        with open(self.path, "rb") as f:
            f.seek(start)
            data = f.read(end - start)

        records = []
        pos = 0
        for offset in range(self.base_offset + lo, self.base_offset + hi):
            length, crc = PREFIX.unpack_from(data, pos)
            body = data[pos + PREFIX.size:pos + PREFIX.size + length]
            if len(body) != length or crc32c.crc32c(body) != crc:
                raise SegmentError(f"{self.path.name}: checksum mismatch at offset {offset}")
            (key_len,) = KEY_LEN.unpack_from(body, 0)
            key = body[KEY_LEN.size:KEY_LEN.size + key_len]
            records.append(Record(offset, key, body[KEY_LEN.size + key_len:]))
            pos += PREFIX.size + length
        return records

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def _recover(self) -> None:
        data = self.path.read_bytes()
        pos = 0
        while pos < len(data):
            if pos + OVERHEAD > len(data):
                break
            length, crc = PREFIX.unpack_from(data, pos)
            end = pos + PREFIX.size + length
            if length < KEY_LEN.size or end > len(data):
                break
            body = data[pos + PREFIX.size:end]
            if crc32c.crc32c(body) != crc or KEY_LEN.unpack_from(body, 0)[0] > length - KEY_LEN.size:
                break
            self.positions.append(pos)
            pos = end
        self.size = pos
        if pos < len(data):
            logger.warning(
                "%s: dropping %d bytes of torn or corrupt tail after offset %d",
                self.path.name,
                len(data) - pos,
                self.next_offset,
            )
            with open(self.path, "r+b") as f:
                f.truncate(pos)
