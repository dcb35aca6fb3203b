"""Topic/partition message log on top of segment files.

Directory layout under the log root::

    <topic>/topic.json                       {"name", "partitions"}
    <topic>/<topic>-<p>.json                 {"topic", "partition", "next_offset", "segments"}
    <topic>/<topic>-<p>-<base:020d>.seg      segment files

Reopening a log rescans every segment; the scan wins over the sidecars.
"""

import json
import logging
import os
import re
import threading
from dataclasses import dataclass
from pathlib import Path

from src.core.config import get_settings
from src.core.errors import ArgumentError, OffsetRangeError, SegmentError, TopicError

from .segment import OVERHEAD, SUFFIX, Record, Segment, encode_record, parse_segment_name

logger = logging.getLogger(__name__)

TOPIC_FILE = "topic.json"
_TOPIC_NAME = re.compile(r"^[A-Za-z0-9._-]+$")


@dataclass(frozen=True)
class OffsetRange:
    """Half-open window [from_offset, until_offset) of one topic partition."""

    topic: str
    partition: int
    from_offset: int
    until_offset: int

    def __post_init__(self) -> None:
        if self.partition < 0 or self.from_offset < 0 or self.until_offset < self.from_offset:
            raise OffsetRangeError(
                f"invalid range {self.topic}[{self.partition}] {self.from_offset}..{self.until_offset}"
            )

    @property
    def count(self) -> int:
        return self.until_offset - self.from_offset


def _write_json(path: Path, payload: dict, fsync: bool) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8") as f:
        json.dump(payload, f)
        f.flush()
        if fsync:
            os.fsync(f.fileno())
    os.replace(tmp, path)


class PartitionLog:
    """Segments of one topic partition; appends are serialized by a lock."""

    def __init__(self, directory: Path, topic: str, partition: int, segment_bytes: int, fsync: bool):
        self.directory = directory
        self.topic = topic
        self.partition = partition
        self.segment_bytes = segment_bytes
        self.fsync = fsync
        self.segments: list[Segment] = []
        self._lock = threading.Lock()

    @property
    def sidecar(self) -> Path:
        return self.directory / f"{self.topic}-{self.partition}.json"

    @property
    def next_offset(self) -> int:
        return self.segments[-1].next_offset if self.segments else 0

    @classmethod
    def create(cls, directory: Path, topic: str, partition: int, segment_bytes: int, fsync: bool) -> "PartitionLog":
        log = cls(directory, topic, partition, segment_bytes, fsync)
        log.segments.append(Segment.create(directory, topic, partition, 0, fsync))
        log._save()
        return log

    @classmethod
    def open(cls, directory: Path, topic: str, partition: int, segment_bytes: int, fsync: bool) -> "PartitionLog":
        log = cls(directory, topic, partition, segment_bytes, fsync)
        paths = []
        for path in directory.glob(f"*{SUFFIX}"):
            name_topic, name_partition, base = parse_segment_name(path.name)
            if name_topic == topic and name_partition == partition:
                paths.append((base, path))
        for _, path in sorted(paths):
            segment = Segment.open(path, fsync)
            if log.segments and segment.base_offset != log.segments[-1].next_offset:
                raise SegmentError(
                    f"{path.name}: base offset {segment.base_offset} does not follow "
                    f"{log.segments[-1].next_offset}"
                )
            log.segments.append(segment)
        if not log.segments:
            log.segments.append(Segment.create(directory, topic, partition, 0, fsync))

        recorded = log._load_sidecar_offset()
        if recorded is not None and recorded != log.next_offset:
            logger.warning(
                "%s[%d]: sidecar says next_offset %d, segments hold %d; using segments",
                topic, partition, recorded, log.next_offset,
            )
        log._save()
        return log

    def append(self, key: bytes, value: bytes) -> int:
        data = encode_record(key, value)
        if len(data) > self.segment_bytes:
            raise SegmentError(
                f"record of {len(data)} bytes exceeds segment size {self.segment_bytes}"
            )
        with self._lock:
            active = self.segments[-1]
            if active.size and active.size + len(data) > self.segment_bytes:
                active.close()
                active = Segment.create(self.directory, self.topic, self.partition, active.next_offset, self.fsync)
                self.segments.append(active)
                logger.info("%s[%d]: rolled segment at offset %d", self.topic, self.partition, active.base_offset)
            offset = active.append(data)
            self._save()
        return offset

    def read(self, from_offset: int, until_offset: int) -> list[Record]:
        with self._lock:
            segments = list(self.segments)
            available = self.next_offset
        if until_offset > available:
            raise OffsetRangeError(
                f"{self.topic}[{self.partition}]: until {until_offset} beyond next offset {available}"
            )
        records: list[Record] = []
        for segment in segments:
            if segment.next_offset <= from_offset or segment.base_offset >= until_offset:
                continue
            records.extend(segment.read(from_offset, until_offset))
        return records

    def close(self) -> None:
        with self._lock:
            for segment in self.segments:
                segment.close()

    def _load_sidecar_offset(self) -> int | None:
        try:
            return int(json.loads(self.sidecar.read_text(encoding="utf-8"))["next_offset"])
        except (OSError, ValueError, KeyError, TypeError):
            return None

    def _save(self) -> None:
        _write_json(
            self.sidecar,
            {
                "topic": self.topic,
                "partition": self.partition,
                "next_offset": self.next_offset,
                "segments": [s.path.name for s in self.segments],
            },
            self.fsync,
        )


class MessageLog:
    """Topics of partitioned, offset-addressed records stored under ``root``."""

    def __init__(self, root: str | Path, segment_bytes: int | None = None, fsync: bool | None = None):
        settings = get_settings().streamlog
        self.root = Path(root)
        self.segment_bytes = segment_bytes or settings.segment_bytes
        self.fsync = settings.fsync if fsync is None else fsync
        if self.segment_bytes <= OVERHEAD:
            raise ArgumentError(f"segment_bytes must exceed {OVERHEAD}")
        self._topics: dict[str, list[PartitionLog]] = {}
        self._lock = threading.Lock()
        self.root.mkdir(parents=True, exist_ok=True)
        self._reopen()

    def create_topic(self, name: str, partitions: int) -> None:
        """Create ``name`` with empty partition logs.

        Raises:
            TopicError: If the topic already exists
            ArgumentError: On a bad name or partitions < 1
        """
        if not _TOPIC_NAME.match(name):
            raise ArgumentError(f"invalid topic name {name!r}")
        if partitions < 1:
            raise ArgumentError(f"partitions must be >= 1, got {partitions}")
        with self._lock:
            if name in self._topics:
                raise TopicError(f"topic {name!r} already exists")
            directory = self.root / name
            directory.mkdir(parents=True, exist_ok=True)
            logs = [
                PartitionLog.create(directory, name, p, self.segment_bytes, self.fsync)
                for p in range(partitions)
            ]
            _write_json(directory / TOPIC_FILE, {"name": name, "partitions": partitions}, self.fsync)
            self._topics[name] = logs
        logger.info("created topic %s with %d partitions", name, partitions)

    def has_topic(self, name: str) -> bool:
        return name in self._topics

    def topics(self) -> list[str]:
        return sorted(self._topics)

    def partitions(self, topic: str) -> int:
        return len(self._logs(topic))

    def produce(self, topic: str, partition: int, key: bytes, value: bytes) -> int:
        """Append a record; returns its offset.

        Raises:
            TopicError: Unknown topic or partition
            SegmentError: If the record cannot fit in one segment
        """
        return self._partition(topic, partition).append(bytes(key), bytes(value))

    def read_range(self, offsets: OffsetRange) -> list[Record]:
        """Exactly the records in ``offsets``, in offset order.

        Raises:
            OffsetRangeError: If the window reaches past next_offset
        """
        return self._partition(offsets.topic, offsets.partition).read(
            offsets.from_offset, offsets.until_offset
        )

    def next_offset(self, topic: str, partition: int = 0) -> int:
        return self._partition(topic, partition).next_offset

    def close(self) -> None:
        for logs in self._topics.values():
            for log in logs:
                log.close()

    def __enter__(self) -> "MessageLog":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _logs(self, topic: str) -> list[PartitionLog]:
        logs = self._topics.get(topic)
        if logs is None:
            raise TopicError(f"unknown topic {topic!r}")
        return logs

    def _partition(self, topic: str, partition: int) -> PartitionLog:
        logs = self._logs(topic)
        if not 0 <= partition < len(logs):
            raise TopicError(f"topic {topic!r} has no partition {partition}")
        return logs[partition]

    def _reopen(self) -> None:
        for meta_path in sorted(self.root.glob(f"*/{TOPIC_FILE}")):
            try:
                meta = json.loads(meta_path.read_text(encoding="utf-8"))
                name, count = meta["name"], int(meta["partitions"])
            except (OSError, ValueError, KeyError) as e:
                raise SegmentError(f"unreadable topic metadata {meta_path}: {e}") from e
            directory = meta_path.parent
            self._topics[name] = [
                PartitionLog.open(directory, name, p, self.segment_bytes, self.fsync)
                for p in range(count)
            ]
            logger.info(
                "reopened topic %s: next offsets %s",
                name,
                [log.next_offset for log in self._topics[name]],
            )
