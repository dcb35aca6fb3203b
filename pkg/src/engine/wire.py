"""Driver-worker messages.

Each message is framed by a u32 little-endian length and holds a versioned,
self-describing record::

    u16 version | u32 header_len | JSON header | u32 n_blobs | (u32 len | bytes)*

The JSON header names the message type and its scalar fields; element
payloads travel as blobs.
"""

import json
import socket
import struct
from collections.abc import Sequence
from typing import Any, NamedTuple

from src.core.errors import ProtocolError
from src.core.net import recv_exact

from .dataset import Stage, StageMethod
from .registry import TaskKind, TaskSpec

VERSION = 1
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")


class Message(NamedTuple):
    header: dict[str, Any]
    blobs: list[bytes]

    @property
    def type(self) -> str:
        return self.header.get("type", "")


def encode_message(header: dict[str, Any], blobs: Sequence[bytes] = ()) -> bytes:
    head = json.dumps(header, separators=(",", ":")).encode("utf-8")
    parts = [_U16.pack(VERSION), _U32.pack(len(head)), head, _U32.pack(len(blobs))]
    for blob in blobs:
        parts.append(_U32.pack(len(blob)))
        parts.append(blob)
    return b"".join(parts)


def decode_message(payload: bytes) -> Message:
    """Parse a record.

    Raises:
        ProtocolError: On a version mismatch or a truncated record
    """
    view = memoryview(payload)
    try:
        (version,) = _U16.unpack_from(view, 0)
        if version != VERSION:
            raise ProtocolError(f"unsupported message version {version}")
        (head_len,) = _U32.unpack_from(view, 2)
        pos = 6 + head_len
        header = json.loads(bytes(view[6:pos]))
        (count,) = _U32.unpack_from(view, pos)
        pos += 4
        blobs = []
        for _ in range(count):
            (size,) = _U32.unpack_from(view, pos)
            pos += 4
            if pos + size > len(view):
                raise ProtocolError("truncated blob")
            blobs.append(bytes(view[pos:pos + size]))
            pos += size
    except (struct.error, ValueError) as e:
        raise ProtocolError(f"malformed message: {e}") from e
    if pos != len(view):
        raise ProtocolError(f"{len(view) - pos} trailing bytes after message")
    if not isinstance(header, dict):
        raise ProtocolError("message header must be a JSON object")
    return Message(header, blobs)


def send_message(sock: socket.socket, header: dict[str, Any], blobs: Sequence[bytes] = ()) -> None:
    body = encode_message(header, blobs)
    sock.sendall(_U32.pack(len(body)) + body)


def recv_message(sock: socket.socket) -> Message:
    """Read one framed message.

    Raises:
        ConnectionError: If the peer closes the connection
        ProtocolError: If the record cannot be parsed
    """
    (size,) = _U32.unpack(recv_exact(sock, 4))
    return decode_message(recv_exact(sock, size))


class TaskAssignment(NamedTuple):
    """A partition shipped to a worker."""

    job: int
    partition: int
    kind: str
    elements: list[bytes]
    stages: list[Stage]
    env: dict[str, str]
    output_kind: str
    count_only: bool


def task_message(assignment: TaskAssignment) -> tuple[dict[str, Any], list[bytes]]:
    """Header and blobs for a ``task`` message; stage configs follow the elements."""
    blobs = list(assignment.elements)
    stages = []
    for stage in assignment.stages:
        stages.append(
            {
                "method": stage.method.value,
                "function_id": stage.task.function_id,
                "kind": stage.task.kind.value,
                "output_kind": stage.task.output_kind,
                "group_id": stage.task.group_id,
                "rendezvous": stage.task.rendezvous,
                "config_blob": len(blobs),
            }
        )
        blobs.append(stage.task.config)
    header = {
        "type": "task",
        "job": assignment.job,
        "partition": assignment.partition,
        "kind": assignment.kind,
        "n_elements": len(assignment.elements),
        "stages": stages,
        "env": assignment.env,
        "output_kind": assignment.output_kind,
        "count_only": assignment.count_only,
    }
    return header, blobs


def parse_task(message: Message) -> TaskAssignment:
    """Rebuild a TaskAssignment from a ``task`` message.

    Raises:
        ProtocolError: If fields are missing or inconsistent
    """
    h = message.header
    try:
        n = int(h["n_elements"])
        stages = [
            Stage(
                StageMethod(s["method"]),
                TaskSpec(
                    function_id=s["function_id"],
                    kind=TaskKind(s["kind"]),
                    config=message.blobs[s["config_blob"]],
                    output_kind=s["output_kind"],
                    group_id=s["group_id"],
                    rendezvous=s["rendezvous"],
                ),
            )
            for s in h["stages"]
        ]
        return TaskAssignment(
            job=int(h["job"]),
            partition=int(h["partition"]),
            kind=h["kind"],
            elements=message.blobs[:n],
            stages=stages,
            env={str(k): str(v) for k, v in h["env"].items()},
            output_kind=h["output_kind"],
            count_only=bool(h["count_only"]),
        )
    except (KeyError, IndexError, TypeError, ValueError) as e:
        raise ProtocolError(f"malformed task message: {e}") from e
