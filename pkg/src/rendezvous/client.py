"""Rendezvous client session."""

import logging
import os
import socket
from collections.abc import Mapping
from enum import Enum

from src.core.errors import (
    ArgumentError,
    GroupFailureError,
    InitError,
    ProtocolError,
    PutError,
    SessionStateError,
)
from src.core.net import Endpoint

from . import protocol as proto

logger = logging.getLogger(__name__)


class SessionState(Enum):
    """Lifecycle of a client session."""
    CONNECTED = "connected"
    INITIALIZED = "initialized"
    FINALIZED = "finalized"


class ClientSession:
    """A rank's connection to its process group.

    A session is owned by one logical thread at a time; it holds no
    thread-local state and may be handed between threads.
    """

    def __init__(self, sock: socket.socket, server_endpoint: Endpoint, group_id: str, rank: int):
        self.server_endpoint = server_endpoint
        self.group_id = group_id
        self.rank = rank
        self.size = 0
        self.state = SessionState.CONNECTED
        self._sock = sock
        self._rfile = sock.makefile("rb")

    def put(self, key: str, value: str) -> None:
        """Store an immutable entry.

        Raises:
            PutError: If the key already exists
            ProtocolError: If the encoded key or value exceeds the limits
        """
        self._require_initialized()
        ekey, evalue = self._encode_key(key), proto.encode(value)
        if len(evalue) > proto.MAX_VALUE_BYTES:
            raise ProtocolError(proto.VALUE_TOO_LONG)
        cmd, fields = self._request(proto.format_record("put", ("key", ekey), ("value", evalue)))
        if cmd == "put_err":
            raise PutError(f"put {key!r}: {fields.get('reason')}")
        self._expect(cmd, "put_ack")

    def get(self, key: str) -> str | None:
        """Look up a key; ``None`` is the negative (absent) response."""
        self._require_initialized()
        cmd, fields = self._request(proto.format_record("get", ("key", self._encode_key(key))))
        if cmd == "get_neg":
            return None
        self._expect(cmd, "get_ack")
        return proto.decode(fields["value"])

    def barrier(self) -> int:
        """Block until all ranks of the group enter the barrier.

        Returns:
            The epoch entered

        Raises:
            GroupFailureError: If a peer fails while this rank waits
        """
        self._require_initialized()
        cmd, fields = self._request(proto.format_record("barrier"))
        if cmd == "group_err":
            raise GroupFailureError(f"group {self.group_id}: {fields.get('reason')}")
        self._expect(cmd, "barrier_ack")
        return int(fields["epoch"])

    def finalize(self) -> None:
        """Leave the group and close the connection."""
        self._require_initialized()
        cmd, _ = self._request(proto.format_record("finalize"))
        self._expect(cmd, "finalize_ack")
        self.state = SessionState.FINALIZED
        self._close_socket()
        logger.debug("rank %d finalized in group %s", self.rank, self.group_id)

    def close(self) -> None:
        """Drop the connection without finalizing (the server fails the group)."""
        if self.state is SessionState.INITIALIZED:
            self.state = SessionState.FINALIZED
        self._close_socket()

    def __enter__(self) -> "ClientSession":
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        if exc_type is None and self.state is SessionState.INITIALIZED:
            self.finalize()
        else:
            self.close()

    def _init(self) -> None:
        record = proto.format_record(
            "init", ("group", proto.encode(self.group_id)), ("rank", str(self.rank))
        )
        cmd, fields = self._request(record)
        if cmd == "init_err":
            self._close_socket()
            raise InitError(f"init {self.group_id}/{self.rank}: {fields.get('reason')}")
        self._expect(cmd, "init_ack")
        self.size = int(fields["size"])
        self.state = SessionState.INITIALIZED

    def _require_initialized(self) -> None:
        if self.state is not SessionState.INITIALIZED:
            raise SessionStateError(f"session is {self.state.value}, not initialized")

    def _encode_key(self, key: str) -> str:
        ekey = proto.encode(key)
        if len(ekey) > proto.MAX_KEY_BYTES:
            raise ProtocolError(proto.KEY_TOO_LONG)
        return ekey

    def _request(self, record: bytes) -> tuple[str, dict[str, str]]:
        try:
            self._sock.sendall(record)
            line = self._rfile.readline(proto.MAX_LINE_BYTES + 1)
        except OSError as e:
            raise ProtocolError(f"rendezvous connection failed: {e}") from e
        if not line:
            raise ProtocolError("rendezvous server closed the connection")
        cmd, fields = proto.parse_record(line)
        if cmd == "error":
            reason = fields.get("reason", "")
            if reason == proto.NOT_INITIALIZED:
                raise SessionStateError(reason)
            raise ProtocolError(reason)
        return cmd, fields

    @staticmethod
    def _expect(cmd: str, expected: str) -> None:
        if cmd != expected:
            raise ProtocolError(f"expected {expected}, got {cmd}")

    def _close_socket(self) -> None:
        try:
            self._rfile.close()
            self._sock.close()
        except OSError:
            pass


def client_init(
    server_endpoint: str | Endpoint,
    group_id: str,
    rank: int,
    timeout: float | None = None,
) -> ClientSession:
    """Connect to a rendezvous server and join a group.

    Args:
        server_endpoint: host:port of the server
        group_id: Group to join
        rank: Caller-assigned rank in [0, size)
        timeout: Socket timeout; None blocks (barriers may wait indefinitely)

    Returns:
        An initialized session whose ``size`` is the group size

    Raises:
        InitError: Unknown group, duplicate or out-of-range rank
    """
    if isinstance(server_endpoint, str):
        server_endpoint = Endpoint.parse(server_endpoint)
    try:
        sock = socket.create_connection(tuple(server_endpoint), timeout=timeout)
    except OSError as e:
        raise InitError(f"cannot reach rendezvous server {server_endpoint}: {e}") from e
    sock.settimeout(timeout)
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    session = ClientSession(sock, server_endpoint, group_id, rank)
    session._init()
    logger.debug("rank %d joined %s (size %d)", rank, group_id, session.size)
    return session


def client_from_env(environ: Mapping[str, str] | None = None, timeout: float | None = None) -> ClientSession:
    """Join the group named by RDV_PORT / RDV_RANK / RDV_GROUP.

    Raises:
        ArgumentError: If RDV_PORT or RDV_RANK is missing or malformed
    """
    env = os.environ if environ is None else environ
    port, rank = env.get(proto.ENV_PORT), env.get(proto.ENV_RANK)
    if not port or rank is None:
        raise ArgumentError(f"{proto.ENV_PORT} and {proto.ENV_RANK} must be set")
    try:
        rank_number = int(rank)
    except ValueError:
        raise ArgumentError(f"{proto.ENV_RANK} is not an integer: {rank!r}") from None
    return client_init(port, env.get(proto.ENV_GROUP, proto.DEFAULT_GROUP), rank_number, timeout)
