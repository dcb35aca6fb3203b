"""Threaded rendezvous server: per-group key-value spaces and barriers.

Only the information-exchange half of a process manager is implemented;
processes are launched elsewhere (the engine's worker pool).
"""

import logging
import socket
import socketserver
import threading
from dataclasses import dataclass, field

from src.core.errors import (
    ConfigurationError,
    GroupFailureError,
    InitError,
    ProtocolError,
    PutError,
    StartupError,
)
from src.core.net import Endpoint

from . import protocol as proto

logger = logging.getLogger(__name__)


@dataclass
class KeyValueSpace:
    """Immutable-entry key-value space; keys and values are stored encoded."""

    name: str
    entries: dict[str, str] = field(default_factory=dict)


class ProcessGroup:
    """Membership, KVS and barrier state of one group.

    All mutations happen under ``self.cond`` so every group is linearizable;
    distinct groups never share a lock.
    """

    def __init__(self, group_id: str, size: int):
        self.group_id = group_id
        self.size = size
        self.cond = threading.Condition()
        self.kvs = KeyValueSpace(group_id)
        self.joined: set[int] = set()
        self.departed: set[int] = set()
        self.barrier_epoch = 0
        self.barrier_waiters: set[int] = set()
        self.failure: str | None = None
        self.closed = False

    def join(self, rank: int) -> None:
        with self.cond:
            if not 0 <= rank < self.size:
                raise InitError(proto.RANK_OUT_OF_RANGE)
            if rank in self.joined:
                raise InitError(proto.DUPLICATE_RANK)
            if self.failure is not None:
                raise InitError(proto.GROUP_FAILED)
            self.joined.add(rank)
            self.departed.discard(rank)
            logger.debug("group %s: rank %d joined (%d/%d)", self.group_id, rank, len(self.joined), self.size)

    def leave(self, rank: int, failure: str | None = None) -> None:
        """Remove a rank; ``failure`` marks the whole group failed."""
        with self.cond:
            self.joined.discard(rank)
            self.barrier_waiters.discard(rank)
            if failure is not None and self.failure is None:
                self.failure = failure
                logger.warning("group %s failed: rank %d %s", self.group_id, rank, failure)
                self.cond.notify_all()
            if not self.joined:
                self._reset()

    def fail(self, reason: str) -> None:
        with self.cond:
            if self.failure is None:
                self.failure = reason
            self.cond.notify_all()

    def close(self, reason: str) -> None:
        """Fail the group for good: it is never reset, so late ranks cannot join."""
        with self.cond:
            self.closed = True
            if self.failure is None:
                self.failure = reason
                logger.warning("group %s closed: %s", self.group_id, reason)
            self.cond.notify_all()

    def put(self, key: str, value: str) -> None:
        with self.cond:
            if key in self.kvs.entries:
                raise PutError(proto.DUPLICATE_KEY)
            self.kvs.entries[key] = value

    def get(self, key: str) -> str | None:
        with self.cond:
            return self.kvs.entries.get(key)

    def barrier(self, rank: int) -> int:
        """Block until every rank has entered the current epoch.

        Returns:
            The epoch this rank entered

        Raises:
            GroupFailureError: If the group fails before the epoch completes
        """
        with self.cond:
            if self.failure is not None:
                raise GroupFailureError(self.failure)
            if self.departed:
                # a finalized rank never enters again, so this epoch cannot complete
                raise GroupFailureError(proto.PEER_FINALIZED)
            epoch = self.barrier_epoch
            self.barrier_waiters.add(rank)
            if len(self.barrier_waiters) == self.size:
                self.barrier_epoch += 1
                self.barrier_waiters.clear()
                self.cond.notify_all()
                return epoch
            while self.barrier_epoch == epoch and self.failure is None:
                self.cond.wait()
            if self.barrier_epoch == epoch:
                raise GroupFailureError(self.failure)
            return epoch

    def finalize(self, rank: int) -> None:
        """Leave cleanly; ranks still blocked in a barrier see a group failure."""
        with self.cond:
            waiting = bool(self.barrier_waiters - {rank})
            self.leave(rank, failure=proto.PEER_FINALIZED if waiting else None)
            if self.joined:
                self.departed.add(rank)

    def _reset(self) -> None:
        if self.closed:
            return
        if self.failure is not None or self.kvs.entries or self.barrier_epoch:
            logger.info("group %s reset for reuse", self.group_id)
        self.kvs = KeyValueSpace(self.group_id)
        self.barrier_epoch = 0
        self.barrier_waiters.clear()
        self.departed.clear()
        self.failure = None


class RendezvousHandler(socketserver.StreamRequestHandler):
    """One client connection: an init followed by put/get/barrier/finalize."""

    server: "RendezvousServer"

    def setup(self) -> None:
        super().setup()
        self.group: ProcessGroup | None = None
        self.rank = -1
        self.server.track(self.connection)
        self.action_handlers = {
            "init": self.handle_init,
            "put": self.handle_put,
            "get": self.handle_get,
            "barrier": self.handle_barrier,
            "finalize": self.handle_finalize,
        }

    def handle(self) -> None:
        while True:
            try:
                line = self.rfile.readline(proto.MAX_LINE_BYTES + 1)
            except OSError:
                break
            if not line:
                break
            try:
                cmd, fields = proto.parse_record(line)
            except ProtocolError:
                self.reply("error", ("reason", proto.MALFORMED))
                if not line.endswith(b"\n"):
                    break
                continue
            logger.debug("rank %d -> %s", self.rank, cmd)
            handler = self.action_handlers.get(cmd)
            if handler is None:
                self.reply("error", ("reason", proto.UNKNOWN_COMMAND))
                continue
            if cmd != "init" and self.group is None:
                self.reply("error", ("reason", proto.NOT_INITIALIZED))
                continue
            try:
                handler(fields)
            except (KeyError, ProtocolError):
                self.reply("error", ("reason", proto.MALFORMED))

    def finish(self) -> None:
        if self.group is not None:
            self.group.leave(self.rank, failure=proto.PEER_DISCONNECTED)
            self.group = None
        self.server.untrack(self.connection)
        try:
            super().finish()
        except OSError:
            pass

    def reply(self, cmd: str, *fields: tuple[str, str]) -> None:
        try:
            self.wfile.write(proto.format_record(cmd, *fields))
        except OSError:
            logger.debug("reply %s to rank %d dropped", cmd, self.rank)

    def handle_init(self, fields: dict[str, str]) -> None:
        if self.group is not None:
            self.reply("init_err", ("reason", proto.ALREADY_INITIALIZED))
            return
        group = self.server.groups.get(proto.decode(fields["group"]))
        if group is None:
            self.reply("init_err", ("reason", proto.UNKNOWN_GROUP))
            return
        try:
            rank = int(fields["rank"])
        except ValueError:
            self.reply("error", ("reason", proto.MALFORMED))
            return
        try:
            group.join(rank)
        except InitError as e:
            self.reply("init_err", ("reason", str(e)))
            return
        self.group, self.rank = group, rank
        self.reply("init_ack", ("size", str(group.size)))

    def handle_put(self, fields: dict[str, str]) -> None:
        key, value = fields["key"], fields["value"]
        if not self._within_limits(key, value):
            return
        try:
            self.group.put(key, value)
        except PutError as e:
            self.reply("put_err", ("reason", str(e)))
            return
        self.reply("put_ack")

    def handle_get(self, fields: dict[str, str]) -> None:
        key = fields["key"]
        if not self._within_limits(key, ""):
            return
        value = self.group.get(key)
        if value is None:
            self.reply("get_neg")
        else:
            self.reply("get_ack", ("value", value))

    def handle_barrier(self, fields: dict[str, str]) -> None:
        try:
            epoch = self.group.barrier(self.rank)
        except GroupFailureError as e:
            self.reply("group_err", ("reason", str(e)))
            return
        self.reply("barrier_ack", ("epoch", str(epoch)))

    def handle_finalize(self, fields: dict[str, str]) -> None:
        self.group.finalize(self.rank)
        self.group = None
        self.reply("finalize_ack")

    def _within_limits(self, key: str, value: str) -> bool:
        if len(key) > self.server.max_key_bytes:
            self.reply("error", ("reason", proto.KEY_TOO_LONG))
            return False
        if len(value) > self.server.max_value_bytes:
            self.reply("error", ("reason", proto.VALUE_TOO_LONG))
            return False
        return True


class RendezvousServer(socketserver.ThreadingTCPServer):
    """TCP server holding the declared process groups."""

    allow_reuse_address = True
    daemon_threads = True
    block_on_close = False

    def __init__(
        self,
        address: tuple[str, int],
        max_key_bytes: int = proto.MAX_KEY_BYTES,
        max_value_bytes: int = proto.MAX_VALUE_BYTES,
    ):
        super().__init__(address, RendezvousHandler)
        self.groups: dict[str, ProcessGroup] = {}
        self.groups_lock = threading.Lock()
        self.max_key_bytes = max_key_bytes
        self.max_value_bytes = max_value_bytes
        self._connections: set[socket.socket] = set()
        self._conn_lock = threading.Lock()

    def declare_group(self, group_id: str, size: int) -> ProcessGroup:
        if size < 1:
            raise ConfigurationError(f"group {group_id!r} size must be >= 1, got {size}")
        with self.groups_lock:
            if group_id in self.groups:
                raise ConfigurationError(f"duplicate group id {group_id!r}")
            group = ProcessGroup(group_id, size)
            self.groups[group_id] = group
        logger.info("declared group %s of size %d", group_id, size)
        return group

    def remove_group(self, group_id: str) -> None:
        """Forget a group; members still connected to it see ``group_failed``."""
        with self.groups_lock:
            group = self.groups.pop(group_id, None)
        if group is not None:
            group.close(proto.GROUP_FAILED)
            logger.debug("removed group %s", group_id)

    def track(self, conn: socket.socket) -> None:
        with self._conn_lock:
            self._connections.add(conn)

    def untrack(self, conn: socket.socket) -> None:
        with self._conn_lock:
            self._connections.discard(conn)

    def close_connections(self) -> None:
        with self._conn_lock:
            conns = list(self._connections)
        for conn in conns:
            try:
                conn.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass


class ServerHandle:
    """A running rendezvous server with graceful shutdown."""

    def __init__(self, server: RendezvousServer):
        self._server = server
        host, port = server.server_address[:2]
        self.endpoint = Endpoint(host, port)
        self._thread = threading.Thread(
            target=server.serve_forever, name=f"rendezvous-{port}", daemon=True
        )
        self._thread.start()
        self._closed = False

    @property
    def groups(self) -> dict[str, ProcessGroup]:
        return self._server.groups

    def declare_group(self, group_id: str, size: int) -> None:
        """Add a group to a running server."""
        self._server.declare_group(group_id, size)

    def remove_group(self, group_id: str) -> None:
        self._server.remove_group(group_id)

    def close_group(self, group_id: str, reason: str) -> None:
        """Fail a group permanently, waking every rank blocked in it."""
        group = self._server.groups.get(group_id)
        if group is not None:
            group.close(reason)

    def shutdown(self) -> None:
        """Fail waiting barriers, stop accepting and close client connections."""
        if self._closed:
            return
        self._closed = True
        for group in list(self._server.groups.values()):
            group.fail(proto.SERVER_SHUTDOWN)
        self._server.shutdown()
        self._server.close_connections()
        self._server.server_close()
        self._thread.join(timeout=5)
        logger.info("rendezvous server %s stopped", self.endpoint)

    def wait(self) -> None:
        """Block until the server thread exits."""
        while self._thread.is_alive():
            self._thread.join(timeout=0.5)

    def __enter__(self) -> "ServerHandle":
        return self

    def __exit__(self, *exc) -> None:
        self.shutdown()


def start_server(
    bind_endpoint: str | Endpoint,
    groups: list[tuple[str, int]],
    max_key_bytes: int = proto.MAX_KEY_BYTES,
    max_value_bytes: int = proto.MAX_VALUE_BYTES,
) -> ServerHandle:
    """Start a rendezvous server in a background thread.

    Args:
        bind_endpoint: host:port to bind; port 0 picks a free port
        groups: (group_id, size) pairs declared up front

    Returns:
        Handle exposing the bound endpoint and shutdown()

    Raises:
        ConfigurationError: On a duplicate group id or a size below 1
        StartupError: If the endpoint cannot be bound
    """
    if isinstance(bind_endpoint, str):
        bind_endpoint = Endpoint.parse(bind_endpoint)

    seen: set[str] = set()
    for group_id, size in groups:
        if group_id in seen:
            raise ConfigurationError(f"duplicate group id {group_id!r}")
        if size < 1:
            raise ConfigurationError(f"group {group_id!r} size must be >= 1, got {size}")
        seen.add(group_id)

    try:
        server = RendezvousServer(
            (bind_endpoint.host, bind_endpoint.port), max_key_bytes, max_value_bytes
        )
    except OSError as e:
        raise StartupError(f"cannot bind rendezvous server to {bind_endpoint}: {e}") from e

    for group_id, size in groups:
        server.declare_group(group_id, size)
    handle = ServerHandle(server)
    logger.info("rendezvous server listening on %s", handle.endpoint)
    return handle
