"""Full-mesh communicator bootstrapped through the rendezvous server.

Collectives run over direct rank-to-rank TCP connections:

* allreduce: ring reduce-scatter followed by ring allgather
  (2·(size-1) neighbour exchanges). Every chunk is reduced by exactly one
  rank and then copied, so all ranks end with bit-identical buffers.
* broadcast: binomial tree rooted at ``root``.
* barrier: zero-length allreduce.

A failure inside any collective is sent to every peer as an ERROR frame and
leaves the communicator unusable.
"""

import logging
import socket
import struct
import threading
from collections.abc import Iterator
from concurrent.futures import Future, ThreadPoolExecutor
from concurrent.futures import TimeoutError as FutureTimeout
from contextlib import contextmanager

import numpy as np

from src.core.config import get_settings
from src.core.errors import ArgumentError, CollectiveError, ConnectError, GroupFailureError
from src.core.net import Endpoint, recv_exact
from src.rendezvous.client import ClientSession

from .frames import (
    ELEMENT_TYPES,
    HEADER_SIZE,
    FrameHeader,
    Opcode,
    ReduceOp,
    decode_header,
    dtype_code,
    encode_header,
    pack_op,
    unpack_op,
)

logger = logging.getLogger(__name__)

_COUNT = struct.Struct("<I")


def chunk_bounds(length: int, parts: int) -> list[tuple[int, int]]:
    """Split ``length`` into ``parts`` contiguous chunks; the last absorbs the remainder."""
    step = length // parts
    bounds = [(i * step, (i + 1) * step) for i in range(parts - 1)]
    bounds.append(((parts - 1) * step, length))
    return bounds


class Communicator:
    """Rank/size plus one established connection per peer."""

    def __init__(
        self,
        rank: int,
        size: int,
        peer_endpoints: list[str],
        connections: dict[int, socket.socket],
        step_timeout: float,
    ):
        self.rank = rank
        self.size = size
        self.peer_endpoints = peer_endpoints
        self.step_timeout = step_timeout
        self._conns = connections
        self._send_locks = {peer: threading.Lock() for peer in connections}
        self._sender = (
            ThreadPoolExecutor(max_workers=1, thread_name_prefix=f"comm{rank}-send")
            if size > 1
            else None
        )
        self._seq = 0
        self._broken: str | None = None

    @property
    def connection_count(self) -> int:
        return len(self._conns)

    def allreduce(self, buf: np.ndarray, op: ReduceOp = ReduceOp.SUM) -> np.ndarray:
        """Elementwise reduction of every rank's buffer, delivered to all ranks.

        Args:
            buf: float32 (or float64) array; all ranks pass equal lengths
            op: Reduction applied elementwise

        Returns:
            A new array of the input's shape holding the reduction
        """
        arr = np.asarray(buf)
        type_code = dtype_code(arr.dtype)
        dtype = ELEMENT_TYPES[type_code]
        shape = arr.shape
        work = np.array(arr, dtype=dtype, copy=True).reshape(-1)
        if self.size == 1:
            return work.reshape(shape)

        op_field = pack_op(op, type_code)
        with self._collective("allreduce"):
            self._exchange_lengths(work.size, op_field)
            self._ring(work, op, op_field, dtype)
        return work.reshape(shape)

    def broadcast(self, root: int, buf: np.ndarray | None = None) -> np.ndarray:
        """Deliver the root's buffer to every rank over a binomial tree.

        Non-root ranks may pass ``None``; the length and element type come
        from the root.
        """
        if not 0 <= root < self.size:
            raise ArgumentError(f"broadcast root {root} outside [0, {self.size})")
        if self.rank == root:
            if buf is None:
                raise ArgumentError("broadcast root must supply a buffer")
            arr = np.asarray(buf)
            type_code = dtype_code(arr.dtype)
            out = np.array(arr, dtype=ELEMENT_TYPES[type_code], copy=True).reshape(-1)
            if self.size == 1:
                return out
            op_field = pack_op(ReduceOp.SUM, type_code)
            payload = out.tobytes()
        elif self.size == 1:
            raise ArgumentError("broadcast root must supply a buffer")

        with self._collective("broadcast"):
            relative = (self.rank - root) % self.size
            mask = 1
            while mask < self.size:
                if relative & mask:
                    header, payload = self._recv((self.rank - mask) % self.size, Opcode.BCAST)
                    op_field = header.op
                    _, dtype = unpack_op(op_field)
                    out = np.frombuffer(payload, dtype=dtype).copy()
                    break
                mask <<= 1
            mask >>= 1
            while mask > 0:
                if relative + mask < self.size:
                    self._send((self.rank + mask) % self.size, Opcode.BCAST, op_field, payload)
                mask >>= 1
        return out

    def barrier(self) -> None:
        """Return only after every rank has entered the barrier."""
        self.allreduce(np.zeros(0, dtype=np.float32))

    def close(self) -> None:
        """Close peer connections; peers blocked on this rank see a failure."""
        if self._sender is not None:
            self._sender.shutdown(wait=False)
        for conn in self._conns.values():
            try:
                conn.close()
            except OSError:
                pass
        self._conns = {}
        if self._broken is None:
            self._broken = "closed"

    def __enter__(self) -> "Communicator":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    @contextmanager
    def _collective(self, name: str) -> Iterator[None]:
        if self._broken is not None:
            raise CollectiveError(f"rank {self.rank}: communicator unusable ({self._broken})")
        self._seq += 1
        try:
            yield
        except CollectiveError as e:
            self._abort(str(e))
            raise
        except (OSError, FutureTimeout, ValueError, struct.error) as e:
            self._abort(f"{name} failed on rank {self.rank}: {e}")
            raise CollectiveError(f"{name} failed on rank {self.rank}: {e}") from e

    def _abort(self, reason: str) -> None:
        if self._broken is not None:
            return
        self._broken = reason
        logger.warning("rank %d aborting collectives: %s", self.rank, reason)
        payload = reason.encode("utf-8")[:1024]
        frame = encode_header(Opcode.ERROR, 0, self._seq, len(payload)) + payload
        for peer, conn in self._conns.items():
            lock = self._send_locks[peer]
            if not lock.acquire(timeout=1.0):
                continue
            try:
                conn.sendall(frame)
            except OSError:
                pass
            finally:
                lock.release()

    def _exchange_lengths(self, count: int, op_field: int) -> None:
        right, left = (self.rank + 1) % self.size, (self.rank - 1) % self.size
        pending = self._post(right, Opcode.LENGTH, op_field, _COUNT.pack(count))
        header, payload = self._recv(left, Opcode.LENGTH)
        self._complete(pending)
        (theirs,) = _COUNT.unpack(payload)
        if theirs != count or header.op != op_field:
            raise CollectiveError(
                f"rank {self.rank}: buffer mismatch with rank {left} "
                f"(length {count} vs {theirs}, op 0x{op_field:04x} vs 0x{header.op:04x})"
            )

    def _ring(self, work: np.ndarray, op: ReduceOp, op_field: int, dtype: np.dtype) -> None:
        p, r = self.size, self.rank
        right, left = (r + 1) % p, (r - 1) % p
        bounds = chunk_bounds(work.size, p)

        for step in range(p - 1):
            lo, hi = bounds[(r - step) % p]
            pending = self._post(right, Opcode.REDUCE_SCATTER, op_field, work[lo:hi].tobytes())
            lo, hi = bounds[(r - step - 1) % p]
            _, payload = self._recv(left, Opcode.REDUCE_SCATTER, (hi - lo) * dtype.itemsize)
            op.apply(work[lo:hi], np.frombuffer(payload, dtype=dtype))
            self._complete(pending)

        for step in range(p - 1):
            lo, hi = bounds[(r + 1 - step) % p]
            pending = self._post(right, Opcode.ALLGATHER, op_field, work[lo:hi].tobytes())
            lo, hi = bounds[(r - step) % p]
            _, payload = self._recv(left, Opcode.ALLGATHER, (hi - lo) * dtype.itemsize)
            work[lo:hi] = np.frombuffer(payload, dtype=dtype)
            self._complete(pending)

    def _post(self, peer: int, opcode: Opcode, op_field: int, payload: bytes) -> Future:
        return self._sender.submit(self._send, peer, opcode, op_field, payload)

    def _complete(self, pending: Future) -> None:
        pending.result(timeout=self.step_timeout)

    def _send(self, peer: int, opcode: Opcode, op_field: int, payload: bytes) -> None:
        conn = self._conns[peer]
        with self._send_locks[peer]:
            try:
                conn.sendall(encode_header(opcode, op_field, self._seq, len(payload)))
                if payload:
                    conn.sendall(payload)
            except OSError as e:
                raise CollectiveError(f"rank {self.rank}: send to rank {peer} failed: {e}") from e

    def _recv(self, peer: int, opcode: Opcode, expected_length: int | None = None) -> tuple[FrameHeader, bytes]:
        conn = self._conns[peer]
        try:
            header = decode_header(recv_exact(conn, HEADER_SIZE))
            payload = recv_exact(conn, header.length) if header.length else b""
        except socket.timeout:
            raise CollectiveError(
                f"rank {self.rank}: no data from rank {peer} within {self.step_timeout}s"
            ) from None
        except OSError as e:
            raise CollectiveError(f"rank {self.rank}: peer rank {peer} failed: {e}") from e

        if header.opcode is Opcode.ERROR:
            reason = payload.decode("utf-8", errors="replace")
            raise CollectiveError(f"rank {self.rank}: peer rank {peer} aborted: {reason}")
        if header.opcode is not opcode or header.sequence != self._seq & 0xFFFFFFFF:
            raise CollectiveError(
                f"rank {self.rank}: expected {opcode.name}#{self._seq} from rank {peer}, "
                f"got {header.opcode.name}#{header.sequence}"
            )
        if expected_length is not None and header.length != expected_length:
            raise CollectiveError(
                f"rank {self.rank}: chunk from rank {peer} has {header.length} bytes, "
                f"expected {expected_length}"
            )
        return header, payload


def comm_connect(
    session: ClientSession,
    host: str | None = None,
    step_timeout: float | None = None,
) -> Communicator:
    """Exchange endpoints through the session's KVS and build a full mesh.

    Each rank publishes ``ep_<rank>``, barriers, reads every peer endpoint,
    dials all higher ranks and accepts one connection from each lower rank.

    Raises:
        ConnectError: On a group failure or an unreachable peer
    """
    if step_timeout is None:
        step_timeout = get_settings().collectives.step_timeout
    rank, size = session.rank, session.size
    if host is None:
        host = session.server_endpoint.host

    listener = socket.create_server((host, 0), backlog=max(size, 1))
    try:
        own = str(Endpoint(host, listener.getsockname()[1]))
        session.put(f"ep_{rank}", own)
        try:
            session.barrier()
        except GroupFailureError as e:
            raise ConnectError(f"rank {rank}: endpoint exchange failed: {e}") from e

        endpoints: list[str] = []
        for peer in range(size):
            value = session.get(f"ep_{peer}")
            if value is None:
                raise ConnectError(f"rank {rank}: no endpoint published by rank {peer}")
            endpoints.append(value)

        conns: dict[int, socket.socket] = {}
        for peer in range(rank + 1, size):
            try:
                conn = socket.create_connection(tuple(Endpoint.parse(endpoints[peer])), timeout=step_timeout)
                conn.sendall(encode_header(Opcode.HELLO, 0, rank, 0))
            except OSError as e:
                raise ConnectError(f"rank {rank}: rank {peer} unreachable at {endpoints[peer]}: {e}") from e
            conns[peer] = conn

        listener.settimeout(step_timeout)
        for _ in range(rank):
            try:
                conn, _ = listener.accept()
                conn.settimeout(step_timeout)
                hello = decode_header(recv_exact(conn, HEADER_SIZE))
            except (OSError, CollectiveError) as e:
                raise ConnectError(f"rank {rank}: accepting lower ranks failed: {e}") from e
            peer = hello.sequence
            if hello.opcode is not Opcode.HELLO or not 0 <= peer < rank or peer in conns:
                raise ConnectError(f"rank {rank}: unexpected hello from rank {peer}")
            conns[peer] = conn
    finally:
        listener.close()

    for conn in conns.values():
        conn.settimeout(step_timeout)
        conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    logger.info("rank %d/%d connected to %d peers", rank, size, len(conns))
    return Communicator(rank, size, endpoints, conns, step_timeout)
