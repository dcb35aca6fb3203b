"""Shared test harness: in-process process groups and raw rendezvous transcripts."""

import socket
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from typing import Any

from src.collectives import Communicator, comm_connect
from src.core.net import Endpoint
from src.rendezvous import ServerHandle, client_init, start_server

STEP_TIMEOUT = 20.0


def run_ranks(
    server: ServerHandle,
    group: str,
    size: int,
    fn: Callable[[Communicator], Any],
    step_timeout: float = STEP_TIMEOUT,
) -> list[Any]:
    """Run ``fn(comm)`` on one thread per rank of ``group``.

    Returns per-rank results; an exception raised on a rank is returned in
    that rank's slot instead of being re-raised.
    """

    def rank_main(rank: int) -> Any:
        session = client_init(server.endpoint, group, rank, timeout=step_timeout)
        try:
            with comm_connect(session, step_timeout=step_timeout) as comm:
                result = fn(comm)
        except Exception as e:
            session.close()
            return e
        session.finalize()
        return result

    with ThreadPoolExecutor(max_workers=size, thread_name_prefix="test-rank") as executor:
        return list(executor.map(rank_main, range(size)))


def local_group(size: int, fn: Callable[[Communicator], Any], step_timeout: float = STEP_TIMEOUT) -> list[Any]:
    """Start a private rendezvous server and run ``fn`` on ``size`` ranks."""
    with start_server("127.0.0.1:0", [("world", size)]) as server:
        return run_ranks(server, "world", size, fn, step_timeout)


def raise_first(results: Sequence[Any]) -> list[Any]:
    """Re-raise the first exception found in per-rank results."""
    for result in results:
        if isinstance(result, BaseException):
            raise result
    return list(results)


class RawClient:
    """A bare socket speaking the rendezvous line protocol, for byte-exact transcripts."""

    def __init__(self, endpoint: Endpoint, timeout: float = 5.0):
        self.sock = socket.create_connection(tuple(endpoint), timeout=timeout)
        self.rfile = self.sock.makefile("rb")

    def send(self, line: bytes) -> None:
        self.sock.sendall(line)

    def recv(self) -> bytes:
        return self.rfile.readline()

    def request(self, line: bytes) -> bytes:
        self.send(line)
        return self.recv()

    def close(self) -> None:
        self.rfile.close()
        self.sock.close()
