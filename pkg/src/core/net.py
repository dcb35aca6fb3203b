"""Socket helpers shared by the rendezvous, collective and engine wires."""

import socket
from typing import NamedTuple

from .errors import ArgumentError


class Endpoint(NamedTuple):
    """A host:port pair."""

    host: str
    port: int

    def __str__(self) -> str:
        return f"{self.host}:{self.port}"

    @classmethod
    def parse(cls, text: str) -> "Endpoint":
        """Parse ``host:port``.

        Raises:
            ArgumentError: If the text is not host:port with a valid port
        """
        host, sep, port = text.strip().rpartition(":")
        if not sep or not host:
            raise ArgumentError(f"Endpoint must be host:port, got {text!r}")
        try:
            number = int(port)
        except ValueError:
            raise ArgumentError(f"Endpoint port is not an integer: {text!r}") from None
        if not 0 <= number <= 65535:
            raise ArgumentError(f"Endpoint port out of range: {text!r}")
        return cls(host, number)


def recv_exact(sock: socket.socket, size: int) -> bytes:
    """Read exactly ``size`` bytes.

    Raises:
        ConnectionError: If the peer closes before ``size`` bytes arrive
    """
    buf = bytearray(size)
    view = memoryview(buf)
    got = 0
    while got < size:
        n = sock.recv_into(view[got:], size - got)
        if n == 0:
            raise ConnectionError(f"peer closed after {got} of {size} bytes")
        got += n
    return bytes(buf)
