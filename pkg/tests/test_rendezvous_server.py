"""Byte-exact transcripts and failure semantics of the rendezvous server."""

import socket
import threading
import time

import pytest

from src.core.errors import ConfigurationError, StartupError
from src.rendezvous import start_server
from tests.helpers import RawClient


class TestGoldenTranscripts:
    """Request/response bytes for every command, including error paths."""

    def setup_method(self):
        """Start a server with a single-rank and a two-rank group."""
        self.server = start_server("127.0.0.1:0", [("solo", 1), ("pair", 2)])
        self.clients: list[RawClient] = []

    def teardown_method(self):
        """Close clients and stop the server."""
        for client in self.clients:
            client.close()
        self.server.shutdown()

    def connect(self) -> RawClient:
        client = RawClient(self.server.endpoint)
        self.clients.append(client)
        return client

    def test_full_session(self):
        """init, put, get, barrier and finalize on a one-rank group."""
        c = self.connect()
        transcript = [
            (b"cmd=init group=solo rank=0\n", b"cmd=init_ack size=1\n"),
            (b"cmd=put key=ep_0 value=127.0.0.1:5000\n", b"cmd=put_ack\n"),
            (b"cmd=get key=ep_0\n", b"cmd=get_ack value=127.0.0.1:5000\n"),
            (b"cmd=get key=missing\n", b"cmd=get_neg\n"),
            (b"cmd=barrier\n", b"cmd=barrier_ack epoch=0\n"),
            (b"cmd=barrier\n", b"cmd=barrier_ack epoch=1\n"),
            (b"cmd=finalize\n", b"cmd=finalize_ack\n"),
        ]
        for request, response in transcript:
            assert c.request(request) == response

    def test_encoded_values_round_trip_verbatim(self):
        """Escaped keys and values are stored and returned in encoded form."""
        c = self.connect()
        assert c.request(b"cmd=init group=solo rank=0\n") == b"cmd=init_ack size=1\n"
        assert c.request(b"cmd=put key=a%20b value=x%3Dy%25\n") == b"cmd=put_ack\n"
        assert c.request(b"cmd=get key=a%20b\n") == b"cmd=get_ack value=x%3Dy%25\n"

    def test_duplicate_key(self):
        """Entries are immutable."""
        c = self.connect()
        c.request(b"cmd=init group=solo rank=0\n")
        assert c.request(b"cmd=put key=k value=1\n") == b"cmd=put_ack\n"
        assert c.request(b"cmd=put key=k value=2\n") == b"cmd=put_err reason=duplicate_key\n"
        assert c.request(b"cmd=get key=k\n") == b"cmd=get_ack value=1\n"

    def test_init_errors(self):
        """Unknown group, out-of-range rank, duplicate rank and re-init."""
        c = self.connect()
        assert c.request(b"cmd=init group=nope rank=0\n") == b"cmd=init_err reason=unknown_group\n"
        assert c.request(b"cmd=init group=pair rank=2\n") == b"cmd=init_err reason=rank_out_of_range\n"
        assert c.request(b"cmd=init group=pair rank=-1\n") == b"cmd=init_err reason=rank_out_of_range\n"
        assert c.request(b"cmd=init group=pair rank=0\n") == b"cmd=init_ack size=2\n"
        assert c.request(b"cmd=init group=pair rank=1\n") == b"cmd=init_err reason=already_initialized\n"

        other = self.connect()
        assert other.request(b"cmd=init group=pair rank=0\n") == b"cmd=init_err reason=duplicate_rank\n"
        assert other.request(b"cmd=init group=pair rank=1\n") == b"cmd=init_ack size=2\n"

    def test_protocol_errors(self):
        """Malformed lines, unknown commands and commands before init."""
        c = self.connect()
        assert c.request(b"hello\n") == b"cmd=error reason=malformed\n"
        assert c.request(b"cmd=put key=k value=v\n") == b"cmd=error reason=not_initialized\n"
        assert c.request(b"cmd=barrier\n") == b"cmd=error reason=not_initialized\n"
        assert c.request(b"cmd=frobnicate\n") == b"cmd=error reason=unknown_command\n"
        assert c.request(b"cmd=init group=solo rank=x\n") == b"cmd=error reason=malformed\n"
        assert c.request(b"cmd=init group=solo\n") == b"cmd=error reason=malformed\n"
        assert c.request(b"cmd=init group=solo rank=0\n") == b"cmd=init_ack size=1\n"
        assert c.request(b"cmd=put key=k\n") == b"cmd=error reason=malformed\n"

    def test_size_limits(self):
        """Keys over 256 and values over 4096 encoded bytes are refused."""
        c = self.connect()
        c.request(b"cmd=init group=solo rank=0\n")
        assert c.request(b"cmd=put key=" + b"k" * 257 + b" value=v\n") == b"cmd=error reason=key_too_long\n"
        assert c.request(b"cmd=put key=k value=" + b"v" * 4097 + b"\n") == b"cmd=error reason=value_too_long\n"
        assert c.request(b"cmd=get key=" + b"k" * 257 + b"\n") == b"cmd=error reason=key_too_long\n"
        assert c.request(b"cmd=put key=" + b"k" * 256 + b" value=" + b"v" * 4096 + b"\n") == b"cmd=put_ack\n"

    def test_barrier_waits_for_every_rank(self):
        """A pair barrier answers both ranks only after the second arrives."""
        a, b = self.connect(), self.connect()
        a.request(b"cmd=init group=pair rank=0\n")
        b.request(b"cmd=init group=pair rank=1\n")
        a.send(b"cmd=barrier\n")
        a.sock.settimeout(0.3)
        with pytest.raises(TimeoutError):
            a.sock.recv(1, socket.MSG_PEEK)
        a.sock.settimeout(5.0)
        assert b.request(b"cmd=barrier\n") == b"cmd=barrier_ack epoch=0\n"
        assert a.recv() == b"cmd=barrier_ack epoch=0\n"

    def test_disconnect_fails_waiting_barrier(self):
        """A peer dropping its connection fails the group."""
        a, b = self.connect(), self.connect()
        a.request(b"cmd=init group=pair rank=0\n")
        b.request(b"cmd=init group=pair rank=1\n")
        a.send(b"cmd=barrier\n")
        time.sleep(0.1)
        b.close()
        self.clients.remove(b)
        assert a.recv() == b"cmd=group_err reason=peer_disconnected\n"
        assert a.request(b"cmd=barrier\n") == b"cmd=group_err reason=peer_disconnected\n"

    def test_finalize_fails_waiting_barrier(self):
        """A peer finalizing while another waits fails the group."""
        a, b = self.connect(), self.connect()
        a.request(b"cmd=init group=pair rank=0\n")
        b.request(b"cmd=init group=pair rank=1\n")
        a.send(b"cmd=barrier\n")
        time.sleep(0.1)
        assert b.request(b"cmd=finalize\n") == b"cmd=finalize_ack\n"
        assert a.recv() == b"cmd=group_err reason=peer_finalized\n"

    def test_barrier_after_peer_finalized(self):
        """A barrier entered after a peer finalized fails at once instead of waiting."""
        a, b = self.connect(), self.connect()
        a.request(b"cmd=init group=pair rank=0\n")
        b.request(b"cmd=init group=pair rank=1\n")
        assert b.request(b"cmd=finalize\n") == b"cmd=finalize_ack\n"
        assert a.request(b"cmd=barrier\n") == b"cmd=group_err reason=peer_finalized\n"
        assert a.request(b"cmd=get key=k\n") == b"cmd=get_neg\n"

    def test_rank_rejoining_after_finalize(self):
        """Once the finalized rank is back, barriers complete again."""
        a, b = self.connect(), self.connect()
        a.request(b"cmd=init group=pair rank=0\n")
        b.request(b"cmd=init group=pair rank=1\n")
        b.request(b"cmd=finalize\n")
        c = self.connect()
        assert c.request(b"cmd=init group=pair rank=1\n") == b"cmd=init_ack size=2\n"
        a.send(b"cmd=barrier\n")
        assert c.request(b"cmd=barrier\n") == b"cmd=barrier_ack epoch=0\n"
        assert a.recv() == b"cmd=barrier_ack epoch=0\n"

    def test_failed_group_refuses_new_members(self):
        """Rejoining a failed group is refused until the group empties."""
        a, b = self.connect(), self.connect()
        a.request(b"cmd=init group=pair rank=0\n")
        b.request(b"cmd=init group=pair rank=1\n")
        b.close()
        self.clients.remove(b)
        time.sleep(0.1)
        c = self.connect()
        assert c.request(b"cmd=init group=pair rank=1\n") == b"cmd=init_err reason=group_failed\n"

    def test_empty_group_resets(self):
        """When every rank has left, the KVS, epoch and failure are cleared."""
        a = self.connect()
        a.request(b"cmd=init group=solo rank=0\n")
        a.request(b"cmd=put key=k value=1\n")
        a.request(b"cmd=barrier\n")
        assert a.request(b"cmd=finalize\n") == b"cmd=finalize_ack\n"

        again = self.connect()
        assert again.request(b"cmd=init group=solo rank=0\n") == b"cmd=init_ack size=1\n"
        assert again.request(b"cmd=get key=k\n") == b"cmd=get_neg\n"
        assert again.request(b"cmd=barrier\n") == b"cmd=barrier_ack epoch=0\n"


class TestServerLifecycle:
    """Startup validation and shutdown."""

    def test_duplicate_group_config(self):
        """Declaring a group twice is a configuration error."""
        with pytest.raises(ConfigurationError):
            start_server("127.0.0.1:0", [("g", 2), ("g", 3)])

    def test_group_size_must_be_positive(self):
        """Size-0 groups are rejected."""
        with pytest.raises(ConfigurationError):
            start_server("127.0.0.1:0", [("g", 0)])

    def test_endpoint_in_use(self):
        """Binding a taken port is a startup error."""
        with start_server("127.0.0.1:0", []) as first:
            with pytest.raises(StartupError):
                start_server(str(first.endpoint), [])

    def test_declare_group_at_runtime(self):
        """Groups can be added to a running server, but not twice."""
        with start_server("127.0.0.1:0", []) as server:
            server.declare_group("late", 1)
            c = RawClient(server.endpoint)
            try:
                assert c.request(b"cmd=init group=late rank=0\n") == b"cmd=init_ack size=1\n"
            finally:
                c.close()
            with pytest.raises(ConfigurationError):
                server.declare_group("late", 1)

    def test_closed_group_wakes_waiters_and_stays_failed(self):
        """close_group answers blocked barriers and is not undone when the group empties."""
        with start_server("127.0.0.1:0", [("pair", 2)]) as server:
            a = RawClient(server.endpoint)
            try:
                a.request(b"cmd=init group=pair rank=0\n")
                a.send(b"cmd=barrier\n")
                time.sleep(0.1)
                server.close_group("pair", "peer_failed")
                assert a.recv() == b"cmd=group_err reason=peer_failed\n"
                assert a.request(b"cmd=finalize\n") == b"cmd=finalize_ack\n"
            finally:
                a.close()
            late = RawClient(server.endpoint)
            try:
                assert late.request(b"cmd=init group=pair rank=1\n") == b"cmd=init_err reason=group_failed\n"
            finally:
                late.close()

    def test_removed_group_is_unknown(self):
        """A removed group can no longer be joined and its id can be declared again."""
        with start_server("127.0.0.1:0", [("g", 1)]) as server:
            server.remove_group("g")
            assert "g" not in server.groups
            c = RawClient(server.endpoint)
            try:
                assert c.request(b"cmd=init group=g rank=0\n") == b"cmd=init_err reason=unknown_group\n"
            finally:
                c.close()
            server.declare_group("g", 1)
            server.remove_group("missing")

    def test_shutdown_releases_waiting_barrier(self):
        """Shutdown answers waiters (or drops them) instead of leaving them blocked."""
        server = start_server("127.0.0.1:0", [("pair", 2)])
        c = RawClient(server.endpoint)
        c.request(b"cmd=init group=pair rank=0\n")
        c.send(b"cmd=barrier\n")
        time.sleep(0.1)
        stopper = threading.Thread(target=server.shutdown)
        stopper.start()
        try:
            reply = c.recv()
        except OSError:
            reply = b""
        stopper.join(timeout=10)
        c.close()
        assert reply in (b"cmd=group_err reason=server_shutdown\n", b"")
        assert not stopper.is_alive()
