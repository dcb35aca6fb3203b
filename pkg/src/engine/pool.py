"""Worker process pool with atomic gang reservation.

Workers are OS processes launched as ``python -m src.cli --worker --driver
<host:port>``; each holds one connection to the pool's listener and runs one
task at a time.
"""

import logging
import os
import socket
import subprocess
import sys
import threading
import time
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

from src.core.errors import JobError, ProtocolError, SchedulingError
from src.core.net import Endpoint

from .wire import Message, recv_message, send_message

logger = logging.getLogger(__name__)

REPO_ROOT = Path(__file__).resolve().parents[2]


@dataclass(eq=False)
class WorkerHandle:
    """Driver-side view of one worker process."""

    worker_id: int
    process: subprocess.Popen
    sock: socket.socket | None = None
    pid: int | None = None
    alive: bool = True
    busy: bool = False
    tasks_run: int = 0
    send_lock: threading.Lock = field(default_factory=threading.Lock)

    def send(self, header: dict, blobs: Sequence[bytes] = ()) -> None:
        with self.send_lock:
            send_message(self.sock, header, blobs)

    def receive(self) -> Message:
        return recv_message(self.sock)


class WorkerPool:
    """A fixed set of worker processes and the scheduler queue in front of them."""

    def __init__(
        self,
        size: int,
        host: str = "127.0.0.1",
        start_timeout: float = 30.0,
        task_modules: Sequence[str] = (),
    ):
        self.size = size
        self.host = host
        self.start_timeout = start_timeout
        self.task_modules = list(task_modules)
        self.workers: list[WorkerHandle] = []
        self._cond = threading.Condition()
        self._listener: socket.socket | None = None
        self._closed = False

    @property
    def live_count(self) -> int:
        with self._cond:
            return sum(1 for w in self.workers if w.alive)

    def start(self) -> None:
        """Launch the workers and wait for each to say hello.

        Raises:
            JobError: If a worker fails to connect within the start timeout
        """
        self._listener = socket.create_server((self.host, 0), backlog=max(self.size, 1))
        endpoint = Endpoint(self.host, self._listener.getsockname()[1])
        env = self._worker_env()
        cmd = [sys.executable, "-m", "src.cli", "--worker", "--driver", str(endpoint)]
        for worker_id in range(self.size):
            process = subprocess.Popen(cmd, env=env, cwd=str(REPO_ROOT))
            self.workers.append(WorkerHandle(worker_id, process))
        logger.info("spawned %d workers against %s", self.size, endpoint)

        deadline = time.monotonic() + self.start_timeout
        for handle in self.workers:
            remaining = deadline - time.monotonic()
            try:
                if remaining <= 0:
                    raise socket.timeout("worker start timeout")
                self._listener.settimeout(remaining)
                conn, _ = self._listener.accept()
                conn.settimeout(remaining)
                hello = recv_message(conn)
            except (OSError, ConnectionError, ProtocolError) as e:
                self.close()
                raise JobError(f"worker {handle.worker_id} did not start: {e}") from e
            conn.settimeout(None)
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            handle.sock = conn
            handle.pid = hello.header.get("pid")
            logger.debug("worker %d connected (pid %s)", handle.worker_id, handle.pid)

    def reserve(self, count: int, timeout: float | None) -> list[WorkerHandle]:
        """Atomically reserve ``count`` idle workers.

        Either all ``count`` workers are handed out together or none are.

        Raises:
            SchedulingError: If ``count`` exceeds the live pool or no gang frees
                up within ``timeout``
        """
        deadline = None if timeout is None else time.monotonic() + timeout
        with self._cond:
            while True:
                live = [w for w in self.workers if w.alive]
                if count > len(live):
                    raise SchedulingError(
                        f"gang of {count} cannot be scheduled on {len(live)} live workers"
                    )
                idle = [w for w in live if not w.busy]
                if len(idle) >= count:
                    gang = idle[:count]
                    for w in gang:
                        w.busy = True
                    return gang
                remaining = None if deadline is None else deadline - time.monotonic()
                if remaining is not None and remaining <= 0:
                    raise SchedulingError(
                        f"timed out after {timeout}s waiting for {count} idle workers"
                    )
                self._cond.wait(remaining)

    def release(self, workers: Sequence[WorkerHandle]) -> None:
        with self._cond:
            for w in workers:
                w.busy = False
            self._cond.notify_all()

    def mark_dead(self, handle: WorkerHandle, reason: str) -> None:
        with self._cond:
            if handle.alive:
                handle.alive = False
                logger.error("worker %d (pid %s) lost: %s", handle.worker_id, handle.pid, reason)
            self._cond.notify_all()

    def run_on(self, handle: WorkerHandle, header: dict, blobs: Sequence[bytes]) -> Message:
        """Send one task and wait for its reply.

        Raises:
            JobError: If the worker dies before replying
        """
        try:
            handle.send(header, blobs)
            reply = handle.receive()
        except (OSError, ConnectionError) as e:
            self.mark_dead(handle, str(e))
            raise JobError(f"worker {handle.worker_id} crashed while running partition {header.get('partition')}") from e
        handle.tasks_run += 1
        return reply

    def close(self) -> None:
        """Ask workers to exit, then terminate stragglers."""
        if self._closed:
            return
        self._closed = True
        for w in self.workers:
            if w.sock is not None:
                try:
                    w.send({"type": "shutdown"})
                except OSError:
                    pass
        for w in self.workers:
            try:
                w.process.wait(timeout=5)
            except subprocess.TimeoutExpired:
                w.process.kill()
                w.process.wait()
            if w.sock is not None:
                w.sock.close()
        if self._listener is not None:
            self._listener.close()
        logger.info("worker pool closed")

    def _worker_env(self) -> dict[str, str]:
        env = dict(os.environ)
        path = env.get("PYTHONPATH")
        env["PYTHONPATH"] = str(REPO_ROOT) if not path else os.pathsep.join([str(REPO_ROOT), path])
        if self.task_modules:
            env["HYBRIDPIPE_TASK_MODULES"] = ",".join(self.task_modules)
        return env
