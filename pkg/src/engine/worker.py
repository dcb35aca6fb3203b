"""Engine worker process: receives partitions from the driver and runs them."""

import logging
import os
import signal
import socket
import traceback

from src.core.config import get_settings
from src.core.errors import HybridPipeError, ProtocolError
from src.core.net import Endpoint

from .codecs import get_codec
from .registry import load_task_modules
from .runtime import run_partition
from .wire import Message, parse_task, recv_message, send_message

logger = logging.getLogger(__name__)


class EngineWorker:
    """Connects to the driver and executes one task at a time until shutdown."""

    def __init__(self, driver: str | Endpoint):
        self.driver = Endpoint.parse(driver) if isinstance(driver, str) else driver
        self.running = False
        self.tasks_run = 0
        self._sock: socket.socket | None = None

    def start(self) -> None:
        """Run the worker loop."""
        settings = get_settings()
        load_task_modules(settings.engine.task_modules)
        signal.signal(signal.SIGTERM, self._signal_handler)
        signal.signal(signal.SIGINT, self._signal_handler)

        self._sock = socket.create_connection(tuple(self.driver), timeout=settings.engine.worker_start_timeout)
        self._sock.settimeout(None)
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        send_message(self._sock, {"type": "hello", "pid": os.getpid()})
        logger.info("worker connected to driver %s", self.driver)

        self.running = True
        try:
            while self.running:
                try:
                    message = recv_message(self._sock)
                except (ConnectionError, OSError):
                    logger.info("driver connection closed")
                    break
                if message.type == "shutdown":
                    break
                if message.type == "task":
                    self._process_task(message)
                else:
                    logger.warning("ignoring unexpected message %r", message.type)
        finally:
            self._shutdown()

    def _signal_handler(self, signum, frame) -> None:
        logger.info("received signal %d, shutting down", signum)
        self.running = False
        if self._sock is not None:
            try:
                self._sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass

    def _shutdown(self) -> None:
        if self._sock is not None:
            self._sock.close()
            self._sock = None
        logger.info("worker exiting after %d tasks", self.tasks_run)

    def _process_task(self, message: Message) -> None:
        try:
            task = parse_task(message)
        except ProtocolError as e:
            send_message(self._sock, {"type": "error", "partition": -1, "error_type": "ProtocolError", "message": str(e)})
            return

        logger.debug("job %d: running partition %d", task.job, task.partition)
        header = {"type": "result", "job": task.job, "partition": task.partition}
        try:
            result = run_partition(task.partition, task.kind, task.elements, task.stages, task.env)
            if task.count_only:
                send_message(self._sock, {**header, "count": len(result)})
            else:
                codec = get_codec(task.output_kind)
                send_message(self._sock, {**header, "count": len(result)}, [codec.encode(x) for x in result])
        except Exception as e:
            level = logging.WARNING if isinstance(e, HybridPipeError) else logging.ERROR
            logger.log(level, "job %d partition %d failed: %s", task.job, task.partition, e)
            send_message(
                self._sock,
                {
                    "type": "error",
                    "job": task.job,
                    "partition": task.partition,
                    "error_type": type(e).__name__,
                    "message": str(e) or type(e).__name__,
                    "traceback": traceback.format_exc(limit=8),
                },
            )
        self.tasks_run += 1


def main(driver: str) -> None:
    """Entry point for ``--worker --driver host:port``."""
    EngineWorker(driver).start()
