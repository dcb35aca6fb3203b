"""Partition execution shared by the in-driver runner and worker processes."""

import logging
from collections.abc import Iterable, Iterator, Mapping, Sequence
from typing import Any

from src.collectives import Communicator, comm_connect
from src.core.config import get_settings
from src.rendezvous import ClientSession, client_from_env
from src.rendezvous import protocol as rdv

from .codecs import get_codec
from .dataset import Stage, StageMethod
from .registry import lookup

logger = logging.getLogger(__name__)


class TaskContext:
    """What a partition function sees besides its index and elements.

    ``env`` holds ``RDV_PORT``/``RDV_RANK``/``RDV_GROUP`` for collective
    stages. ``connect()`` joins the group and returns a Communicator whose
    lifetime the runtime owns.
    """

    def __init__(self, partition: int, env: Mapping[str, str], config: bytes):
        self.partition = partition
        self.env = dict(env)
        self.config = config
        self._session: ClientSession | None = None
        self._comm: Communicator | None = None

    @property
    def rank(self) -> int | None:
        value = self.env.get(rdv.ENV_RANK)
        return None if value is None else int(value)

    def connect(self) -> Communicator:
        if self._comm is None:
            self._session = client_from_env(self.env, timeout=get_settings().engine.connect_timeout)
            self._comm = comm_connect(self._session)
        return self._comm

    def close(self, ok: bool) -> None:
        """Release the communicator; finalize the session only on success."""
        if self._comm is not None:
            self._comm.close()
            self._comm = None
        if self._session is not None:
            session, self._session = self._session, None
            if ok:
                try:
                    session.finalize()
                    return
                except Exception:
                    logger.debug("finalize failed for partition %d", self.partition, exc_info=True)
            session.close()


def _apply_map(fn, data: Iterable[Any], config: bytes) -> Iterator[Any]:
    for element in data:
        yield fn(element, config)


def run_partition(
    index: int,
    kind: str,
    elements: Sequence[bytes],
    stages: Sequence[Stage],
    env: Mapping[str, str] | None = None,
) -> list[Any]:
    """Decode a partition, run its stages and materialize the result.

    ``env`` is handed only to the collective stage's context.
    """
    codec = get_codec(kind)
    data: Iterable[Any] = (codec.decode(e) for e in elements)
    contexts: list[TaskContext] = []
    ok = False
    try:
        for stage in stages:
            fn = lookup(stage.task.function_id)
            if stage.method is StageMethod.MAP:
                data = _apply_map(fn, data, stage.task.config)
            else:
                ctx = TaskContext(index, env if stage.task.collective and env else {}, stage.task.config)
                contexts.append(ctx)
                data = fn(index, iter(data), ctx)
                if data is None:
                    data = ()
        result = list(data)
        ok = True
        return result
    finally:
        for ctx in contexts:
            ctx.close(ok)
