"""Driver-side engine context: builds datasets and executes their plans.

With ``workers == 0`` partitions run inside the driver (collective gangs as
one thread per rank). With ``workers >= 1`` a WorkerPool of OS processes
executes them; collective gangs are reserved atomically.
"""

import itertools
import logging
import threading
import time
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from typing import Any

from src.core.config import Settings, get_settings
from src.core.errors import ArgumentError, HybridPipeError, JobError, TaskError
from src.rendezvous import ServerHandle, start_server
from src.rendezvous import protocol as rdv

from . import dataset as ds
from .codecs import get_codec
from .dataset import Partition, PartitionedDataset
from .pool import WorkerHandle, WorkerPool
from .registry import TaskSpec, load_task_modules
from .runtime import run_partition
from .wire import TaskAssignment, task_message

logger = logging.getLogger(__name__)

# what a rank raises when a peer, not its own task, broke the gang
PEER_ABORTS = frozenset({"CollectiveError", "ConnectError", "GroupFailureError", "InitError"})


class PartitionFailure(Exception):
    """A partition's task raised; carries what the executing side reported."""

    def __init__(self, partition: int, error_type: str, message: str):
        super().__init__(message)
        self.partition = partition
        self.error_type = error_type


class EngineContext:
    """Entry point for datasets, analogous to a SparkContext."""

    def __init__(self, workers: int | None = None, settings: Settings | None = None):
        self.settings = settings or get_settings()
        self.workers = self.settings.engine.workers if workers is None else workers
        if self.workers < 0:
            raise ArgumentError(f"workers must be >= 0, got {workers}")
        load_task_modules(self.settings.engine.task_modules)
        self._job_ids = itertools.count(1)
        self._server: ServerHandle | None = None
        self._server_lock = threading.Lock()
        self._pool: WorkerPool | None = None
        if self.workers:
            self._pool = WorkerPool(
                self.workers,
                host=self.settings.rendezvous.host,
                start_timeout=self.settings.engine.worker_start_timeout,
                task_modules=self.settings.engine.task_modules,
            )
            self._pool.start()
        self.jobs_run = 0

    @property
    def pool(self) -> WorkerPool | None:
        return self._pool

    @property
    def rendezvous(self) -> ServerHandle:
        """In-process rendezvous server for collective jobs, started on first use."""
        with self._server_lock:
            if self._server is None:
                self._server = start_server(
                    f"{self.settings.rendezvous.host}:0",
                    [],
                    self.settings.rendezvous.max_key_bytes,
                    self.settings.rendezvous.max_value_bytes,
                )
            return self._server

    def parallelize(self, items: Iterable[Any], num_partitions: int, kind: str = "pickle") -> PartitionedDataset:
        """Split ``items`` into contiguous blocks, one per partition."""
        return ds.parallelize(self, items, num_partitions, kind)

    def from_encoded(self, blocks: Sequence[Sequence[bytes]], kind: str) -> PartitionedDataset:
        return ds.from_encoded(self, blocks, kind)

    def union(self, datasets: Sequence[PartitionedDataset]) -> PartitionedDataset:
        return ds.union(datasets)

    def run_job(self, dataset: PartitionedDataset, count_only: bool = False) -> list[Any]:
        """Execute every partition of ``dataset``.

        Returns:
            One result list per partition (or one count per partition when
            ``count_only``), in partition order

        Raises:
            TaskError: Naming the lowest failed partition
            SchedulingError: If a collective gang cannot be placed
            JobError: If a worker process dies
        """
        job = next(self._job_ids)
        partitions = dataset.partitions
        collective = _collective_task(partitions)
        start = time.perf_counter()
        logger.info(
            "job %d: %d partitions%s on %s",
            job,
            len(partitions),
            " (collective)" if collective else "",
            f"{self.workers} workers" if self._pool else "driver",
        )

        def assign(envs: list[dict[str, str]] | None) -> list[TaskAssignment]:
            return [
                TaskAssignment(
                    job=job,
                    partition=p.index,
                    kind=p.kind,
                    elements=list(p.elements),
                    stages=list(p.stages),
                    env=envs[p.index] if envs else {},
                    output_kind=dataset.kind,
                    count_only=count_only,
                )
                for p in partitions
            ]

        if collective is not None:
            outcomes = self._run_collective(job, collective, len(partitions), assign)
        elif self._pool is None:
            outcomes = self._run_local(assign(None))
        else:
            outcomes = self._run_pooled(assign(None))

        failures = [o for o in outcomes if isinstance(o, PartitionFailure)]
        if failures:
            raise _job_failure(job, failures)
        self.jobs_run += 1
        logger.info("job %d finished in %.3fs", job, time.perf_counter() - start)
        if count_only:
            return [len(o) if isinstance(o, list) else o for o in outcomes]
        return outcomes

    def close(self) -> None:
        if self._pool is not None:
            self._pool.close()
            self._pool = None
        if self._server is not None:
            self._server.shutdown()
            self._server = None

    def __enter__(self) -> "EngineContext":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _run_collective(
        self,
        job: int,
        task: TaskSpec,
        size: int,
        assign: Callable[[list[dict[str, str]] | None], list[TaskAssignment]],
    ) -> list[Any]:
        """Place a gang, then run one rank per partition in a fresh group.

        The group exists only while the job runs. A rank that fails, even
        before joining, closes it so the others leave their barriers.
        """
        gang = self._pool.reserve(size, self.settings.engine.gang_timeout) if self._pool else None
        owned = task.group_id is None or task.rendezvous is None
        try:
            if owned:
                server = self.rendezvous
                group = task.group_id or f"job-{job}"
                server.declare_group(group, size)
                port = str(server.endpoint)
            else:
                group, port = task.group_id, task.rendezvous
            try:
                assignments = assign(
                    [{rdv.ENV_PORT: port, rdv.ENV_RANK: str(rank), rdv.ENV_GROUP: group} for rank in range(size)]
                )

                def run(rank: int) -> Any:
                    a = assignments[rank]
                    try:
                        outcome = self._execute_remote(gang[rank], a) if gang else _execute_local(a)
                    except Exception:
                        if owned:
                            self._abort_group(group, a.partition)
                        raise
                    if owned and isinstance(outcome, PartitionFailure):
                        self._abort_group(group, a.partition)
                    return outcome

                with ThreadPoolExecutor(max_workers=max(size, 1), thread_name_prefix="rank") as executor:
                    return list(executor.map(run, range(size)))
            finally:
                if owned:
                    self.rendezvous.remove_group(group)
        finally:
            if gang is not None:
                self._pool.release(gang)

    def _abort_group(self, group: str, partition: int) -> None:
        logger.warning("partition %d failed; closing group %s", partition, group)
        self.rendezvous.close_group(group, rdv.PEER_FAILED)

    def _run_local(self, assignments: list[TaskAssignment]) -> list[Any]:
        outcomes: list[Any] = []
        for a in assignments:
            outcome = _execute_local(a)
            outcomes.append(outcome)
            if isinstance(outcome, PartitionFailure):
                break
        return outcomes

    def _run_pooled(self, assignments: list[TaskAssignment]) -> list[Any]:
        failed = threading.Event()

        def run(a: TaskAssignment) -> Any:
            if failed.is_set():
                return None
            (handle,) = self._pool.reserve(1, None)
            try:
                outcome = self._execute_remote(handle, a)
            finally:
                self._pool.release([handle])
            if isinstance(outcome, PartitionFailure):
                failed.set()
            return outcome

        with ThreadPoolExecutor(max_workers=self.workers, thread_name_prefix="dispatch") as executor:
            return list(executor.map(run, assignments))

    def _execute_remote(self, handle: WorkerHandle, a: TaskAssignment) -> Any:
        header, blobs = task_message(a)
        reply = self._pool.run_on(handle, header, blobs)
        if reply.type == "error":
            return PartitionFailure(
                a.partition, reply.header.get("error_type", "Exception"), reply.header.get("message", "")
            )
        if a.count_only:
            return int(reply.header["count"])
        codec = get_codec(a.output_kind)
        return [codec.decode(b) for b in reply.blobs]


def _execute_local(a: TaskAssignment) -> Any:
    try:
        result = run_partition(a.partition, a.kind, a.elements, a.stages, a.env)
    except Exception as e:
        logger.warning("partition %d failed: %s", a.partition, e)
        return PartitionFailure(a.partition, type(e).__name__, str(e) or type(e).__name__)
    return len(result) if a.count_only else result


def _collective_task(partitions: Sequence[Partition]) -> TaskSpec | None:
    tasks = {p.collective_stage.task for p in partitions if p.collective_stage is not None}
    if not tasks:
        return None
    if len(tasks) > 1 or any(p.collective_stage is None for p in partitions):
        raise ArgumentError("a collective stage must cover every partition of the dataset")
    return tasks.pop()


def _job_failure(job: int, failures: list[PartitionFailure]) -> HybridPipeError:
    """The lowest failed partition, preferring root causes over peer aborts."""
    roots = [f for f in failures if f.error_type not in PEER_ABORTS] or failures
    first = min(roots, key=lambda f: f.partition)
    logger.error("job %d failed in partition %d: %s", job, first.partition, first)
    return TaskError(f"partition {first.partition} failed: {first.error_type}: {first}", partition=first.partition)
