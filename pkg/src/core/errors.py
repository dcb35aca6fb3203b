"""Error hierarchy shared by every hybridpipe module.

Each error carries the process exit code the CLI maps it to.
"""

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CORRECTNESS = 2
EXIT_RUNTIME = 3


class HybridPipeError(Exception):
    """Base class for all hybridpipe errors."""

    exit_code = EXIT_RUNTIME


class ConfigurationError(HybridPipeError):
    """Invalid settings or an inconsistent declared configuration."""

    exit_code = EXIT_USAGE


class ArgumentError(HybridPipeError, ValueError):
    """An operation was called with arguments outside its contract."""

    exit_code = EXIT_USAGE


class CorrectnessError(HybridPipeError):
    """A computed result disagrees with its oracle."""

    exit_code = EXIT_CORRECTNESS


class StartupError(HybridPipeError):
    """A server could not bind its endpoint."""

    exit_code = EXIT_USAGE


class ProtocolError(HybridPipeError):
    """A wire record was malformed, oversized or not understood."""


class InitError(HybridPipeError):
    """Rendezvous init was refused (unknown group, bad or duplicate rank)."""


class PutError(HybridPipeError):
    """A rendezvous put was refused (key already present)."""


class SessionStateError(HybridPipeError):
    """A session operation was issued in the wrong session state."""


class GroupFailureError(HybridPipeError):
    """A peer of the process group failed; the group is unusable."""


class ConnectError(HybridPipeError):
    """Communicator bootstrap failed."""


class CollectiveError(HybridPipeError):
    """A collective operation failed on this rank or a peer."""


class TaskError(HybridPipeError):
    """A task function failed while processing one partition."""

    def __init__(self, message: str, partition: int | None = None):
        super().__init__(message)
        self.partition = partition


class SchedulingError(HybridPipeError):
    """A task set could not be dispatched (gang unsatisfiable or timed out)."""


class JobError(HybridPipeError):
    """A job aborted for a reason other than a task error (e.g. worker crash)."""


class TopicError(HybridPipeError):
    """Unknown or duplicate topic/partition."""


class OffsetRangeError(HybridPipeError):
    """An offset range is not (yet) readable."""


class SegmentError(HybridPipeError):
    """A segment file is corrupt or a record does not fit a segment."""


class DivergenceError(HybridPipeError):
    """An iterative solver produced a non-finite value."""
