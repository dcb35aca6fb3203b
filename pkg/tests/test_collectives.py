"""Tests for the ring allreduce, binomial broadcast and barrier."""

import struct
import threading
import time
from concurrent.futures import TimeoutError as FutureTimeout

import numpy as np
import pytest

from src.collectives import ReduceOp, chunk_bounds, comm_allreduce, comm_barrier, comm_broadcast
from src.collectives import frames
from src.core.errors import ArgumentError, CollectiveError
from tests.helpers import local_group, raise_first


def rank_buffer(rank: int, n: int, dtype=np.float32) -> np.ndarray:
    return (np.arange(n, dtype=np.float64) * (rank + 1) - 3.5 * rank).astype(dtype)


class TestFrames:
    """Header codec."""

    def test_header_layout(self):
        """16 bytes: magic, opcode, op, sequence, length, little-endian."""
        op = frames.pack_op(ReduceOp.MAX, 1)
        data = frames.encode_header(frames.Opcode.REDUCE_SCATTER, op, 7, 40)
        assert len(data) == frames.HEADER_SIZE == 16
        assert data == b"PFCL" + struct.pack("<HHII", 3, 0x0102, 7, 40)
        header = frames.decode_header(data)
        assert header == (frames.Opcode.REDUCE_SCATTER, 0x0102, 7, 40)
        assert frames.unpack_op(header.op) == (ReduceOp.MAX, np.dtype("<f8"))

    def test_bad_magic_and_opcode(self):
        """Corrupt headers are collective errors."""
        with pytest.raises(CollectiveError):
            frames.decode_header(b"XXXX" + bytes(12))
        with pytest.raises(CollectiveError):
            frames.decode_header(b"PFCL" + struct.pack("<HHII", 99, 0, 0, 0))
        with pytest.raises(CollectiveError):
            frames.unpack_op(0x0903)

    def test_dtype_codes(self):
        """Only float32 and float64 buffers travel."""
        assert frames.dtype_code(np.dtype(np.float32)) == 0
        assert frames.dtype_code(np.dtype(np.float64)) == 1
        with pytest.raises(ArgumentError):
            frames.dtype_code(np.dtype(np.int32))

    def test_reduce_ops(self):
        """SUM, MIN and MAX reduce in place."""
        a = np.array([1.0, 5.0, -2.0])
        b = np.array([3.0, 2.0, -4.0])
        for op, expected in [(ReduceOp.SUM, a + b), (ReduceOp.MIN, np.minimum(a, b)), (ReduceOp.MAX, np.maximum(a, b))]:
            acc = a.copy()
            op.apply(acc, b)
            np.testing.assert_array_equal(acc, expected)


class TestChunkBounds:
    """Ring chunking."""

    @pytest.mark.parametrize(("length", "parts"), [(0, 3), (2, 4), (10, 3), (12, 4), (7, 1)])
    def test_chunks_cover_buffer(self, length, parts):
        """Chunks are contiguous, ordered and cover [0, length)."""
        bounds = chunk_bounds(length, parts)
        assert len(bounds) == parts
        assert bounds[0][0] == 0
        assert bounds[-1][1] == length
        for (_, hi), (lo, _) in zip(bounds, bounds[1:]):
            assert hi == lo


class TestAllreduce:
    """Ring allreduce against a serial oracle."""

    @pytest.mark.parametrize("size", [1, 2, 3, 4])
    @pytest.mark.parametrize("n", [0, 1, 3, 1000])
    def test_sum_matches_oracle(self, size, n):
        """Every rank returns the elementwise sum; results are bit-identical."""
        results = raise_first(local_group(size, lambda comm: comm.allreduce(rank_buffer(comm.rank, n))))
        oracle = sum(rank_buffer(r, n).astype(np.float64) for r in range(size))
        for result in results:
            assert result.dtype == np.float32
            assert result.shape == (n,)
            np.testing.assert_allclose(result, oracle, rtol=1e-6, atol=1e-6)
            assert result.tobytes() == results[0].tobytes()

    @pytest.mark.parametrize(("op", "reduce"), [(ReduceOp.MIN, np.minimum.reduce), (ReduceOp.MAX, np.maximum.reduce)])
    def test_min_max(self, op, reduce):
        """MIN and MAX are exact."""
        size, n = 3, 17
        results = raise_first(local_group(size, lambda comm: comm_allreduce(comm, rank_buffer(comm.rank, n), op)))
        oracle = reduce([rank_buffer(r, n) for r in range(size)])
        for result in results:
            np.testing.assert_array_equal(result, oracle)

    def test_float64_and_shape_preserved(self):
        """float64 buffers reduce in float64 and keep their shape."""
        results = raise_first(
            local_group(2, lambda comm: comm.allreduce(np.full((2, 3), comm.rank + 0.1, dtype=np.float64)))
        )
        for result in results:
            assert result.dtype == np.float64
            assert result.shape == (2, 3)
            np.testing.assert_allclose(result, 1.2, rtol=1e-12)

    def test_input_not_modified(self):
        """allreduce returns a new array."""

        def run(comm):
            buf = np.ones(8, dtype=np.float32)
            out = comm.allreduce(buf)
            return buf, out

        for buf, out in raise_first(local_group(2, run)):
            np.testing.assert_array_equal(buf, 1.0)
            np.testing.assert_array_equal(out, 2.0)

    def test_repeated_collectives(self):
        """Sequence numbers advance consistently over many operations."""

        def run(comm):
            total = np.zeros(5, dtype=np.float32)
            for i in range(20):
                total += comm.allreduce(np.full(5, i, dtype=np.float32))
                if i % 5 == 0:
                    comm.barrier()
            return total

        expected = sum(range(20)) * 3
        for result in raise_first(local_group(3, run)):
            np.testing.assert_array_equal(result, expected)

    def test_length_mismatch_fails_every_rank(self):
        """Unequal lengths raise CollectiveError on all ranks."""
        results = local_group(3, lambda comm: comm.allreduce(np.ones(4 + (comm.rank == 2), dtype=np.float32)))
        assert all(isinstance(r, CollectiveError) for r in results)

    def test_dtype_mismatch_fails(self):
        """Ranks must agree on the element type."""
        dtypes = [np.float32, np.float64]
        results = local_group(2, lambda comm: comm.allreduce(np.ones(4, dtype=dtypes[comm.rank])))
        assert all(isinstance(r, CollectiveError) for r in results)

    def test_unsupported_dtype(self):
        """Integer buffers are rejected before any traffic."""
        results = local_group(1, lambda comm: comm.allreduce(np.ones(3, dtype=np.int64)))
        assert isinstance(results[0], ArgumentError)

    def test_peer_failure_is_fail_stop(self):
        """A rank closing mid-collective fails the others, and the communicator stays unusable."""

        def run(comm):
            if comm.rank == 1:
                comm.close()
                return "left"
            with pytest.raises(CollectiveError):
                comm.allreduce(np.ones(1000, dtype=np.float32))
            with pytest.raises(CollectiveError, match="unusable"):
                comm.allreduce(np.ones(1000, dtype=np.float32))
            return "failed"

        assert raise_first(local_group(3, run, step_timeout=5.0)) == ["failed", "left", "failed"]

    def test_send_timeout_aborts_peers(self):
        """A send that does not complete in time fails every rank through ERROR frames."""

        def run(comm):
            if comm.rank == 0:

                def stalled(pending):
                    pending.result()
                    raise FutureTimeout()

                comm._complete = stalled
            return comm.allreduce(np.ones(8, dtype=np.float32))

        results = local_group(2, run, step_timeout=5.0)
        assert isinstance(results[0], CollectiveError)
        assert isinstance(results[1], CollectiveError)
        assert "aborted" in str(results[1])

    def test_connection_count(self):
        """A full mesh holds size-1 connections per rank."""
        assert raise_first(local_group(4, lambda comm: comm.connection_count)) == [3, 3, 3, 3]


class TestBroadcast:
    """Binomial-tree broadcast."""

    @pytest.mark.parametrize("size", [1, 2, 3, 5])
    def test_every_root(self, size):
        """Every rank receives the root's buffer, for every root."""

        def run(comm):
            out = []
            for root in range(comm.size):
                buf = np.arange(6, dtype=np.float32) + 10 * root if comm.rank == root else None
                out.append(comm_broadcast(comm, root, buf))
            return out

        for per_rank in raise_first(local_group(size, run)):
            for root, received in enumerate(per_rank):
                np.testing.assert_array_equal(received, np.arange(6, dtype=np.float32) + 10 * root)

    def test_float64_payload(self):
        """Non-roots learn the element type from the frame."""
        results = raise_first(
            local_group(3, lambda comm: comm.broadcast(2, np.array([np.pi]) if comm.rank == 2 else None))
        )
        for result in results:
            assert result.dtype == np.float64
            assert result[0] == np.pi

    def test_root_out_of_range(self):
        """Roots outside [0, size) are argument errors."""
        results = local_group(2, lambda comm: comm.broadcast(2, np.zeros(1, dtype=np.float32)))
        assert all(isinstance(r, ArgumentError) for r in results)

    def test_root_without_buffer(self):
        """The root must supply data."""
        results = local_group(1, lambda comm: comm.broadcast(0, None))
        assert isinstance(results[0], ArgumentError)


class TestBarrier:
    """Zero-length allreduce barrier."""

    def test_no_rank_leaves_early(self):
        """No rank passes the barrier before the slowest rank enters it."""
        entered = []
        lock = threading.Lock()

        def run(comm):
            time.sleep(0.05 * comm.rank)
            with lock:
                entered.append(comm.rank)
            comm_barrier(comm)
            with lock:
                return len(entered)

        assert raise_first(local_group(4, run)) == [4, 4, 4, 4]

    @pytest.mark.slow
    def test_thousand_barriers(self):
        """A thousand consecutive barriers keep every rank in step."""
        counts = [0] * 4
        lock = threading.Lock()

        def run(comm):
            lagging = 0
            for i in range(1000):
                with lock:
                    counts[comm.rank] = i + 1
                comm_barrier(comm)
                with lock:
                    lagging += min(counts) < i + 1
            return lagging

        assert raise_first(local_group(4, run)) == [0, 0, 0, 0]
