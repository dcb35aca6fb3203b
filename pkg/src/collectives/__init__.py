"""Peer-to-peer collectives over a rendezvous-bootstrapped full mesh."""

from .communicator import Communicator, chunk_bounds, comm_connect
from .frames import ReduceOp


def comm_allreduce(comm: Communicator, buf, op: ReduceOp = ReduceOp.SUM):
    return comm.allreduce(buf, op)


def comm_broadcast(comm: Communicator, root: int, buf=None):
    return comm.broadcast(root, buf)


def comm_barrier(comm: Communicator) -> None:
    comm.barrier()


__all__ = [
    "Communicator",
    "ReduceOp",
    "chunk_bounds",
    "comm_allreduce",
    "comm_barrier",
    "comm_broadcast",
    "comm_connect",
]
