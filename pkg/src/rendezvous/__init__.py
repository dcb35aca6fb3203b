"""Rendezvous server and client for process-group bootstrap."""

from .client import ClientSession, SessionState, client_from_env, client_init
from .server import ServerHandle, start_server

__all__ = [
    "ClientSession",
    "SessionState",
    "ServerHandle",
    "client_from_env",
    "client_init",
    "start_server",
]
