"""Encrypted command channel whose server avoids the logged read() path."""
from .client import KebesClient, RemoteError, SimTransport, SocketTransport
from .crypt import FrameReader, Session
from .entropy import POOL_BYTES, EntropyPool, gather_entropy
from .server import DEFAULT_PORT, KebesServer, ServerSession

__all__ = ["KebesClient", "RemoteError", "SimTransport", "SocketTransport", "FrameReader",
           "Session", "POOL_BYTES", "EntropyPool", "gather_entropy", "DEFAULT_PORT",
           "KebesServer", "ServerSession"]
