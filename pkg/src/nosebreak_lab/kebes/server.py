"""Kebes server: per-connection sessions driven over the simulated host.

Sessions are sans-io (bytes in, bytes out) so the same code runs over the
simulated network and over real sockets.
"""
from __future__ import annotations

import random
import string

from ..errors import (ChannelError, FramingError, HandshakeError, LabError,
                      UnsupportedMappingError, WouldBlock)
from . import shellcode, wire
from .crypt import FrameReader, Session, parse_public
from .entropy import EntropyPool, gather_entropy

DEFAULT_PORT = 31337
OK, ERROR = "ok", "error"


class ServerAPI:
    """Everything a handler may do, bound to one session process."""

    def __init__(self, host, pid: int, rng: random.Random, registry: dict):
        self._host = host
        self.pid = pid
        self.rng = rng
        self._registry = registry

    @property
    def _proc(self):
        return self._host.process(self.pid)

    @property
    def uid(self) -> int:
        return self._proc.uid

    @property
    def euid(self) -> int:
        return self._proc.euid

    @property
    def hostname(self) -> str:
        return self._host.hostname

    @property
    def ip(self) -> str:
        return self._host.ip

    def now(self) -> int:
        return self._host.clock.hi_res()

    def random_name(self, n: int) -> str:
        return "".join(self.rng.choice(string.ascii_lowercase + string.digits) for _ in range(n))

    def unsupported(self, message: str):
        raise UnsupportedMappingError(message)

    # file primitives; none of them goes through read()
    def exists(self, path: str) -> bool:
        return self._host.fs.exists(path)

    def listdir(self, path: str) -> list:
        return self._host.listdir(self.pid, path)

    def stat(self, path: str) -> dict:
        return self._host.stat(self.pid, path)

    def mmap(self, path: str) -> bytes:
        return self._host.mmap_read(self.pid, path)

    def write(self, path: str, data: bytes) -> int:
        return self._host.write_file(self.pid, path, bytes(data))

    def overwrite(self, path: str, data: bytes) -> int:
        """Write from offset 0 without truncating first."""
        host = self._host
        fd = host.open(self.pid, path, "a")
        host.process(self.pid).fds[fd].offset = 0
        try:
            return host.sys_write(self.pid, fd, bytes(data))
        finally:
            host.close(self.pid, fd)

    def rename(self, old: str, new: str) -> None:
        self._host.rename(self.pid, old, new)

    def unlink(self, path: str) -> None:
        self._host.unlink(self.pid, path)

    def fsync(self, path: str) -> None:
        self._host.fsync(self.pid, path)

    def chmod(self, path: str, mode: int) -> None:
        self._host.chmod(self.pid, path, mode)

    def exec(self, path: str, argv: list, fds: dict) -> tuple[int, int | None]:
        child = self._host.exec(self.pid, path, argv, fd_plan=fds)
        return child.pid, child.exit_status

    def shellcode(self, blob: bytes):
        return shellcode.run(blob, self)

    def command(self, name: str):
        fn = self._registry[name]
        return lambda *args: fn(self, *args)


def _add_command(api: ServerAPI, name: str, source: str) -> str:
    if not isinstance(name, str) or not isinstance(source, str):
        raise TypeError("ADDCOMMAND takes a name and source text")
    namespace: dict = {}
    exec(compile(source, f"<kebes:{name}>", "exec"), namespace)
    fn = namespace.get(name)
    if not callable(fn):
        raise ValueError(f"source does not define {name}")
    api._registry[name] = fn
    return name


class ServerSession:
    """One client connection: handshake, then framed command messages."""

    def __init__(self, host, pid: int, rng: random.Random):
        self.host = host
        self.pid = pid
        self.crypt = Session("server", rng)
        self.registry: dict = {"ADDCOMMAND": _add_command}
        self.api = ServerAPI(host, pid, rng, self.registry)
        self.reader = FrameReader()
        self.dispatched: list[bytes] = []

    def hello(self) -> bytes:
        return self.crypt.hello()

    def feed(self, data: bytes) -> bytes:
        """Consume bytes from the client, return bytes to send back."""
        out = bytearray()
        for record in self.reader.feed(data):
            if not self.crypt.established:
                self.crypt.complete(parse_public(record))
                continue
            message = wire.decode(self.crypt.open_body(record))
            for reply in self.handle(message):
                out += self.crypt.seal(wire.encode(reply))
        return bytes(out)

    def handle(self, message) -> list:
        if not isinstance(message, list):
            raise ChannelError("message is not a command list")
        replies = []
        for cmd in message:
            if not (isinstance(cmd, list) and len(cmd) == 3 and isinstance(cmd[0], bytes)
                    and isinstance(cmd[1], str) and isinstance(cmd[2], list)):
                raise ChannelError("malformed command triple")
            replies.append(self.dispatch(*cmd))
        return replies

    def dispatch(self, tag: bytes, name: str, params: list) -> list:
        self.dispatched.append(tag)
        fn = self.registry.get(name)
        if fn is None:
            return [tag, ERROR, f"unknown command {name!r}"]
        try:
            result = fn(self.api, *params)
            wire.encode(result)
        except Exception as exc:  # handler faults are reported in-band
            return [tag, ERROR, f"{type(exc).__name__}: {exc}"]
        return [tag, OK, result]


class SessionHandler:
    """A forked child serving one accepted connection on the simulated host."""

    def __init__(self, host, pid: int, fd: int, rng: random.Random):
        self.host = host
        self.pid = pid
        self.fd = fd
        self.session = ServerSession(host, pid, rng)
        self.closed = False
        host.send(pid, fd, self.session.hello())

    @property
    def busy(self) -> bool:
        if self.closed:
            return False
        return bool(self.host.socket_of(self.pid, self.fd).inbox)

    def poll(self) -> None:
        if self.closed:
            return
        sock = self.host.socket_of(self.pid, self.fd)
        try:
            data = self.host.recv(self.pid, self.fd)
        except WouldBlock:
            if sock.state in ("closed", "reset"):
                self.shutdown()
            return
        try:
            out = self.session.feed(data)
        except (ChannelError, FramingError, HandshakeError):
            self.shutdown()
            return
        if out:
            self.host.send(self.pid, self.fd, out)

    def shutdown(self) -> None:
        if self.closed:
            return
        self.closed = True
        try:
            self.host.close_socket(self.pid, self.fd)
        except LabError:
            pass
        self.host.exit(self.pid)


class KebesServer:
    """Listener: gathers entropy once, then forks a handler per connection."""

    def __init__(self, host, pid: int, port: int, pool: EntropyPool):
        self.host = host
        self.pid = pid
        self.port = port
        self.pool = pool
        self.sessions: list[SessionHandler] = []
        self.listen_fd = host.listen(pid, port)

    @classmethod
    def start(cls, host, pid: int, port: int = DEFAULT_PORT,
              scheduler_seed: int | None = None) -> "KebesServer":
        seed = host.seed if scheduler_seed is None else scheduler_seed
        pool = gather_entropy(host, pid, scheduler_seed=f"{seed}:{pid}")
        return cls(host, pid, port, pool)

    def session_rng(self) -> random.Random:
        n = len(self.sessions)
        self.pool.stir(["session", n], n, self.host.clock.hi_res())
        return self.pool.generator()

    def poll(self) -> None:
        host = self.host
        while True:
            try:
                fd = host.accept(self.pid, self.listen_fd)
            except WouldBlock:
                break
            child = host.fork(self.pid)
            host.close(self.pid, fd)
            host.close(child.pid, self.listen_fd)
            handler = SessionHandler(host, child.pid, fd, self.session_rng())
            self.sessions.append(handler)
            host.services[child.pid] = handler
