"""Kebes client and its transports (simulated network or a real socket)."""
from __future__ import annotations

import random
import socket

from ..errors import ChannelError, LabError, WouldBlock
from . import commands, wire
from .crypt import FrameReader, Session, parse_public
from .server import ERROR, OK


class RemoteError(LabError):
    """A command came back with error status."""


class ClientSession:
    def __init__(self, rng: random.Random):
        self.crypt = Session("client", rng)
        self.reader = FrameReader()
        self.replies: dict[bytes, list] = {}
        self.order: list[bytes] = []

    def hello(self) -> bytes:
        return self.crypt.hello()

    def feed(self, data: bytes) -> None:
        for record in self.reader.feed(data):
            if not self.crypt.established:
                self.crypt.complete(parse_public(record))
                continue
            reply = wire.decode(self.crypt.open_body(record))
            if not (isinstance(reply, list) and len(reply) == 3 and isinstance(reply[0], bytes)
                    and reply[1] in (OK, ERROR)):
                raise ChannelError("malformed reply")
            self.replies[reply[0]] = reply
            self.order.append(reply[0])

    def message(self, commands_: list) -> bytes:
        return self.crypt.seal(wire.encode(commands_))


class SimTransport:
    """A client on the internet side of the simulated wall."""

    def __init__(self, lab, server_ip: str, server_port: int,
                 client_ip: str = "192.0.2.66", client_port: int = 40000,
                 max_ticks: int = 20_000):
        self.lab = lab
        self.server = (server_ip, server_port)
        self.peer = lab.peer(client_ip, client_port)
        self.max_ticks = max_ticks

    def connect(self) -> None:
        self.peer.connect(*self.server)
        self._pump(lambda: self.peer.state != "syn-sent")
        if self.peer.state != "established":
            raise LabError(f"connection to {self.server} failed ({self.peer.state})")

    def send(self, data: bytes) -> None:
        self.peer.send(data)

    def _pump(self, done) -> None:
        net = self.lab.net
        quiet = 0
        for _ in range(self.max_ticks):
            net.tick()
            if done():
                return
            quiet = quiet + 1 if net.idle() else 0
            if quiet >= 2:
                return

    def recv(self) -> bytes:
        self._pump(lambda: bool(self.peer.inbox))
        try:
            return self.peer.recv()
        except WouldBlock:
            return b""

    def close(self) -> None:
        self.peer.close()
        self.lab.net.run_until_idle()


class SocketTransport:
    def __init__(self, addr: tuple[str, int], timeout: float = 10.0):
        self.addr = addr
        self.timeout = timeout
        self.sock: socket.socket | None = None

    def connect(self) -> None:
        self.sock = socket.create_connection(self.addr, timeout=self.timeout)

    def send(self, data: bytes) -> None:
        self.sock.sendall(data)

    def recv(self) -> bytes:
        try:
            return self.sock.recv(1 << 16)
        except socket.timeout:
            return b""

    def close(self) -> None:
        if self.sock is not None:
            self.sock.close()


class KebesClient:
    def __init__(self, transport, rng: random.Random | None = None, seed=0):
        self.transport = transport
        self.session = ClientSession(rng or random.Random(f"kebes-client:{seed}"))
        self._tags = 0

    def handshake(self) -> bytes:
        self.transport.connect()
        self.transport.send(self.session.hello())
        while not self.session.crypt.established:
            data = self.transport.recv()
            if not data:
                raise LabError("server did not answer the handshake")
            self.session.feed(data)
        return self.session.crypt.shared_key

    def new_tag(self) -> bytes:
        self._tags += 1
        return b"t%06d" % self._tags

    def batch(self, calls: list[tuple[str, list]]) -> list[list]:
        """Send several commands in one message; replies come back by tag."""
        triples = [[self.new_tag(), name, list(params)] for name, params in calls]
        self.transport.send(self.session.message(triples))
        want = [t[0] for t in triples]
        while not all(t in self.session.replies for t in want):
            data = self.transport.recv()
            if not data:
                raise LabError("connection went quiet with replies outstanding")
            self.session.feed(data)
        return [self.session.replies.pop(t) for t in want]

    def call(self, name: str, *params):
        _, status, result = self.batch([(name, list(params))])[0]
        if status != OK:
            raise RemoteError(result)
        return result

    def add_command(self, name: str, source: str | None = None) -> str:
        return self.call("ADDCOMMAND", name, source or commands.source_of(name))

    def add_toolset(self, names=commands.TOOLSET) -> list[str]:
        replies = self.batch([("ADDCOMMAND", [n, commands.source_of(n)]) for n in names])
        bad = [r for r in replies if r[1] != OK]
        if bad:
            raise RemoteError(bad[0][2])
        return [r[2] for r in replies]

    def close(self) -> None:
        self.transport.close()
