"""Builtin programs the simulated loader can run.

A program is a function taking a :class:`ProgramContext` and returning an
exit status, or ``None`` when it stays resident (a daemon).
"""
from __future__ import annotations

import shlex
from dataclasses import dataclass
from typing import Callable

from ..errors import LabError, WouldBlock
from .image import Image

PROGRAMS: dict[str, Callable[["ProgramContext"], int | None]] = {}

# argv[1] prefix that trips the planted overflow in the SUID tool
OVERFLOW_TRIGGER = "A" * 128
SEARCH_PATH = ("/bin", "/usr/bin", "/usr/local/bin", "/sbin", "/usr/sbin")


def program(name: str):
    def register(fn):
        PROGRAMS[name] = fn
        return fn
    return register


@dataclass
class ProgramContext:
    host: object
    proc: object
    argv: list[str]
    image: Image

    @property
    def pid(self) -> int:
        return self.proc.pid

    def write(self, fd: int, data: bytes | str) -> None:
        if isinstance(data, str):
            data = data.encode()
        if fd in self.proc.fds:
            self.host.sys_write(self.pid, fd, data)

    def read_all(self, fd: int, bs: int = 4096) -> bytes:
        out = bytearray()
        while True:
            try:
                chunk = self.host.sys_read(self.pid, fd, bs)
            except WouldBlock:
                break
            if not chunk:
                break
            out += chunk
        return bytes(out)


@program("true")
def _true(ctx):
    return 0


@program("echo")
def _echo(ctx):
    ctx.write(1, " ".join(ctx.argv[1:]) + "\n")
    return 0


@program("cat")
def _cat(ctx):
    paths = ctx.argv[1:]
    if not paths:
        if 0 in ctx.proc.fds:
            ctx.write(1, ctx.read_all(0))
        return 0
    status = 0
    for path in paths:
        try:
            fd = ctx.host.open(ctx.pid, path)
        except LabError as exc:
            ctx.write(2, f"cat: {path}: {exc}\n")
            status = 1
            continue
        ctx.write(1, ctx.read_all(fd))
        ctx.host.close(ctx.pid, fd)
    return status


@program("ls")
def _ls(ctx):
    path = ctx.argv[1] if len(ctx.argv) > 1 else "/"
    try:
        names = ctx.host.listdir(ctx.pid, path)
    except LabError as exc:
        ctx.write(2, f"ls: {path}: {exc}\n")
        return 2
    ctx.write(1, "".join(n + "\n" for n in names))
    return 0


@program("id")
def _id(ctx):
    p = ctx.proc
    ctx.write(1, f"uid={p.uid} euid={p.euid}\n")
    return 0


@program("uptime")
def _uptime(ctx):
    ctx.write(1, f" up {ctx.host.clock.tick // 1000} s, load average: 0.00\n")
    return 0


@program("dd")
def _dd(ctx):
    opts = dict(a.split("=", 1) for a in ctx.argv[1:] if "=" in a)
    src, dst = opts.get("if", "/dev/zero"), opts.get("of", "/dev/null")
    bs, count = int(opts.get("bs", 512)), int(opts.get("count", 1))
    ifd = ctx.host.open(ctx.pid, src)
    ofd = ctx.host.open(ctx.pid, dst, "w")
    node = ctx.proc.fds[ifd].node
    if node.kind == "device" and node.rule in ("zero", "null"):
        chunk = ctx.host.sys_read(ctx.pid, ifd, bs, repeat=count)
        if chunk:
            ctx.host.sys_write(ctx.pid, ofd, chunk)
    else:
        for _ in range(count):
            chunk = ctx.host.sys_read(ctx.pid, ifd, bs)
            if not chunk:
                break
            ctx.host.sys_write(ctx.pid, ofd, chunk)
    return 0


@program("sh")
def _sh(ctx):
    if len(ctx.argv) < 3 or ctx.argv[1] != "-c":
        return 0
    words = shlex.split(ctx.argv[2])
    if not words:
        return 0
    path = words[0]
    if "/" not in path:
        path = next((f"{d}/{path}" for d in SEARCH_PATH if ctx.host.fs.exists(f"{d}/{path}")), path)
    child = ctx.host.exec(ctx.pid, path, words)
    return child.exit_status or 0


@program("suid-vuln")
def _suid_vuln(ctx):
    """A SUID tool with a planted overflow in argument parsing.

    The overflow is declarative: an argv[1] starting with the trigger makes
    the tool exec argv[2:] with uid 0.
    """
    if len(ctx.argv) > 2 and ctx.argv[1].startswith(OVERFLOW_TRIGGER) and ctx.proc.euid == 0:
        child = ctx.host.exec(ctx.pid, ctx.argv[2], ctx.argv[2:], uid=0)
        return child.exit_status if child.exit_status is not None else 0
    ctx.write(2, "lpstat: bad option\n")
    return 1


@program("vuln-cgi")
def _vuln_cgi(ctx):
    """Guestbook CGI with a planted overflow.

    ``argv[1]`` starting with the trigger makes it treat ``argv[2]`` as a
    hex-encoded executable, drop it under a random name and run it with
    ``argv[3:]`` under the web server's uid.
    """
    args = ctx.argv[1:]
    if len(args) >= 2 and args[0].startswith(OVERFLOW_TRIGGER):
        host = ctx.host
        try:
            blob = bytes.fromhex(args[1])
        except ValueError:
            return 139
        path = "/tmp/." + "".join(host.rng.choice("abcdefghijklmnopqrstuvwxyz") for _ in range(10))
        host.write_file(ctx.pid, path, blob)
        host.chmod(ctx.pid, path, 0o755)
        try:
            host.exec(ctx.pid, path, [path] + args[2:])
        finally:
            host.unlink(ctx.pid, path)
        return 0
    ctx.write(1, "Content-Type: text/html\n\n<p>guestbook</p>\n")
    return 0


@program("httpd")
def _httpd(ctx):
    from ..scenario import WebServer

    port = int(ctx.argv[1]) if len(ctx.argv) > 1 else 443
    ctx.host.services[ctx.pid] = WebServer(ctx.host, ctx.pid, port)
    return None


@program("kebes-server")
def _kebes_server(ctx):
    from ..kebes.server import KebesServer

    port = int(ctx.argv[1]) if len(ctx.argv) > 1 else 31337
    seed = ctx.argv[2] if len(ctx.argv) > 2 else None
    ctx.host.services[ctx.pid] = KebesServer.start(ctx.host, ctx.pid, port, scheduler_seed=seed)
    return None


@program("nosebreak-tool")
def _nosebreak_tool(ctx):
    from ..nosebreak import removal_tool_main

    return removal_tool_main(ctx)


@program("kjump")
def _kjump(ctx):
    """Userland half of the minimal jump helper: ``kjump <hex address>``."""
    from ..nosebreak import call_kernel_address

    try:
        call_kernel_address(ctx.host, int(ctx.argv[1], 16), uid=ctx.proc.euid)
    except LabError as exc:
        ctx.write(2, f"kjump: {exc}\n")
        return 1
    return 0
