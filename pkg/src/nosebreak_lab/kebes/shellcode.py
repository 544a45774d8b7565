"""In-memory action blobs: a tiny stack machine standing in for machine code.

A blob is a wire-encoded list of ops, each a list ``[name, *args]``.  The
interpreter never touches the filesystem; disk ops are refused outright.
"""
from __future__ import annotations

from ..errors import ChannelError, PolicyError
from . import wire

DISK_OPS = frozenset({"write", "create", "unlink", "rename", "exec", "chmod", "mkdir"})
MAX_STEPS = 10_000


def assemble(*ops) -> bytes:
    return wire.encode([list(op) for op in ops])


def run(blob: bytes, api):
    try:
        program = wire.decode(blob)
    except ChannelError as exc:
        raise ValueError(f"malformed blob: {exc}") from None
    if not isinstance(program, list) or len(program) > MAX_STEPS:
        raise ValueError("malformed blob: expected a list of ops")
    stack: list = []
    for op in program:
        if not isinstance(op, list) or not op or not isinstance(op[0], str):
            raise ValueError(f"malformed op {op!r}")
        name, args = op[0], op[1:]
        if name in DISK_OPS:
            raise PolicyError(f"blob op {name!r} would touch the disk")
        if name == "push":
            if len(args) != 1:
                raise ValueError("push takes one value")
            stack.append(args[0])
        elif name == "uid":
            stack.append(api.uid)
        elif name == "euid":
            stack.append(api.euid)
        elif name == "pid":
            stack.append(api.pid)
        elif name == "time":
            stack.append(api.now())
        elif name == "hostname":
            stack.append(api.hostname)
        elif name == "concat":
            if len(stack) < 2:
                raise ValueError("concat needs two operands")
            b, a = stack.pop(), stack.pop()
            if type(a) is not type(b) or not isinstance(a, (str, bytes, list)):
                raise ValueError("concat operands must share a sequence type")
            stack.append(a + b)
        elif name == "drop":
            if not stack:
                raise ValueError("drop on empty stack")
            stack.pop()
        else:
            raise ValueError(f"unknown op {name!r}")
    return stack[-1] if stack else None
