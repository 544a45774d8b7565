"""Simulated executable image format.

``\\x7fSIM`` | u32 big-endian header length | JSON header | opaque body.
The header names the builtin program to run and the library load plan.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

from ..errors import ExecError

MAGIC = b"\x7fSIM"


@dataclass
class LibrarySpec:
    path: str
    load: str = "mmap"  # "mmap" or "read"

    def __post_init__(self):
        if self.load not in ("mmap", "read"):
            raise ValueError(f"library load mode must be mmap or read, got {self.load!r}")


@dataclass
class Image:
    program: str
    libs: list[LibrarySpec] = field(default_factory=list)
    args: list[str] = field(default_factory=list)
    body: bytes = b""

    def to_bytes(self) -> bytes:
        header = json.dumps({"program": self.program,
                             "libs": [{"path": l.path, "load": l.load} for l in self.libs],
                             "args": self.args}, sort_keys=True).encode()
        return MAGIC + struct.pack(">I", len(header)) + header + self.body


def parse_image(raw: bytes) -> Image:
    raw = bytes(raw)
    if len(raw) < 8 or raw[:4] != MAGIC:
        raise ExecError("not a sim executable")
    (hlen,) = struct.unpack(">I", raw[4:8])
    if 8 + hlen > len(raw):
        raise ExecError("truncated image header")
    try:
        header = json.loads(raw[8:8 + hlen])
        libs = [LibrarySpec(l["path"], l.get("load", "mmap")) for l in header.get("libs", [])]
        return Image(header["program"], libs, list(header.get("args", [])), raw[8 + hlen:])
    except (ValueError, KeyError, TypeError) as exc:
        raise ExecError(f"malformed image header: {exc}") from None
