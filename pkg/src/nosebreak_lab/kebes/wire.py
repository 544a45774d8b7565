"""Self-describing tagged encoding for Kebes messages.

kind byte: 0 null, 1 bool, 2 int (8-byte signed), 3 bytes, 4 text,
5 list, 6 map.  Lengths and counts are 4-byte big-endian.
"""
from __future__ import annotations

import struct

from ..errors import ChannelError

NULL, BOOL, INT, BYTES, TEXT, LIST, MAP = range(7)
INT_MIN, INT_MAX = -(1 << 63), (1 << 63) - 1
MAX_DEPTH = 64


def encode(value) -> bytes:
    out = bytearray()
    _encode(value, out, 0)
    return bytes(out)


def _encode(v, out: bytearray, depth: int) -> None:
    if depth > MAX_DEPTH:
        raise ValueError("value nested too deeply")
    if v is None:
        out.append(NULL)
    elif isinstance(v, bool):
        out += bytes((BOOL, 1 if v else 0))
    elif isinstance(v, int):
        if not INT_MIN <= v <= INT_MAX:
            raise ValueError(f"integer {v} outside signed 64-bit range")
        out.append(INT)
        out += struct.pack(">q", v)
    elif isinstance(v, (bytes, bytearray, memoryview)):
        b = bytes(v)
        out.append(BYTES)
        out += struct.pack(">I", len(b)) + b
    elif isinstance(v, str):
        b = v.encode("utf-8")
        out.append(TEXT)
        out += struct.pack(">I", len(b)) + b
    elif isinstance(v, (list, tuple)):
        out.append(LIST)
        out += struct.pack(">I", len(v))
        for item in v:
            _encode(item, out, depth + 1)
    elif isinstance(v, dict):
        out.append(MAP)
        out += struct.pack(">I", len(v))
        for k, item in v.items():
            _encode(k, out, depth + 1)
            _encode(item, out, depth + 1)
    else:
        raise TypeError(f"cannot encode {type(v).__name__}")


def decode(data: bytes):
    """Decode exactly one value; trailing bytes are an error."""
    data = bytes(data)
    value, pos = _decode(data, 0, 0)
    if pos != len(data):
        raise ChannelError(f"{len(data) - pos} trailing bytes after value")
    return value


def _need(data: bytes, pos: int, n: int) -> None:
    if pos + n > len(data):
        raise ChannelError("value truncated")


def _decode(data: bytes, pos: int, depth: int):
    if depth > MAX_DEPTH:
        raise ChannelError("value nested too deeply")
    _need(data, pos, 1)
    kind = data[pos]
    pos += 1
    if kind == NULL:
        return None, pos
    if kind == BOOL:
        _need(data, pos, 1)
        if data[pos] > 1:
            raise ChannelError("bad bool byte")
        return data[pos] == 1, pos + 1
    if kind == INT:
        _need(data, pos, 8)
        return struct.unpack_from(">q", data, pos)[0], pos + 8
    if kind in (BYTES, TEXT, LIST, MAP):
        _need(data, pos, 4)
        (n,) = struct.unpack_from(">I", data, pos)
        pos += 4
        if kind in (BYTES, TEXT):
            _need(data, pos, n)
            raw = data[pos:pos + n]
            if kind == BYTES:
                return raw, pos + n
            try:
                return raw.decode("utf-8"), pos + n
            except UnicodeDecodeError:
                raise ChannelError("invalid UTF-8 text") from None
        if kind == LIST:
            items = []
            for _ in range(n):
                item, pos = _decode(data, pos, depth + 1)
                items.append(item)
            return items, pos
        out = {}
        for _ in range(n):
            k, pos = _decode(data, pos, depth + 1)
            v, pos = _decode(data, pos, depth + 1)
            try:
                out[k] = v
            except TypeError:
                raise ChannelError("unhashable map key") from None
        return out, pos
    raise ChannelError(f"unknown kind byte {kind}")
