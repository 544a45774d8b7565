"""Unauthenticated Diffie-Hellman plus an AES-CBC message channel.

Handshake: ``len:4 BE | public value BE`` each way.  Frames:
``len:4 BE | iv:16 | ciphertext``.  Decrypted bodies are
``level:1 | payload_len:4 BE | zlib(payload) | zero pad``.
"""
from __future__ import annotations

import hashlib
import os
import random
import struct
import zlib
from dataclasses import dataclass, field

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from ..errors import ChannelError, FramingError, HandshakeError, StateError

# 2048-bit MODP group (RFC 3526 group 14)
MODP_P = int(
    "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74"
    "020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F1437"
    "4FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED"
    "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF05"
    "98DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB"
    "9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B"
    "E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF695581718"
    "3995497CEA956AE515D2261898FA051015728E5A8AACAA68FFFFFFFFFFFFFFFF", 16)
MODP_G = 2
KEY_BYTES = 256
MAX_FRAME = 1 << 24
BLOCK = 16
BODY_HEAD = struct.Struct(">BI")
# zlib FLEVEL header bits for each compression level
_FLEVEL = {0: 0, 1: 0, 2: 1, 3: 1, 4: 1, 5: 1, 6: 2, 7: 3, 8: 3, 9: 3}


def _length_prefixed(data: bytes) -> bytes:
    return struct.pack(">I", len(data)) + data


def check_public(value: int) -> None:
    if not 2 <= value <= MODP_P - 2:
        raise HandshakeError("peer public value outside the group range")


@dataclass
class Session:
    role: str
    rng: random.Random
    dh_private: int = 0
    dh_public: int = 0
    peer_public: int = 0
    shared_key: bytes = b""
    send_counter: int = 0
    recv_counter: int = 0
    _iv_source: object = field(default=None, repr=False)

    def __post_init__(self):
        if self.role not in ("client", "server"):
            raise ValueError("role must be client or server")
        self.dh_private = self.rng.randrange(2, MODP_P - 2)
        self.dh_public = pow(MODP_G, self.dh_private, MODP_P)
        if self._iv_source is None:
            self._iv_source = lambda n: self.rng.randbytes(n)

    @classmethod
    def from_pool(cls, role: str, pool) -> "Session":
        return cls(role, pool.generator())

    @classmethod
    def from_seed(cls, role: str, seed) -> "Session":
        return cls(role, random.Random(seed))

    # -- handshake ------------------------------------------------------

    @property
    def established(self) -> bool:
        return bool(self.shared_key)

    def hello(self) -> bytes:
        return _length_prefixed(self.dh_public.to_bytes(KEY_BYTES, "big"))

    def complete(self, peer_public: int) -> bytes:
        check_public(peer_public)
        self.peer_public = peer_public
        secret = pow(peer_public, self.dh_private, MODP_P)
        self.shared_key = hashlib.sha256(secret.to_bytes(KEY_BYTES, "big")).digest()
        return self.shared_key

    # -- channel --------------------------------------------------------

    def _cipher(self, iv: bytes) -> Cipher:
        if not self.established:
            raise StateError("handshake not complete")
        return Cipher(algorithms.AES(self.shared_key), modes.CBC(iv))

    def seal(self, plaintext: bytes) -> bytes:
        level = self.rng.randrange(10)
        packed = zlib.compress(bytes(plaintext), level)
        level = canonical_level(plaintext, level, packed)
        body = BODY_HEAD.pack(level, len(packed)) + packed
        pad = self.rng.randrange(256)
        pad += -(len(body) + pad) % BLOCK
        body += bytes(pad)
        iv = self._iv_source(BLOCK)
        enc = self._cipher(iv).encryptor()
        ct = enc.update(body) + enc.finalize()
        self.send_counter += 1
        return _length_prefixed(iv + ct)

    def open(self, frame: bytes) -> bytes:
        """Open one complete frame; raises FramingError or ChannelError."""
        frame = bytes(frame)
        if len(frame) < 4:
            raise FramingError("frame shorter than its length prefix")
        (n,) = struct.unpack(">I", frame[:4])
        if n != len(frame) - 4:
            raise FramingError(f"frame length {n} but {len(frame) - 4} bytes present")
        return self.open_body(frame[4:])

    def open_body(self, blob: bytes) -> bytes:
        if len(blob) < 2 * BLOCK or len(blob) % BLOCK:
            raise FramingError("ciphertext is not a whole number of blocks")
        iv, ct = blob[:BLOCK], blob[BLOCK:]
        dec = self._cipher(iv).decryptor()
        body = dec.update(ct) + dec.finalize()
        payload = parse_body(body)
        self.recv_counter += 1
        return payload


def parse_body(body: bytes) -> bytes:
    if len(body) < BODY_HEAD.size:
        raise ChannelError("body too short")
    level, n = BODY_HEAD.unpack_from(body)
    if level > 9:
        raise ChannelError(f"compression level {level} out of range")
    start = BODY_HEAD.size
    if start + n > len(body) or n < 2:
        raise ChannelError("payload length exceeds body")
    packed = body[start:start + n]
    if (packed[1] >> 6) != _FLEVEL[level]:
        raise ChannelError("compression header disagrees with recorded level")
    d = zlib.decompressobj()
    try:
        payload = d.decompress(packed)
    except zlib.error as exc:
        raise ChannelError(f"bad compressed payload: {exc}") from None
    if not d.eof or d.unused_data:
        raise ChannelError("compressed payload does not end where recorded")
    if any(body[start + n:]):
        raise ChannelError("non-zero padding")
    if canonical_level(payload, level, packed) != level or zlib.compress(payload, level) != packed:
        raise ChannelError("payload is not the canonical encoding at the recorded level")
    return payload


def canonical_level(payload: bytes, level: int, packed: bytes) -> int:
    """Smallest level whose output equals ``packed``.

    Levels that compress identically would make the level byte malleable;
    recording the smallest one leaves a single valid value per body.
    """
    for lower in range(level):
        if _FLEVEL[lower] == _FLEVEL[level] and zlib.compress(bytes(payload), lower) == packed:
            return lower
    return level


class FrameReader:
    """Reassemble length-prefixed records from a byte stream."""

    def __init__(self):
        self.buf = bytearray()

    def feed(self, data: bytes) -> list[bytes]:
        self.buf += data
        out = []
        while len(self.buf) >= 4:
            (n,) = struct.unpack(">I", self.buf[:4])
            if n > MAX_FRAME:
                raise FramingError(f"record length {n} exceeds limit")
            if len(self.buf) < 4 + n:
                break
            out.append(bytes(self.buf[4:4 + n]))
            del self.buf[:4 + n]
        return out

    @property
    def pending(self) -> int:
        return len(self.buf)


def parse_public(record: bytes) -> int:
    if not record:
        raise HandshakeError("empty public value")
    value = int.from_bytes(record, "big")
    check_public(value)
    return value


def os_iv(n: int) -> bytes:
    return os.urandom(n)
