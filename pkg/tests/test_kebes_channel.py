import hashlib
import random
import struct
import zlib

import pytest
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes
from hypothesis import given, settings, strategies as st

from nosebreak_lab.errors import ChannelError, FramingError, HandshakeError, StateError
from nosebreak_lab.kebes import wire
from nosebreak_lab.kebes.crypt import (MAX_FRAME, MODP_G, MODP_P, FrameReader, Session,
                                       parse_public)

values = st.recursive(
    st.none() | st.booleans() | st.integers(-(1 << 63), (1 << 63) - 1) | st.binary(max_size=40)
    | st.text(max_size=20),
    lambda inner: st.lists(inner, max_size=5)
    | st.dictionaries(st.text(max_size=5), inner, max_size=4),
    max_leaves=30)


def _norm(v):
    if isinstance(v, tuple):
        return [_norm(x) for x in v]
    if isinstance(v, list):
        return [_norm(x) for x in v]
    if isinstance(v, dict):
        return {k: _norm(x) for k, x in v.items()}
    return v


@settings(max_examples=300, deadline=None)
@given(values)
def test_wire_round_trip(v):
    assert wire.decode(wire.encode(v)) == _norm(v)


@settings(max_examples=300, deadline=None)
@given(st.binary(max_size=60))
def test_wire_decode_never_crashes_unexpectedly(raw):
    try:
        wire.decode(raw)
    except ChannelError:
        pass


def test_wire_rejects_trailing_and_bad_values():
    with pytest.raises(ChannelError):
        wire.decode(wire.encode(1) + b"\x00")
    with pytest.raises(ValueError):
        wire.encode(1 << 63)
    with pytest.raises(TypeError):
        wire.encode(1.5)
    with pytest.raises(ChannelError):
        wire.decode(b"\x04\x00\x00\x00\x02\xff\xfe")  # invalid utf-8


def _pair(seed=0):
    a = Session.from_seed("client", f"a{seed}")
    b = Session.from_seed("server", f"b{seed}")
    a.complete(b.dh_public)
    b.complete(a.dh_public)
    return a, b


def test_dh_agreement_matches_direct_computation():
    a, b = _pair()
    secret = pow(MODP_G, a.dh_private * b.dh_private, MODP_P)
    assert a.shared_key == b.shared_key == hashlib.sha256(secret.to_bytes(256, "big")).digest()
    assert MODP_P.bit_length() == 2048


def test_handshake_guards():
    s = Session.from_seed("client", 1)
    for bad in (0, 1, MODP_P - 1, MODP_P):
        with pytest.raises(HandshakeError):
            s.complete(bad)
    with pytest.raises(StateError):
        s.seal(b"x")
    assert len(s.hello()) == 4 + 256
    assert parse_public(s.hello()[4:]) == s.dh_public


PAIR = _pair(9)


def oracle_open(key: bytes, frame: bytes) -> bytes:
    # independent body parser: length, iv, AES-CBC, >BI header, zlib, zero pad
    (n,) = struct.unpack(">I", frame[:4])
    blob = frame[4:4 + n]
    dec = Cipher(algorithms.AES(key), modes.CBC(blob[:16])).decryptor()
    body = dec.update(blob[16:]) + dec.finalize()
    level, clen = struct.unpack(">BI", body[:5])
    assert 0 <= level <= 9 and not any(body[5 + clen:])
    return zlib.decompress(body[5:5 + clen])


@settings(max_examples=100, deadline=None)
@given(st.binary(max_size=3000))
def test_seal_open_round_trip(msg):
    a, b = PAIR
    frame = a.seal(msg)
    assert b.open(frame) == msg
    assert oracle_open(a.shared_key, frame) == msg
    assert (len(frame) - 4) % 16 == 0


def test_same_plaintext_differs_on_wire():
    a, _ = _pair()
    frames = {a.seal(b"same") for _ in range(20)}
    assert len(frames) == 20
    assert len({len(f) for f in frames}) > 1  # random padding


def test_corruption_is_never_accepted():
    a, b = _pair()
    rng = random.Random(7)
    silent = 0
    for i in range(1000):
        msg = rng.randbytes(rng.randrange(1, 200))
        frame = bytearray(a.seal(msg))
        pos = rng.randrange(4, len(frame))
        frame[pos] ^= 1 << rng.randrange(8)
        try:
            b.open(bytes(frame))
            silent += 1
        except (ChannelError, FramingError):
            pass
    assert silent == 0


def test_frame_length_mismatch():
    a, b = _pair()
    frame = a.seal(b"x")
    with pytest.raises(FramingError):
        b.open(frame + b"\0")
    with pytest.raises(FramingError):
        b.open(frame[:3])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.binary(max_size=100), max_size=8), st.data())
def test_frame_reader_reassembles_any_split(records, data):
    stream = b"".join(struct.pack(">I", len(r)) + r for r in records)
    cuts = sorted(data.draw(st.lists(st.integers(0, len(stream)), max_size=6)))
    reader, out, prev = FrameReader(), [], 0
    for c in cuts + [len(stream)]:
        out += reader.feed(stream[prev:c])
        prev = c
    assert out == records and reader.pending == 0


def test_frame_reader_limit():
    with pytest.raises(FramingError):
        FrameReader().feed(struct.pack(">I", MAX_FRAME + 1))
