import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nosebreak_lab import _accel

BACKENDS = ["numpy"] + (["numba"] if _accel.njit is not None else [])


def oracle_headers(raw: bytes, base: int, lo: int, hi: int, max_size: int) -> list[int]:
    # brute force over every aligned offset with struct
    out = []
    for i in range(len(raw) // 4 - 5):
        nxt, name, size, flags, init, clean = struct.unpack_from("<6I", raw, 4 * i)
        hdr = base + 4 * i
        end = hdr + size
        if not 0 < size <= max_size or flags > 0xFF or end > hi:
            continue
        if nxt and not lo <= nxt < hi:
            continue
        if all(lo <= p < hi and hdr + 24 <= p < end for p in (name, init, clean)):
            out.append(i)
    return out


def _plant(buf: bytearray, base: int, off: int, size: int) -> None:
    hdr = base + off
    struct.pack_into("<6I", buf, off, 0, hdr + 24, size, 1, hdr + 64, hdr + 128)


@pytest.mark.parametrize("backend", BACKENDS)
def test_scan_finds_planted_headers(backend):
    base, n = 0xC8800000, 1 << 16
    buf = bytearray(n)
    for off in (0, 0x1000, 0x8000):
        _plant(buf, base, off, 0x800)
    words = np.frombuffer(bytes(buf), dtype="<u4")
    got = _accel.scan_header_words(words, base, base, base + n, 1 << 20, backend=backend)
    assert list(got) == [0, 0x400, 0x2000]


@settings(max_examples=60, deadline=None)
@given(st.binary(min_size=0, max_size=600), st.lists(st.integers(0, 100), max_size=4))
def test_scan_matches_oracle(noise, plants):
    base = 0xC8800000
    buf = bytearray(noise.ljust(1024, b"\0"))
    for p in plants:
        _plant(buf, base, 4 * p, 0x200)
    raw = bytes(buf)
    lo, hi = base, base + len(raw)
    expect = oracle_headers(raw, base, lo, hi, 0x10000)
    words = np.frombuffer(raw, dtype="<u4")
    for backend in BACKENDS:
        got = _accel.scan_header_words(words, base, lo, hi, 0x10000, backend=backend)
        assert list(got) == expect


def oracle_common(needle: bytes, hay: bytes, k: int) -> set[tuple[int, int]]:
    grams = {}
    for i in range(len(needle) - k + 1):
        grams.setdefault(needle[i:i + k], []).append(i)
    return {(i, j) for j in range(len(hay) - k + 1) for i in grams.get(hay[j:j + k], [])}


@settings(max_examples=80, deadline=None)
@given(st.binary(max_size=80), st.binary(max_size=80), st.integers(1, 6))
def test_common_run_matches_oracle(needle, hay, k):
    pairs = oracle_common(needle, hay, k)
    for backend in BACKENDS:
        got = _accel.find_common_run(needle, hay, k, backend=backend)
        if pairs:
            assert got is not None
            i, j = got
            assert needle[i:i + k] == hay[j:j + k]
        else:
            assert got is None


def test_common_run_backends_agree_on_large_input():
    rng = np.random.default_rng(3)
    hay = rng.integers(0, 256, 1 << 16, dtype=np.uint8).tobytes()
    needle = rng.integers(0, 256, 4096, dtype=np.uint8).tobytes()
    needle = needle[:1000] + hay[5000:5016] + needle[1016:]
    results = {b: _accel.find_common_run(needle, hay, 16, backend=b) for b in BACKENDS}
    assert set(results.values()) == {(1000, 5000)}


def test_common_run_rejects_bad_k():
    with pytest.raises(ValueError):
        _accel.find_common_run(b"a", b"a", 0)
