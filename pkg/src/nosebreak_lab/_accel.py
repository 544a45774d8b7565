"""Hot kernels with a numba path and a pure-numpy fallback.

Set ``NOSEBREAK_ACCEL=numpy`` to force the fallback; the default is numba
when it imports.  Both paths return identical results and the test-suite
runs each against the other.
"""
from __future__ import annotations

import os

import numpy as np

BACKEND = os.environ.get("NOSEBREAK_ACCEL", "numba").strip().lower()

try:  # pragma: no cover - import guard
    if BACKEND == "numpy":
        raise ImportError
    from numba import njit
except ImportError:  # pragma: no cover
    njit = None
    BACKEND = "numpy"

# rolling hash multiplier for k-gram matching
_HASH_MUL = np.uint64(1099511628211)


# --------------------------------------------------------------------------
# module header scan
# --------------------------------------------------------------------------

def _scan_headers_numpy(words, base, lo, hi, max_size):
    n = words.shape[0] - 5
    if n <= 0:
        return np.empty(0, dtype=np.int64)
    w = words.astype(np.int64)
    nxt, name, size, flags, init, clean = (w[i:i + n] for i in range(6))
    hdr = base + 4 * np.arange(n, dtype=np.int64)
    end = hdr + size
    ok = (size > 0) & (size <= max_size) & ((flags & ~0xFF) == 0)
    ok &= (nxt == 0) | ((nxt >= lo) & (nxt < hi))
    for ptr in (name, init, clean):
        ok &= (ptr >= lo) & (ptr < hi) & (ptr >= hdr + 24) & (ptr < end)
    ok &= end <= hi
    return np.nonzero(ok)[0].astype(np.int64)


def _scan_headers_loop(words, base, lo, hi, max_size):
    n = words.shape[0] - 5
    out = np.empty(max(n, 0), dtype=np.int64)
    k = 0
    for i in range(n):
        size = np.int64(words[i + 2])
        if size <= 0 or size > max_size:
            continue
        if np.int64(words[i + 3]) & ~np.int64(0xFF):
            continue
        hdr = base + 4 * i
        end = hdr + size
        if end > hi:
            continue
        nxt = np.int64(words[i])
        if nxt != 0 and (nxt < lo or nxt >= hi):
            continue
        good = True
        for j in (1, 4, 5):
            p = np.int64(words[i + j])
            if p < lo or p >= hi or p < hdr + 24 or p >= end:
                good = False
                break
        if good:
            out[k] = i
            k += 1
    return out[:k]


if njit is not None:
    _scan_headers_numba = njit(cache=True, nogil=True)(_scan_headers_loop)
else:  # pragma: no cover
    _scan_headers_numba = None


def scan_header_words(words: np.ndarray, base: int, lo: int, hi: int,
                      max_size: int, backend: str | None = None) -> np.ndarray:
    """Return word indices where a plausible 24-byte module header starts.

    ``words`` is the little-endian u32 view of memory starting at ``base``.
    The name, init and cleanup pointers must fall inside the region and
    inside the module span the header describes; ``next`` is 0 or in-region.
    """
    backend = backend or BACKEND
    words = np.ascontiguousarray(words, dtype=np.uint32)
    if backend == "numba" and _scan_headers_numba is not None:
        return _scan_headers_numba(words, np.int64(base), np.int64(lo),
                                   np.int64(hi), np.int64(max_size))
    return _scan_headers_numpy(words, base, lo, hi, max_size)


# --------------------------------------------------------------------------
# common byte run search (forensics)
# --------------------------------------------------------------------------

def _kgram_hashes_numpy(buf, k):
    n = buf.shape[0] - k + 1
    if n <= 0:
        return np.empty(0, dtype=np.uint64)
    h = np.zeros(n, dtype=np.uint64)
    b = buf.astype(np.uint64)
    with np.errstate(over="ignore"):
        for j in range(k):
            h = h * _HASH_MUL + b[j:j + n] + np.uint64(1)
    return h


def _common_run_numpy(needle, hay, k):
    hn = _kgram_hashes_numpy(needle, k)
    hh = _kgram_hashes_numpy(hay, k)
    if hn.size == 0 or hh.size == 0:
        return -1, -1
    order = np.argsort(hn, kind="stable")
    sorted_hn = hn[order]
    pos = np.searchsorted(sorted_hn, hh)
    pos = np.minimum(pos, sorted_hn.size - 1)
    hits = np.nonzero(sorted_hn[pos] == hh)[0]
    for j in hits:
        # verify against every needle offset sharing the hash
        p = pos[j]
        while p < sorted_hn.size and sorted_hn[p] == hh[j]:
            i = order[p]
            if np.array_equal(needle[i:i + k], hay[j:j + k]):
                return int(i), int(j)
            p += 1
    return -1, -1


def _kgram_hashes_loop(buf, k):
    n = buf.shape[0] - k + 1
    if n <= 0:
        return np.empty(0, dtype=np.uint64)
    h = np.empty(n, dtype=np.uint64)
    mul = np.uint64(1099511628211)
    for i in range(n):
        acc = np.uint64(0)
        for j in range(k):
            acc = acc * mul + np.uint64(buf[i + j]) + np.uint64(1)
        h[i] = acc
    return h


def _common_run_loop(needle, hay, k):
    hn = _kgram_hashes_loop(needle, k)
    hh = _kgram_hashes_loop(hay, k)
    if hn.shape[0] == 0 or hh.shape[0] == 0:
        return -1, -1
    order = np.argsort(hn, kind="mergesort")
    sorted_hn = hn[order]
    m = sorted_hn.shape[0]
    for j in range(hh.shape[0]):
        p = np.searchsorted(sorted_hn, hh[j])
        while p < m and sorted_hn[p] == hh[j]:
            i = order[p]
            same = True
            for t in range(k):
                if needle[i + t] != hay[j + t]:
                    same = False
                    break
            if same:
                return i, j
            p += 1
    return -1, -1


if njit is not None:
    _kgram_hashes_loop = njit(cache=True, nogil=True)(_kgram_hashes_loop)
    _common_run_numba = njit(cache=True, nogil=True)(_common_run_loop)
else:  # pragma: no cover
    _common_run_numba = None


def find_common_run(needle: bytes, hay: bytes, k: int,
                    backend: str | None = None) -> tuple[int, int] | None:
    """Locate any length-``k`` byte run shared by ``needle`` and ``hay``.

    Returns ``(offset_in_needle, offset_in_hay)`` or ``None``.
    """
    backend = backend or BACKEND
    if k <= 0:
        raise ValueError("k must be positive")
    a = np.frombuffer(bytes(needle), dtype=np.uint8)
    b = np.frombuffer(bytes(hay), dtype=np.uint8)
    if backend == "numba" and _common_run_numba is not None:
        i, j = _common_run_numba(a, b, k)
    else:
        i, j = _common_run_numpy(a, b, k)
    if i < 0:
        return None
    return int(i), int(j)


def warm_up() -> None:
    """Load or compile the numba kernels now, so no detector call pays JIT latency."""
    if BACKEND != "numba" or _scan_headers_numba is None:
        return
    w = np.zeros(8, dtype=np.uint32)
    scan_header_words(w, 0, 0, 32, 32, backend="numba")
    scan_header_words(np.frombuffer(w.tobytes(), dtype=np.uint32), 0, 0, 32, 32, backend="numba")
    find_common_run(b"abcd", b"abcd", 2, backend="numba")


warm_up()
