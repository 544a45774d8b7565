"""Entropy pool fed by clock jitter, walker races and file contents."""
from __future__ import annotations

import hashlib
import random
import struct
import threading
from dataclasses import dataclass, field

from ..errors import LabError
from . import wire

POOL_BYTES = 245          # 1960 bits
DIGEST_SPAN = 1 << 20     # files above this contribute only their tail
WALKERS = 2


@dataclass
class EntropyPool:
    data: bytearray = field(default_factory=lambda: bytearray(POOL_BYTES))
    stir_counter: int = 0

    def __post_init__(self):
        if len(self.data) != POOL_BYTES:
            raise ValueError(f"pool must be {POOL_BYTES} bytes")

    def stir(self, item, position: int, timestamp: int) -> None:
        h = hashlib.sha1(wire.encode([item, position, timestamp])
                         + struct.pack(">Q", self.stir_counter)).digest()
        off = self.stir_counter * len(h) % POOL_BYTES
        for i, b in enumerate(h):
            self.data[(off + i) % POOL_BYTES] ^= b
        self.stir_counter = (self.stir_counter + 1) & ((1 << 64) - 1)

    def generator(self) -> random.Random:
        """A PRNG seeded from the current pool state."""
        return random.Random(bytes(self.data) + struct.pack(">Q", self.stir_counter))

    def snapshot(self) -> bytes:
        return bytes(self.data)


def file_digest(host, pid: int, path: str) -> bytes | None:
    """SHA-1 of the file, or of its final megabyte; None when unreadable."""
    try:
        content = host.mmap_read(pid, path)
    except LabError:
        return None
    return hashlib.sha1(content[-DIGEST_SPAN:]).digest()


def _walk_item(host, pid, path, walker, jitter):
    start = host.clock.hi_res() + jitter()
    digest = file_digest(host, pid, path)
    stop = host.clock.hi_res() + jitter()
    return [start, walker, digest, stop]


def gather_entropy(host, pid: int, pool: EntropyPool | None = None, *,
                   scheduler_seed: int | None = 0, live: bool = False,
                   roots=("/var", "/tmp")) -> EntropyPool:
    """Two walkers over the union of ``roots``; each file item is stirred in.

    Simulation mode interleaves the walkers with a seeded scheduler whose
    draws also perturb the timestamps (the modeled thread race).  Live mode
    runs real threads.
    """
    pool = pool or EntropyPool()
    files = sorted({p for r in roots for p in host.fs.walk(r)})
    if live:
        _gather_threads(host, pid, pool, files)
        return pool
    sched = random.Random(f"entropy-scheduler:{scheduler_seed}")
    jitter = lambda: sched.randrange(1000)
    pool.stir(["boot", host.clock.hi_res() + jitter()], -1, host.clock.hi_res())
    cursors = [0] * WALKERS
    while any(c < len(files) for c in cursors):
        ready = [w for w in range(WALKERS) if cursors[w] < len(files)]
        w = sched.choice(ready)
        pos = cursors[w]
        cursors[w] += 1
        item = _walk_item(host, pid, files[pos], w, jitter)
        pool.stir(item, pos, host.clock.hi_res() + jitter())
    return pool


def _gather_threads(host, pid, pool, files):
    import time

    lock = threading.Lock()
    jitter = lambda: time.perf_counter_ns() & 0x3FF

    def walker(w: int) -> None:
        for pos, path in enumerate(files):
            with lock:
                item = _walk_item(host, pid, path, w, jitter)
                pool.stir(item, pos, time.perf_counter_ns())

    with lock:
        pool.stir(["boot", time.perf_counter_ns()], -1, time.perf_counter_ns())
    threads = [threading.Thread(target=walker, args=(w,)) for w in range(WALKERS)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
