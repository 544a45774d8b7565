"""Benchmark the numba and numpy backends of the two hot kernels.

    python3 benchmarks/bench_kernels.py [--repeat N] [--json out.json]

Each kernel runs on both backends over the same inputs; outputs are
compared before any timing is reported.  Times are the best of N runs
after one warm-up call (JIT compile or cache load is excluded).
"""
from __future__ import annotations

import argparse
import json
import platform
import time

import numpy as np

from nosebreak_lab import _accel
from nosebreak_lab.lab import Lab, LabConfig
from nosebreak_lab.simkernel.memory import MODULE_BASE, MODULE_END


def best_of(fn, repeat: int) -> float:
    fn()
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def scan_case(repeat: int) -> dict:
    words = Lab.build(LabConfig()).host.memory.words()
    args = (words, MODULE_BASE, MODULE_BASE, MODULE_END, 1 << 20)
    out = {b: _accel.scan_header_words(*args, backend=b) for b in backends()}
    ref = next(iter(out.values()))
    assert all(np.array_equal(ref, v) for v in out.values()), "backends disagree"
    return {"kernel": "scan_header_words", "input": f"{words.nbytes >> 20} MiB module region",
            **{b: best_of(lambda b=b: _accel.scan_header_words(*args, backend=b), repeat)
               for b in backends()}}


def common_run_case(repeat: int, hay_bytes: int) -> dict:
    rng = np.random.default_rng(0)
    needle = rng.integers(0, 256, 4096, dtype=np.uint8).tobytes()
    hay = rng.integers(0, 256, hay_bytes, dtype=np.uint8).tobytes()  # no shared run: full search
    out = {b: _accel.find_common_run(needle, hay, 16, backend=b) for b in backends()}
    assert len(set(out.values())) == 1, "backends disagree"
    return {"kernel": "find_common_run", "input": f"4 KiB vs {hay_bytes >> 10} KiB, k=16",
            **{b: best_of(lambda b=b: _accel.find_common_run(needle, hay, 16, backend=b), repeat)
               for b in backends()}}


def backends() -> list[str]:
    return ["numpy"] + (["numba"] if _accel.BACKEND == "numba" else [])


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write the rows as JSON")
    args = ap.parse_args(argv)
    rows = [scan_case(args.repeat)] + [common_run_case(args.repeat, n << 10)
                                       for n in (64, 512, 4096)]
    print(f"python {platform.python_version()}, numpy {np.__version__}, backend {_accel.BACKEND}")
    print(f"{'kernel':20s} {'input':30s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for r in rows:
        nb = r.get("numba")
        print(f"{r['kernel']:20s} {r['input']:30s} {r['numpy'] * 1e3:10.2f} "
              f"{nb * 1e3 if nb else float('nan'):10.2f} "
              f"{r['numpy'] / nb if nb else float('nan'):7.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
