"""Disk-forensics oracle over the simulated filesystem's write history."""
from __future__ import annotations

from ._accel import find_common_run


def surviving_runs(original: bytes, blobs, k: int = 16) -> list[tuple[int, int, int]]:
    """(blob index, offset in original, offset in blob) for each blob sharing a k-run."""
    out = []
    if len(original) < k:
        return out
    for idx, blob in enumerate(blobs):
        if len(blob) < k:
            continue
        hit = find_common_run(original, blob, k)
        if hit is not None:
            out.append((idx, *hit))
    return out


def audit_deletion(fs, ino: int, original: bytes, since_version: int, k: int = 16) -> list:
    """Every content version written from ``since_version`` on, plus the whole disk."""
    blobs = fs.versions(ino)[since_version:] + fs.disk_blobs()
    return surviving_runs(original, blobs, k)
