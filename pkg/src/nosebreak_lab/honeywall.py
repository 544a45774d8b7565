"""The honeywall: verbatim capture, outbound connection limit, inline rewrite."""
from __future__ import annotations

import ipaddress
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator

from .errors import ConfigError
from .packet import Packet

DAY_TICKS = 86_400_000


@dataclass(frozen=True)
class RewriteRule:
    match: bytes
    replacement: bytes
    label: str = ""

    def __post_init__(self):
        if len(self.match) != len(self.replacement):
            raise ConfigError(f"rule {self.label!r}: replacement must keep the match length")
        if not self.match:
            raise ConfigError(f"rule {self.label!r}: empty match")

    def apply(self, payload: bytes) -> tuple[bytes, int]:
        out = bytearray(payload)
        hits, i = 0, out.find(self.match)
        while i >= 0:
            out[i:i + len(self.match)] = self.replacement
            hits += 1
            i = out.find(self.match, i + len(self.match))
        return bytes(out), hits


DEFAULT_RULES = (
    RewriteRule(bytes.fromhex("EB02EB02EB02"), bytes.fromhex("240099DE6C3E"),
                "SHELLCODE x86 stealth NOOP"),
    RewriteRule(b"/bin/sh", b"/ben/sh", "SHELLCODE /bin/sh"),
)


def load_ruleset(path: str | Path) -> list[RewriteRule]:
    try:
        doc = json.loads(Path(path).read_text())
        return [RewriteRule(bytes.fromhex(r["match_hex"]), bytes.fromhex(r["replace_hex"]),
                            r.get("label", "")) for r in doc]
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"bad ruleset {path}: {exc}") from None


def dump_ruleset(rules, path: str | Path) -> None:
    Path(path).write_text(json.dumps([{"label": r.label, "match_hex": r.match.hex(),
                                       "replace_hex": r.replacement.hex()} for r in rules],
                                     indent=2))


@dataclass
class ConnLimitPolicy:
    max_outbound_per_day: int = 15
    window: int = DAY_TICKS


@dataclass(frozen=True)
class CaptureEntry:
    timestamp: int
    direction: str   # "out", "in" or "internal"
    stage: str       # "pre" or "post" rewrite
    packet: Packet


class CaptureLog:
    """Append-only record of everything crossing the wall."""

    def __init__(self):
        self._entries: list[CaptureEntry] = []

    def append(self, entry: CaptureEntry) -> None:
        self._entries.append(entry)

    def __iter__(self) -> Iterator[CaptureEntry]:
        return iter(self._entries)

    def __len__(self) -> int:
        return sum(e.packet.repeat for e in self._entries)

    @property
    def entries(self) -> tuple[CaptureEntry, ...]:
        return tuple(self._entries)

    def export_pcap(self, path: str | Path) -> int:
        """Write a LINKTYPE_RAW pcap; returns the packet count written."""
        n = 0
        with open(path, "wb") as fh:
            fh.write(struct.pack("<IHHiIII", 0xA1B2C3D4, 2, 4, 0, 0, 65535, 101))
            for e in self._entries:
                raw = e.packet.to_bytes()
                sec, usec = divmod(e.timestamp * 1000, 1_000_000)
                rec = struct.pack("<IIII", sec, usec, len(raw), len(raw)) + raw
                for _ in range(e.packet.repeat):
                    fh.write(rec)
                    n += 1
        return n

    def digest(self) -> str:
        import hashlib
        h = hashlib.sha256()
        for e in self._entries:
            h.update(f"{e.timestamp}:{e.direction}:{e.stage}:{e.packet.repeat}:".encode())
            h.update(e.packet.to_bytes())
        return h.hexdigest()


@dataclass(frozen=True)
class Verdict:
    action: str  # "forwarded" | "blocked"
    packet: Packet | None = None
    rewrites: int = 0

    @property
    def blocked(self) -> bool:
        return self.action == "blocked"


@dataclass
class Honeywall:
    rules: list[RewriteRule] = field(default_factory=lambda: list(DEFAULT_RULES))
    policy: ConnLimitPolicy = field(default_factory=ConnLimitPolicy)
    honeynet: str = "10.0.0.0/24"
    management: str = "10.0.1.0/24"
    capture: CaptureLog = field(default_factory=CaptureLog)
    clock: Callable[[], int] = lambda: 0

    def __post_init__(self):
        self._honeynet = ipaddress.IPv4Network(self.honeynet)
        self._management = ipaddress.IPv4Network(self.management)
        self._seen: set[tuple] = set()
        self._window_counts: dict[int, int] = {}

    def _where(self, ip: str) -> str:
        addr = ipaddress.IPv4Address(ip)
        if addr in self._honeynet:
            return "honeynet"
        if addr in self._management:
            return "management"
        return "external"

    def direction(self, packet: Packet) -> str:
        src, dst = self._where(packet.src), self._where(packet.dst)
        if src == "honeynet" and dst == "external":
            return "out"
        if src == "external":
            return "in"
        return "internal"

    def forward(self, packet: Packet) -> Verdict:
        now = self.clock()
        direction = self.direction(packet)
        self.capture.append(CaptureEntry(now, direction, "pre", packet))
        if direction == "out" and packet.proto == "tcp" and "S" in packet.flags \
                and "A" not in packet.flags and not self._admit_syn(packet, now):
            return Verdict("blocked")
        hits = 0
        if direction == "out" and packet.payload:
            payload = packet.payload
            for rule in self.rules:
                payload, n = rule.apply(payload)
                hits += n
            if hits:
                packet = packet.with_payload(payload)
        self.capture.append(CaptureEntry(now, direction, "post", packet))
        return Verdict("forwarded", packet, hits)

    def _admit_syn(self, packet: Packet, now: int) -> bool:
        window = now // self.policy.window
        key = (packet.src, packet.dst, packet.dport, window)
        if key in self._seen:
            return True
        used = self._window_counts.get(window, 0)
        if used >= self.policy.max_outbound_per_day:
            return False
        self._seen.add(key)
        self._window_counts[window] = used + 1
        return True

    def capture_query(self, *, stage: str | None = "pre", dst_port: int | None = None,
                      proto: str | None = None, contains: bytes | None = None,
                      direction: str | None = None,
                      where: Callable[[CaptureEntry], bool] | None = None) -> list[Packet]:
        out = []
        for e in self.capture:
            p = e.packet
            if stage is not None and e.stage != stage:
                continue
            if direction is not None and e.direction != direction:
                continue
            if dst_port is not None and p.dport != dst_port:
                continue
            if proto is not None and p.proto != proto:
                continue
            if contains is not None and contains not in p.payload:
                continue
            if where is not None and not where(e):
                continue
            out.append(p)
        return out
