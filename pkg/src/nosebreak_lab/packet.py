"""Simulated IPv4 packets."""
from __future__ import annotations

import ipaddress
import struct
from dataclasses import dataclass, field, replace

IP_HEADER = 20
TRANSPORT_HEADER = {"udp": 8, "tcp": 20, "icmp": 8}
PROTO_NUMBER = {"icmp": 1, "tcp": 6, "udp": 17}

ICMP_ECHO_REQUEST = 8
ICMP_ECHO_REPLY = 0


@dataclass
class Packet:
    """One packet, or a train of ``repeat`` back-to-back copies.

    Copies in a train share every wire byte; for monitor emissions they
    differ only in the record counter, which the collector reconstructs.
    ``meta`` carries simulation bookkeeping that is never on the wire.
    """

    src: str
    dst: str
    proto: str
    payload: bytes = b""
    sport: int = 0
    dport: int = 0
    flags: str = ""
    hidden: bool = False
    icmp_type: int = ICMP_ECHO_REQUEST
    repeat: int = 1
    meta: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def size(self) -> int:
        """Wire size in bytes of a single copy."""
        return IP_HEADER + TRANSPORT_HEADER[self.proto] + len(self.payload)

    @property
    def total_size(self) -> int:
        return self.size * self.repeat

    def with_payload(self, payload: bytes) -> "Packet":
        return replace(self, payload=payload, meta=dict(self.meta))

    def split(self, n: int) -> tuple["Packet", "Packet"]:
        """Split a train into ``n`` leading copies and the rest."""
        head = replace(self, repeat=n, meta=dict(self.meta))
        tail = replace(self, repeat=self.repeat - n, meta=dict(self.meta))
        return head, tail

    def to_bytes(self) -> bytes:
        """Raw IPv4 datagram bytes (checksums filled in)."""
        if self.proto == "udp":
            body = struct.pack("!HHHH", self.sport, self.dport,
                               8 + len(self.payload), 0) + self.payload
        elif self.proto == "tcp":
            bits = 0
            for ch, bit in (("F", 1), ("S", 2), ("R", 4), ("P", 8), ("A", 16)):
                if ch in self.flags:
                    bits |= bit
            body = struct.pack("!HHIIBBHHH", self.sport, self.dport, 0, 0,
                               5 << 4, bits, 65535, 0, 0) + self.payload
        else:
            head = struct.pack("!BBHHH", self.icmp_type, 0, 0,
                               self.sport, self.dport)
            csum = _checksum(head + self.payload)
            body = head[:2] + struct.pack("!H", csum) + head[4:] + self.payload
        total = IP_HEADER + len(body)
        ip = struct.pack("!BBHHHBBH4s4s", 0x45, 0, total, 0, 0, 64,
                         PROTO_NUMBER[self.proto], 0,
                         ipaddress.IPv4Address(self.src).packed,
                         ipaddress.IPv4Address(self.dst).packed)
        ip = ip[:10] + struct.pack("!H", _checksum(ip)) + ip[12:]
        return ip + body


def _checksum(data: bytes) -> int:
    if len(data) % 2:
        data += b"\0"
    s = sum(struct.unpack(f"!{len(data) // 2}H", data))
    while s >> 16:
        s = (s & 0xFFFF) + (s >> 16)
    return ~s & 0xFFFF
