"""Assemble a complete honeynet: host, Sebek, honeywall, collector, internet."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, WouldBlock
from .honeywall import ConnLimitPolicy, Honeywall, load_ruleset, DEFAULT_RULES
from .netsim import Calibration, Network
from .packet import ICMP_ECHO_REPLY, ICMP_ECHO_REQUEST, Packet
from .sebek import Collector, Sebek, SebekConfig
from . import sebek as sebek_mod
from .simkernel import Host, HostConfig, boot, default_host_config, stock_module
from .simkernel.host import TCP_MSS

DEFAULT_MODULES = ("8390", "3c59x", "ext3", "usbcore")
ECHO_PORT = 7


class Internet:
    """Everything beyond the wall.

    Remote peers register by (ip, port).  Unclaimed hosts accept any SYN,
    answer pings and echo data sent to port 7.
    """

    def __init__(self):
        self.peers: dict[tuple[str, int], "RemotePeer"] = {}
        self.received: list[Packet] = []

    def deliver(self, packet: Packet, net: Network) -> None:
        self.received.append(packet)
        peer = self.peers.get((packet.dst, packet.dport))
        if peer is not None:
            peer.on_packet(packet)
            return
        if packet.proto == "icmp" and packet.icmp_type == ICMP_ECHO_REQUEST:
            net.inject(Packet(packet.dst, packet.src, "icmp", packet.payload, packet.sport,
                              packet.dport, icmp_type=ICMP_ECHO_REPLY, meta=dict(packet.meta)))
        elif packet.proto == "tcp":
            if "S" in packet.flags and "A" not in packet.flags:
                net.inject(Packet(packet.dst, packet.src, "tcp", b"", packet.dport,
                                  packet.sport, "SA"))
            elif packet.payload and packet.dport == ECHO_PORT:
                net.inject(Packet(packet.dst, packet.src, "tcp", packet.payload,
                                  packet.dport, packet.sport, "PA"))


class RemotePeer:
    """A TCP endpoint on the internet, driven by test or client code."""

    def __init__(self, net: Network, internet: Internet, ip: str, port: int):
        self.net = net
        self.ip = ip
        self.port = port
        self.state = "closed"
        self.remote: tuple[str, int] | None = None
        self.inbox = bytearray()
        internet.peers[(ip, port)] = self

    def connect(self, ip: str, port: int) -> None:
        self.remote = (ip, port)
        self.state = "syn-sent"
        self.net.inject(Packet(self.ip, ip, "tcp", b"", self.port, port, "S"))

    def on_packet(self, packet: Packet) -> None:
        if "R" in packet.flags:
            self.state = "reset"
        elif "S" in packet.flags and "A" in packet.flags:
            self.state = "established"
        if packet.payload:
            self.inbox.extend(packet.payload)
        if "F" in packet.flags:
            self.state = "closed"

    def send(self, data: bytes) -> None:
        ip, port = self.remote
        for i in range(0, len(data), TCP_MSS):
            self.net.inject(Packet(self.ip, ip, "tcp", bytes(data[i:i + TCP_MSS]),
                                   self.port, port, "PA"))

    def recv(self, n: int = 1 << 30) -> bytes:
        if not self.inbox:
            raise WouldBlock("nothing received")
        data = bytes(self.inbox[:n])
        del self.inbox[:n]
        return data

    def close(self) -> None:
        if self.state == "established":
            ip, port = self.remote
            self.net.inject(Packet(self.ip, ip, "tcp", b"", self.port, port, "FA"))
        self.state = "closed"


@dataclass
class LabConfig:
    host: dict | None = None
    sebek: dict | None = field(default_factory=dict)   # None: no monitor
    wall: bool = True
    rules: list | None = None                          # ruleset entries
    max_outbound_per_day: int = 15
    modules: list = field(default_factory=lambda: list(DEFAULT_MODULES))
    link: dict = field(default_factory=dict)

    KEYS = ("host", "sebek", "wall", "rules", "max_outbound_per_day", "modules", "link")

    @classmethod
    def from_dict(cls, doc: dict) -> "LabConfig":
        unknown = set(doc) - set(cls.KEYS)
        if unknown:
            raise ConfigError(f"unknown lab keys: {sorted(unknown)}")
        return cls(**{k: doc[k] for k in cls.KEYS if k in doc})

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.KEYS}


class Lab:
    def __init__(self, host: Host, net: Network, wall: Honeywall | None,
                 collector: Collector, internet: Internet, monitor: Sebek | None,
                 config: LabConfig):
        self.host = host
        self.net = net
        self.wall = wall
        self.collector = collector
        self.internet = internet
        self.monitor = monitor
        self.config = config

    @classmethod
    def build(cls, config: LabConfig | dict | None = None, *, seed: int | None = None) -> "Lab":
        if config is None:
            config = LabConfig()
        elif isinstance(config, dict):
            config = LabConfig.from_dict(config)
        if config.host:
            # a partial host section overrides the default host key by key
            doc = default_host_config().to_dict()
            doc.update(config.host)
            hc = HostConfig.from_dict(doc)
        else:
            hc = default_host_config()
        if seed is not None:
            hc.seed = seed
        host = boot(hc)
        monitor = None
        if config.sebek is not None:
            sc = SebekConfig(**config.sebek)
            sebek_mod.install(host, sc)
            monitor = sebek_mod.instance(host)
            collector = Collector.for_config(sc)
        else:
            collector = Collector()
        for name in config.modules:
            host.load_module(stock_module(name, hc.seed))
        wall = None
        if config.wall:
            if config.rules is None:
                rules = list(DEFAULT_RULES)
            else:
                from .honeywall import RewriteRule
                rules = [RewriteRule(bytes.fromhex(r["match_hex"]), bytes.fromhex(r["replace_hex"]),
                                     r.get("label", "")) for r in config.rules]
            wall = Honeywall(rules, ConnLimitPolicy(config.max_outbound_per_day))
        cal = Calibration(**config.link) if config.link else Calibration()
        net = Network(host, wall=wall, calibration=cal)
        internet = Internet()
        net.add_endpoint(collector.ip, collector)
        net.default_endpoint = internet
        return cls(host, net, wall, collector, internet, monitor, config)

    @classmethod
    def load(cls, path: str | Path) -> "Lab":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read lab state {path}: {exc}") from None
        return cls.build(doc)

    def peer(self, ip: str, port: int) -> RemotePeer:
        return RemotePeer(self.net, self.internet, ip, port)

    def run(self, ticks: int) -> None:
        self.net.run(ticks)

    def settle(self, max_ticks: int = 100_000) -> int:
        return self.net.run_until_idle(max_ticks)


def build_lab(**kwargs) -> Lab:
    return Lab.build(LabConfig(**kwargs))
