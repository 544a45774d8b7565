"""The monitor under test: a hidden module hooking read().

Every read() is copied into UDP records sent to a collector.  The
packets are hidden from the host itself, and the interface counters are
falsified in a version-dependent way.

Record layout (little-endian) is a lab convention::

    magic u32 | version u16 | counter u32 | sec u32 | usec u32 | pid u32 |
    uid u32 | fd u32 | command 12s | data_len u32 | 22 reserved | data
"""
from __future__ import annotations

import hashlib
import ipaddress
import random
import struct
from dataclasses import dataclass, field

from .errors import StateError
from .packet import Packet
from .simkernel.host import Host, KernelFunction, ReadCall
from .simkernel.memory import NR_READ, KernelModule, ModuleDescriptor

RECORD_HEAD = struct.Struct("<IHIIIIII12sI")
RECORD_HEADER_SIZE = 68
RESERVED = RECORD_HEADER_SIZE - RECORD_HEAD.size
MAX_CHUNK = 1024
VERSIONS = {"v216": 0x0216, "v217": 0x0217}

MODULE_SIZE = 0x4000
HOOK_OFFSET = 0x748
STRINGS_OFFSET = 0x2000
VAR_BLOCK_OFFSET = MODULE_SIZE - 0x400
VAR_SLOTS = 64

# what 2.1.7 keeps around to rewrite /proc/net/dev
PROC_STRINGS = (
    b"Inter-|   Receive                                                |  Transmit\n\0"
    b" face |bytes    packets errs drop fifo frame compressed multicast|bytes    packets"
    b" errs drop fifo colls carrier compressed\n\0"
    b"%6s:%8lu %7lu %4lu %4lu %4lu %5lu %10lu %9lu %8lu %7lu %4lu %4lu %4lu %5lu %7lu %10lu\n\0"
)


def ip_conversion_table() -> bytes:
    """Dotted-quad octet strings "0".."255", NUL separated."""
    return b"".join(str(i).encode() + b"\0" for i in range(256))


@dataclass
class SebekConfig:
    version: str = "v217"
    magic: int = 0xD0D0D0D0
    src_port: int = 1101
    dst_port: int = 1101
    dst_ip: str = "10.0.1.10"
    module_name: str = "371048611"
    interface: str = "eth0"
    compile_seed: int = 0

    def __post_init__(self):
        if self.version not in VERSIONS:
            raise ValueError(f"unknown Sebek version {self.version!r}")
        if not (self.module_name.isdigit() and int(self.module_name) < 10 ** 9):
            raise ValueError("module name must be a decimal number below 10^9")
        ipaddress.IPv4Address(self.dst_ip)

    @classmethod
    def randomized(cls, seed: int, version: str = "v217", **overrides) -> "SebekConfig":
        """Fresh install as an operator would compile it: random name, ports, magic."""
        rng = random.Random(f"sebek-config:{seed}")
        fields = dict(version=version,
                      magic=rng.randrange(1 << 16, 1 << 32),
                      src_port=rng.randrange(1024, 65536),
                      dst_port=rng.randrange(1024, 65536),
                      dst_ip=f"10.0.1.{rng.randrange(2, 255)}",
                      module_name=str(rng.randrange(10 ** 9)),
                      compile_seed=rng.randrange(1 << 30))
        fields.update(overrides)
        return cls(**fields)

    def to_dict(self) -> dict:
        return {"version": self.version, "magic": self.magic, "src_port": self.src_port,
                "dst_port": self.dst_port, "dst_ip": self.dst_ip,
                "module_name": self.module_name, "interface": self.interface,
                "compile_seed": self.compile_seed}


@dataclass
class SebekRecord:
    magic: int
    version: int
    counter: int
    sec: int
    usec: int
    pid: int
    uid: int
    fd: int
    command: bytes
    data: bytes
    repeat: int = 1

    @property
    def command_name(self) -> str:
        return self.command.rstrip(b"\0").decode("latin-1")

    def pack(self) -> bytes:
        return (RECORD_HEAD.pack(self.magic, self.version, self.counter, self.sec,
                                 self.usec, self.pid, self.uid, self.fd, self.command,
                                 len(self.data)) + bytes(RESERVED) + self.data)

    @classmethod
    def unpack(cls, raw: bytes) -> "SebekRecord":
        if len(raw) < RECORD_HEADER_SIZE:
            raise ValueError("short record")
        f = RECORD_HEAD.unpack_from(raw)
        data = raw[RECORD_HEADER_SIZE:RECORD_HEADER_SIZE + f[9]]
        if len(data) != f[9]:
            raise ValueError("truncated record data")
        return cls(*f[:9], data)


def command_field(program_name: str) -> bytes:
    """First 12 characters of the program name, NUL padded."""
    return program_name.encode("latin-1", "replace")[:12].ljust(12, b"\0")


def _symbol_names(rng: random.Random, n: int) -> list[str]:
    names: set[str] = set()
    while len(names) < n:
        names.add(rng.choice("abcdefghijklmnopqrstuvwxyz") + str(rng.randrange(10 ** rng.randint(1, 3))))
    return sorted(names)


class Sebek:
    """One installed monitor instance."""

    def __init__(self, host: Host, config: SebekConfig):
        self.host = host
        self.config = config
        self.active = False
        self.counter = 0
        self.module: KernelModule | None = None
        self.deducted_bytes = 0
        self.deducted_packets = 0
        self.emitted: list[Packet] = []
        self.dropped_at_load = 0
        self._orig_slot = 0

    # -- module image -----------------------------------------------------

    def _descriptor(self) -> ModuleDescriptor:
        cfg = self.config
        rng = random.Random(f"sebek-compile:{cfg.compile_seed}")
        init_off = 0x200 + 4 * rng.randrange(32)
        cleanup_off = 0x400 + 4 * rng.randrange(32)
        fn_offsets = [HOOK_OFFSET, init_off, cleanup_off] + \
                     [0x800 + 0x40 * i for i in range(rng.randint(3, 6))]
        symbols = list(zip(_symbol_names(rng, len(fn_offsets)), fn_offsets))

        slots = list(range(VAR_SLOTS))
        rng.shuffle(slots)
        ip_packed = ipaddress.IPv4Address(cfg.dst_ip).packed
        u32 = lambda v: struct.pack("<I", v & 0xFFFFFFFF)
        values = {
            "magic": u32(cfg.magic),
            "src_port": u32(cfg.src_port),
            "dst_port": u32(cfg.dst_port),
            "dst_ip": ip_packed,
            "orig_read": u32(0),  # filled once the table entry is known
            "pkt_counter": u32(0),
            "state": u32(1),
            "ifindex": u32(2),
            "rand_state": u32(rng.randrange(1 << 16, 1 << 32)),
        }
        var_block = {name: (VAR_BLOCK_OFFSET + 4 * slots[i], data)
                     for i, (name, data) in enumerate(values.items())}
        self._orig_slot = var_block["orig_read"][0]
        self._counter_slot = var_block["pkt_counter"][0]

        layout = [(VAR_BLOCK_OFFSET - 0x40, cfg.dst_ip.encode() + b"\0"),
                  (VAR_BLOCK_OFFSET - 0x20, cfg.interface.encode() + b"\0")]
        if cfg.version == "v217":
            layout.append((STRINGS_OFFSET, ip_conversion_table() + PROC_STRINGS))

        functions = {
            HOOK_OFFSET: KernelFunction("sebek_read", self._hook),
            init_off: KernelFunction("sebek_init", lambda host: None, jumpable=True),
            cleanup_off: KernelFunction("sebek_cleanup", self.cleanup, jumpable=True),
        }
        return ModuleDescriptor(name=cfg.module_name, size=MODULE_SIZE, symbols=symbols,
                                hidden=True, init_offset=init_off, cleanup_offset=cleanup_off,
                                var_block=var_block, layout=layout, functions=functions,
                                fill_seed=None, flags=1)

    def _fill_code(self) -> None:
        # .text is compile-seeded noise between the string table and the data section
        rng = random.Random(f"sebek-code:{self.config.compile_seed}")
        start = self.module.base + 0x200
        self.host.memory.write(start, rng.randbytes(STRINGS_OFFSET - 0x300))

    # -- lifecycle --------------------------------------------------------

    def install(self) -> KernelModule:
        host = self.host
        desc = self._descriptor()
        self.module = host.load_module(desc)
        self._fill_code()
        self._orig_slot += self.module.base
        self._counter_slot += self.module.base
        original = host.table[NR_READ]
        host.memory.write_u32(self._orig_slot, original)
        host.table[NR_READ] = self.module.base + HOOK_OFFSET
        if self.config.version == "v217":
            host.proc_net_dev_filters.append(self._falsify)
            host.devices[self.config.interface].tx_taps.append(self._tap)
        self.active = True
        return self.module

    def cleanup(self, host: Host | None = None) -> None:
        """Restore the read() entry from the stored original; memory is left as is."""
        host = host or self.host
        if not self.active:
            raise StateError("Sebek is not installed")
        host.table[NR_READ] = host.memory.read_u32(self._orig_slot)
        if self._falsify in host.proc_net_dev_filters:
            host.proc_net_dev_filters.remove(self._falsify)
        taps = host.devices[self.config.interface].tx_taps
        if self._tap in taps:
            taps.remove(self._tap)
        self.active = False

    # -- logging path -----------------------------------------------------

    def _hook(self, host: Host, call: ReadCall) -> bytes:
        original = host.functions[host.memory.read_u32(self._orig_slot)]
        data = original.entry(host, call)
        if self.active and data:
            self.on_read(host, call, data)
        return data

    def on_read(self, host: Host, call: ReadCall, data: bytes) -> list[Packet]:
        proc = host.process(call.pid)
        cfg = self.config
        ns = host.clock.hi_res()
        packets = []
        for i in range(0, len(data), MAX_CHUNK):
            rec = SebekRecord(cfg.magic, VERSIONS[cfg.version], self.counter,
                              ns // 1_000_000_000, (ns // 1000) % 1_000_000,
                              proc.pid, proc.uid, call.fd, command_field(proc.comm),
                              data[i:i + MAX_CHUNK])
            self.counter += call.repeat
            pkt = Packet(host.ip, cfg.dst_ip, "udp", rec.pack(), cfg.src_port, cfg.dst_port,
                         hidden=True, repeat=call.repeat)
            host.transmit(pkt, cfg.interface)
            if cfg.version == "v216":
                # uncount the emission right away; the NIC counts it only when it leaves
                host.devices[cfg.interface].adjust_tx(-pkt.total_size, -pkt.repeat)
            packets.append(pkt)
        host.memory.write_u32(self._counter_slot, self.counter)
        self.emitted.extend(packets)
        return packets

    def _is_own(self, packet: Packet) -> bool:
        return (packet.hidden and packet.proto == "udp" and packet.dport == self.config.dst_port
                and packet.payload[:4] == struct.pack("<I", self.config.magic))

    def _tap(self, dev, packet: Packet) -> None:
        if self._is_own(packet):
            self.deducted_bytes += packet.total_size
            self.deducted_packets += packet.repeat

    def _falsify(self, name: str, counters: dict) -> dict:
        if name != self.config.interface:
            return counters
        out = dict(counters)
        out["tx_bytes"] -= self.deducted_bytes
        out["tx_packets"] -= self.deducted_packets
        return out


def install(host: Host, config: SebekConfig | None = None) -> KernelModule:
    current = host.monitors.get("sebek")
    if current is not None and current.active:
        raise StateError("Sebek already installed")
    inst = Sebek(host, config or SebekConfig())
    module = inst.install()
    host.monitors["sebek"] = inst
    return module


def instance(host: Host) -> Sebek | None:
    return host.monitors.get("sebek")


def cleanup(host: Host) -> None:
    inst = instance(host)
    if inst is None:
        raise StateError("Sebek is not installed")
    inst.cleanup(host)


@dataclass
class Collector:
    """The Sebek server: the adversary's ground-truth view of read() activity."""

    ip: str = "10.0.1.10"
    port: int = 1101
    magic: int = 0xD0D0D0D0
    records: list[SebekRecord] = field(default_factory=list)
    ignored: int = 0

    @classmethod
    def for_config(cls, cfg: SebekConfig) -> "Collector":
        return cls(cfg.dst_ip, cfg.dst_port, cfg.magic)

    def receive(self, packet: Packet) -> list[SebekRecord]:
        if packet.proto != "udp" or packet.dport != self.port or packet.dst != self.ip:
            self.ignored += packet.repeat
            return []
        try:
            rec = SebekRecord.unpack(packet.payload)
        except (ValueError, struct.error):
            self.ignored += packet.repeat
            return []
        if rec.magic != self.magic:
            self.ignored += packet.repeat
            return []
        rec.repeat = packet.repeat
        self.records.append(rec)
        return [rec]

    # the collector is also a network endpoint
    def deliver(self, packet: Packet, net=None) -> None:
        self.receive(packet)

    @property
    def record_count(self) -> int:
        return sum(r.repeat for r in self.records)

    def data_stream(self) -> bytes:
        """Concatenated record data; a train contributes its data once."""
        return b"".join(r.data for r in self.records)

    def digest(self) -> str:
        h = hashlib.sha256()
        for r in self.records:
            h.update(r.pack())
            h.update(struct.pack("<I", r.repeat))
        return h.hexdigest()


collector_receive = Collector.receive
