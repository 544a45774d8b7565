"""The simulated target host."""
from __future__ import annotations

import hashlib
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import (ConfigError, DescriptorError, ExecError, KernelFault,
                      LookupFailure, NotFound, PrivilegeError, ProcessError,
                      ResourceError, StateError, UnsupportedMappingError,
                      WouldBlock)
from ..packet import ICMP_ECHO_REPLY, ICMP_ECHO_REQUEST, Packet
from .config import HostConfig, executable_image, file_content
from .fs import DEVICE, PROCFS, REGULAR, FileNode, FileSystem
from .image import parse_image
from .memory import (HEADER_SIZE, MODULE_END, NR_READ, NR_WRITE, PAGE,
                     KernelModule, Memory, ModuleDescriptor, ModuleHeader,
                     generate_syscall_table, initial_module_cursor)

TCP_MSS = 1400
EPHEMERAL_BASE = 32768


class SimClock:
    """Millisecond ticks plus a jittered nanosecond clock."""

    def __init__(self, seed: int):
        self.tick = 0
        self._rng = random.Random(f"clock:{seed}")
        self._last = 0

    def advance(self, n: int = 1) -> None:
        self.tick += n

    def hi_res(self) -> int:
        base = self.tick * 1_000_000
        t = max(base, self._last + 1) + self._rng.randrange(0, 997)
        self._last = t
        return t


@dataclass(frozen=True)
class DeviceCounters:
    rx_bytes: int = 0
    rx_packets: int = 0
    tx_bytes: int = 0
    tx_packets: int = 0

    def as_dict(self) -> dict:
        return {"rx_bytes": self.rx_bytes, "rx_packets": self.rx_packets,
                "tx_bytes": self.tx_bytes, "tx_packets": self.tx_packets}


@dataclass
class NetDevice:
    name: str
    rx_bytes: int = 0
    rx_packets: int = 0
    tx_bytes: int = 0
    tx_packets: int = 0
    txq: list = field(default_factory=list)
    tx_path: Callable | None = None
    tx_taps: list = field(default_factory=list)

    def transmit(self, packet: Packet) -> None:
        """Hand a packet to the wire; counting happens when it actually leaves."""
        if self.tx_path is not None:
            self.tx_path(packet)
        else:
            self.txq.append(packet)

    def count_tx(self, packet: Packet) -> None:
        self.tx_bytes += packet.total_size
        self.tx_packets += packet.repeat
        for tap in self.tx_taps:
            tap(self, packet)

    def count_rx(self, packet: Packet) -> None:
        self.rx_bytes += packet.total_size
        self.rx_packets += packet.repeat

    def adjust_tx(self, d_bytes: int, d_packets: int) -> None:
        self.tx_bytes = max(0, self.tx_bytes + d_bytes)
        self.tx_packets = max(0, self.tx_packets + d_packets)

    def counters(self) -> DeviceCounters:
        return DeviceCounters(self.rx_bytes, self.rx_packets, self.tx_bytes, self.tx_packets)


@dataclass
class Socket:
    proto: str
    local_port: int
    remote_ip: str = ""
    remote_port: int = 0
    state: str = "closed"
    inbox: bytearray = field(default_factory=bytearray)
    pending: deque = field(default_factory=deque)  # listening sockets only

    def take(self, n: int) -> bytes:
        data = bytes(self.inbox[:n])
        del self.inbox[:n]
        return data


@dataclass
class OpenFile:
    kind: str  # "file" | "socket" | "listen"
    node: FileNode | None = None
    path: str = ""
    offset: int = 0
    readable: bool = True
    writable: bool = False
    sock: Socket | None = None


@dataclass
class Process:
    pid: int
    ppid: int
    uid: int
    program_name: str
    euid: int = -1
    fds: dict[int, OpenFile] = field(default_factory=dict)
    alive: bool = True
    exit_status: int | None = None

    def __post_init__(self):
        if self.euid < 0:
            self.euid = self.uid

    @property
    def comm(self) -> str:
        """Kernel task name: basename of the executed path."""
        return self.program_name.rsplit("/", 1)[-1] or self.program_name

    def next_fd(self) -> int:
        fd = 0
        while fd in self.fds:
            fd += 1
        return fd


@dataclass(frozen=True)
class ReadCall:
    pid: int
    fd: int
    n: int
    repeat: int = 1


@dataclass
class KernelFunction:
    """Code living at a kernel address.

    ``jumpable`` functions take only the host and may be invoked by a raw
    jump; syscall handlers need a call frame and fault when jumped into.
    """

    name: str
    entry: Callable
    jumpable: bool = False


def _sys_read_impl(host: "Host", call: ReadCall) -> bytes:
    proc = host.process(call.pid)
    of = proc.fds.get(call.fd)
    if of is None or not of.readable:
        raise DescriptorError(f"fd {call.fd} not open for reading")
    if call.n <= 0:
        return b""
    if of.kind == "socket":
        if not of.sock.inbox:
            raise WouldBlock("socket queue empty")
        return of.sock.take(call.n)
    if of.kind != "file":
        raise DescriptorError(f"fd {call.fd} is not readable")
    node = of.node
    if node.kind == DEVICE:
        if node.rule == "zero":
            return bytes(call.n)
        if node.rule == "null":
            return b""
        if call.repeat > 1:
            raise ValueError("repeated reads are only defined for stateless devices")
        return host.urandom.randbytes(call.n)
    if call.repeat > 1:
        raise ValueError("repeated reads are only defined for stateless devices")
    if node.kind == PROCFS:
        content = host.render_proc(node.rule).encode()
    else:
        content = node.content
    data = bytes(content[of.offset:of.offset + call.n])
    of.offset += len(data)
    return data


def _sys_write_impl(host: "Host", call: tuple) -> int:
    pid, fd, data = call
    proc = host.process(pid)
    of = proc.fds.get(fd)
    if of is None or not of.writable:
        raise DescriptorError(f"fd {fd} not open for writing")
    if of.kind == "socket":
        host.send(pid, fd, data)
        return len(data)
    n = host.fs.write_inode(of.node, of.offset, data)
    if of.node.kind == REGULAR:
        of.offset += n
    return n


class Host:
    """Complete kernel-visible state of one machine.

    All mutation goes through methods; one logical owner drives it.
    """

    def __init__(self, config: HostConfig, fs: FileSystem | None = None):
        config.validate()
        self.config = config
        self.seed = config.seed
        self.ip = config.ip
        self.hostname = config.hostname
        self.clock = SimClock(config.seed)
        self.table = generate_syscall_table(config.layout_seed)
        self.memory = Memory()
        self.functions: dict[int, KernelFunction] = {}
        self.modules: list[KernelModule] = []
        self._module_cursor = initial_module_cursor(config.layout_seed)
        self.module_list_head = 0
        self.urandom = random.Random(f"urandom:{config.seed}")
        self.rng = random.Random(f"host:{config.seed}")
        self.trace: list[tuple[str, int, int]] = []
        self.crashed = False
        self.net = None
        self.local_capture: list[Packet] = []
        self.proc_net_dev_filters: list[Callable[[str, dict], dict]] = []
        self.services: dict[int, object] = {}
        self.monitors: dict[str, object] = {}
        self.users = dict(config.users) or {"root": 0}
        self.processes: dict[int, Process] = {}
        self._next_pid = 1
        self._next_port = EPHEMERAL_BASE
        self._listeners: dict[int, Socket] = {}
        self._conns: dict[tuple[int, str, int], Socket] = {}

        self.functions[self.table[NR_READ]] = KernelFunction("sys_read", _sys_read_impl)
        self.functions[self.table[NR_WRITE]] = KernelFunction("sys_write", _sys_write_impl)

        self.devices: dict[str, NetDevice] = {}
        for d in config.devices:
            self.devices[d["name"]] = NetDevice(d["name"], int(d.get("rx_bytes", 0)),
                                                int(d.get("rx_packets", 0)),
                                                int(d.get("tx_bytes", 0)),
                                                int(d.get("tx_packets", 0)))
        if fs is None:
            fs = FileSystem()
            for f in config.files:
                fs.create(f["path"], file_content(f, config.seed), kind=f.get("kind", REGULAR),
                          rule=f.get("rule", ""), mode=int(f.get("mode", 0o644)),
                          uid=int(f.get("uid", 0)))
            for e in config.executables:
                fs.create(e["path"], executable_image(e, config.seed),
                          mode=int(e.get("mode", 0o755)), uid=int(e.get("uid", 0)))
        self.fs = fs
        self.init = self._new_process(0, 0, "/sbin/init")

    # ------------------------------------------------------------------
    # processes
    # ------------------------------------------------------------------

    def _new_process(self, ppid: int, uid: int, program_name: str,
                     fds: dict | None = None) -> Process:
        proc = Process(self._next_pid, ppid, uid, program_name, fds=dict(fds or {}))
        self._next_pid += 1
        self.processes[proc.pid] = proc
        return proc

    def process(self, pid: int) -> Process:
        proc = self.processes.get(pid)
        if proc is None or not proc.alive:
            raise ProcessError(f"no live process {pid}")
        return proc

    def live_processes(self) -> list[Process]:
        return [p for p in self.processes.values() if p.alive]

    def spawn(self, program_name: str, uid: int, ppid: int = 1) -> Process:
        """Create a process directly (a login shell, a test actor)."""
        return self._new_process(ppid, uid, program_name)

    def fork(self, pid: int) -> Process:
        parent = self.process(pid)
        fds = {fd: OpenFile(of.kind, of.node, of.path, of.offset, of.readable,
                            of.writable, of.sock) for fd, of in parent.fds.items()}
        child = self._new_process(parent.pid, parent.uid, parent.program_name, fds)
        child.euid = parent.euid
        self.trace.append(("fork", pid, 1))
        return child

    def exit(self, pid: int, status: int = 0) -> None:
        proc = self.process(pid)
        proc.alive = False
        proc.exit_status = status
        proc.fds.clear()
        self.services.pop(pid, None)

    kill = exit

    def exec(self, parent_pid: int, path: str, argv: list[str] | None = None,
             fd_plan: dict[int, str | None] | None = None, uid: int | None = None) -> Process:
        """fork+exec ``path``; runs the program to completion unless it daemonizes."""
        from .programs import PROGRAMS, ProgramContext

        parent = self.process(parent_pid)
        try:
            node = self.fs.lookup(path)
        except NotFound:
            raise ExecError(f"{path}: no such file") from None
        if not node.executable():
            raise ExecError(f"{path}: not executable")
        image = parse_image(node.content)
        fds = {fd: OpenFile(of.kind, of.node, of.path, of.offset, of.readable,
                            of.writable, of.sock) for fd, of in parent.fds.items()}
        child = self._new_process(parent.pid, parent.uid if uid is None else uid, path, fds)
        child.euid = parent.euid if uid is None else uid
        if node.mode & 0o4000:
            child.euid = node.uid
        for fd, target in (fd_plan or {}).items():
            if target is None:
                child.fds.pop(fd, None)
                continue
            try:
                self._install_fd(child, fd, target, write=fd != 0)
            except NotFound:
                self._abort(child)
                raise ExecError(f"cannot open {target} for fd {fd}") from None
        self.trace.append(("exec", child.pid, 1))
        for lib in image.libs:
            if lib.load == "mmap":
                self.mmap_read(child.pid, lib.path)
            else:
                lfd = self.open(child.pid, lib.path)
                self.sys_read(child.pid, lfd, self.fs.lookup(lib.path).size)
                self.close(child.pid, lfd)
        program = PROGRAMS.get(image.program)
        if program is None:
            self._abort(child)
            raise ExecError(f"{path}: unknown program {image.program!r}")
        status = program(ProgramContext(self, child, list(argv or [path]), image))
        if status is not None and child.alive:
            self.exit(child.pid, int(status))
        return child

    def _abort(self, proc: Process) -> None:
        proc.alive = False
        proc.exit_status = 127

    # ------------------------------------------------------------------
    # files
    # ------------------------------------------------------------------

    def _may_create(self, proc: Process, path: str) -> bool:
        if proc.euid == 0:
            return True
        return any(path.startswith(p) for p in ("/tmp/", "/var/tmp/", "/dev/shm/"))

    def _install_fd(self, proc: Process, fd: int, path: str, write: bool) -> None:
        if write:
            if self.fs.exists(path):
                node = self.fs.lookup(path)
                if node.kind == REGULAR:
                    self.fs.truncate(path)
            elif self._may_create(proc, path):
                node = self.fs.create(path, mode=0o600, uid=proc.euid)
            else:
                raise PrivilegeError(f"cannot create {path}")
            proc.fds[fd] = OpenFile("file", node, path, 0, False, True)
        else:
            node = self.fs.lookup(path)
            proc.fds[fd] = OpenFile("file", node, path, 0, True, False)

    def open(self, pid: int, path: str, mode: str = "r") -> int:
        proc = self.process(pid)
        if "w" in mode or "a" in mode:
            if not self.fs.exists(path):
                if not self._may_create(proc, path):
                    raise PrivilegeError(f"cannot create {path}")
                self.fs.create(path, mode=0o600, uid=proc.euid)
            node = self.fs.lookup(path)
            if node.kind == REGULAR and proc.euid not in (0, node.uid):
                raise PrivilegeError(f"cannot write {path}")
            if "w" in mode and node.kind == REGULAR:
                self.fs.truncate(path)
            offset = node.size if "a" in mode else 0
            of = OpenFile("file", node, path, offset, "+" in mode, True)
        else:
            node = self.fs.lookup(path)
            if not node.readable_by(proc.euid):
                raise PrivilegeError(f"cannot read {path}")
            of = OpenFile("file", node, path, 0, True, "+" in mode)
        fd = proc.next_fd()
        proc.fds[fd] = of
        self.trace.append(("open", pid, 1))
        return fd

    def close(self, pid: int, fd: int) -> None:
        proc = self.process(pid)
        if proc.fds.pop(fd, None) is None:
            raise DescriptorError(f"fd {fd} not open")

    def sys_read(self, pid: int, fd: int, n: int, repeat: int = 1) -> bytes:
        """read(2), dispatched through the live syscall table entry.

        ``repeat`` issues that many identical reads in one go (only for
        stateless devices); the returned bytes are one read's worth.
        """
        proc = self.process(pid)
        if fd not in proc.fds:
            raise DescriptorError(f"fd {fd} not open")
        fn = self.functions.get(self.table[NR_READ])
        if fn is None:
            self.crashed = True
            raise KernelFault(f"sys_read entry {self.table[NR_READ]:#x} unmapped")
        self.trace.append(("read", pid, repeat))
        return fn.entry(self, ReadCall(pid, fd, n, repeat))

    def sys_write(self, pid: int, fd: int, data: bytes) -> int:
        fn = self.functions.get(self.table[NR_WRITE])
        if fn is None:
            self.crashed = True
            raise KernelFault("sys_write entry unmapped")
        self.trace.append(("write", pid, 1))
        return fn.entry(self, (pid, fd, bytes(data)))

    def mmap_read(self, pid: int, path: str) -> bytes:
        """Map a regular file and copy it out; never touches the syscall table's read."""
        proc = self.process(pid)
        node = self.fs.lookup(path)
        if node.kind != REGULAR:
            raise UnsupportedMappingError(f"{path}: {node.kind} nodes cannot be mapped")
        if not node.readable_by(proc.euid):
            raise PrivilegeError(f"cannot read {path}")
        self.trace.append(("mmap", pid, 1))
        return bytes(node.content)

    def stat(self, pid: int, path: str) -> dict:
        self.process(pid)
        node = self.fs.lookup(path)
        self.trace.append(("stat", pid, 1))
        return {"path": node.path, "kind": node.kind, "size": node.size, "mode": node.mode,
                "uid": node.uid, "mtime": node.mtime, "ctime": node.ctime}

    def listdir(self, pid: int, path: str) -> list[str]:
        self.process(pid)
        self.trace.append(("getdents", pid, 1))
        return self.fs.listdir(path)

    def write_file(self, pid: int, path: str, data: bytes, offset: int = 0) -> int:
        fd = self.open(pid, path, "a" if offset else "w")
        of = self.process(pid).fds[fd]
        of.offset = offset
        n = self.sys_write(pid, fd, data)
        self.close(pid, fd)
        return n

    def rename(self, pid: int, old: str, new: str) -> None:
        proc = self.process(pid)
        node = self.fs.lookup(old)
        if proc.euid not in (0, node.uid) or not self._may_create(proc, new):
            raise PrivilegeError(f"cannot rename {old}")
        self.trace.append(("rename", pid, 1))
        self.fs.rename(old, new)

    def unlink(self, pid: int, path: str) -> None:
        proc = self.process(pid)
        node = self.fs.lookup(path)
        if proc.euid not in (0, node.uid):
            raise PrivilegeError(f"cannot unlink {path}")
        self.trace.append(("unlink", pid, 1))
        self.fs.unlink(path)

    def fsync(self, pid: int, path: str) -> None:
        self.process(pid)
        self.trace.append(("fsync", pid, 1))
        self.fs.fsync(path)

    def chmod(self, pid: int, path: str, mode: int) -> None:
        proc = self.process(pid)
        node = self.fs.lookup(path)
        if proc.euid not in (0, node.uid):
            raise PrivilegeError(f"cannot chmod {path}")
        node.mode = mode

    # ------------------------------------------------------------------
    # procfs and counters
    # ------------------------------------------------------------------

    def render_proc(self, rule: str) -> str:
        if rule == "net/dev":
            return self.render_proc_net_dev()
        if rule == "modules":
            return "".join(f"{m.name} {m.size} 0\n" for m in self.public_modules())
        raise NotFound(f"/proc/{rule}")

    def render_proc_net_dev(self) -> str:
        lines = ["Inter-|   Receive                                                |  Transmit",
                 " face |bytes    packets errs drop fifo frame compressed multicast"
                 "|bytes    packets errs drop fifo colls carrier compressed"]
        for name, dev in self.devices.items():
            c = dev.counters().as_dict()
            for flt in self.proc_net_dev_filters:
                c = flt(name, c)
            lines.append(f"{name:>6}:{c['rx_bytes']:8d} {c['rx_packets']:7d}    0    0    0     0"
                         f"          0         0 {c['tx_bytes']:8d} {c['tx_packets']:7d}"
                         f"    0    0    0     0       0          0")
        return "\n".join(lines) + "\n"

    def device_stats(self, device_name: str) -> DeviceCounters:
        dev = self.devices.get(device_name)
        if dev is None:
            raise LookupFailure(f"no device {device_name}")
        return dev.counters()

    # ------------------------------------------------------------------
    # kernel modules
    # ------------------------------------------------------------------

    def load_module(self, desc: ModuleDescriptor) -> KernelModule:
        size = -(-desc.size // PAGE) * PAGE
        base = self._module_cursor
        if base + size > MODULE_END:
            raise ResourceError("module region exhausted")
        names = [desc.name] + [s for s, _ in desc.symbols]
        symtab_at = base + HEADER_SIZE
        strings_at = symtab_at + 4 + 8 * len(desc.symbols)
        blob = bytearray()
        name_addrs = []
        for s in names:
            name_addrs.append(strings_at + len(blob))
            blob += s.encode() + b"\0"
        strings_end = strings_at + len(blob) - base
        if min(desc.init_offset, desc.cleanup_offset) < strings_end or \
                max(desc.init_offset, desc.cleanup_offset) >= size:
            raise ConfigError(f"module {desc.name}: bad init/cleanup offsets")
        self._module_cursor = base + size
        mem = self.memory
        if desc.fill_seed is not None:
            rng = np.random.default_rng(desc.fill_seed)
            mem.write(base, rng.integers(0, 256, size, dtype=np.uint8).tobytes())
        else:
            mem.write(base, bytes(size))
        header = ModuleHeader(self.module_list_head, name_addrs[0], size, desc.flags,
                              base + desc.init_offset, base + desc.cleanup_offset)
        mem.write(base, header.pack())
        mem.write_u32(symtab_at, len(desc.symbols))
        symbols = []
        for i, (sname, off) in enumerate(desc.symbols):
            mem.write_u32(symtab_at + 4 + 8 * i, name_addrs[i + 1])
            mem.write_u32(symtab_at + 8 + 8 * i, base + off)
            symbols.append((sname, base + off))
        mem.write(strings_at, bytes(blob))
        for off, data in desc.layout:
            mem.write(base + off, data)
        var_block = {}
        for vname, (off, data) in desc.var_block.items():
            mem.write(base + off, data)
            var_block[vname] = (base + off, data)
        for off, fn in desc.functions.items():
            self.functions[base + off] = fn
        module = KernelModule(desc.name, base, size, base, base + desc.init_offset,
                              base + desc.cleanup_offset, desc.hidden, symbols, var_block)
        self.modules.append(module)
        if not desc.hidden:
            self.module_list_head = base
        self.trace.append(("init_module", 0, 1))
        return module

    def public_modules(self) -> list[KernelModule]:
        """Walk the kernel module list as lsmod would."""
        by_header = {m.header_addr: m for m in self.modules}
        out, addr, seen = [], self.module_list_head, set()
        while addr and addr not in seen:
            seen.add(addr)
            m = by_header.get(addr)
            if m is None:
                break
            out.append(m)
            addr = ModuleHeader.unpack(self.memory.read(addr, HEADER_SIZE)).next_header
        return out

    def module_at(self, addr: int) -> KernelModule | None:
        for m in self.modules:
            if m.contains(addr):
                return m
        return None

    def call_kernel_address(self, addr: int) -> object:
        fn = self.functions.get(addr)
        if fn is None or not fn.jumpable:
            self.crashed = True
            raise KernelFault(f"jump to {addr:#x} faulted")
        return fn.entry(self)

    # ------------------------------------------------------------------
    # network
    # ------------------------------------------------------------------

    @property
    def nic(self) -> NetDevice:
        for name, dev in self.devices.items():
            if name != "lo":
                return dev
        raise LookupFailure("host has no network interface")

    def transmit(self, packet: Packet, device: str | None = None) -> None:
        dev = self.devices[device] if device else self.nic
        if not packet.hidden:
            self.local_capture.append(packet)
        dev.transmit(packet)

    def drain_tx(self) -> list[Packet]:
        """Put queued packets on a detached wire: count them and hand them back."""
        out = []
        for dev in self.devices.values():
            for p in dev.txq:
                dev.count_tx(p)
                out.append(p)
            dev.txq.clear()
        return out

    def receive(self, packet: Packet) -> None:
        self.nic.count_rx(packet)
        self.local_capture.append(packet)
        if packet.proto == "icmp" and packet.icmp_type == ICMP_ECHO_REQUEST:
            self.transmit(Packet(self.ip, packet.src, "icmp", packet.payload,
                                 packet.sport, packet.dport, icmp_type=ICMP_ECHO_REPLY,
                                 meta=dict(packet.meta)))
            return
        if packet.proto != "tcp":
            return
        key = (packet.dport, packet.src, packet.sport)
        if "S" in packet.flags and "A" not in packet.flags:
            lsock = self._listeners.get(packet.dport)
            if lsock is None:
                self.transmit(Packet(self.ip, packet.src, "tcp", b"", packet.dport,
                                     packet.sport, "RA"))
                return
            conn = Socket("tcp", packet.dport, packet.src, packet.sport, "established")
            self._conns[key] = conn
            lsock.pending.append(conn)
            self.transmit(Packet(self.ip, packet.src, "tcp", b"", packet.dport,
                                 packet.sport, "SA"))
            return
        conn = self._conns.get(key)
        if conn is None:
            return
        if "R" in packet.flags:
            conn.state = "reset"
        elif "S" in packet.flags and "A" in packet.flags:
            conn.state = "established"
        if "F" in packet.flags:
            conn.state = "closed"
        if packet.payload:
            conn.inbox.extend(packet.payload)

    def listen(self, pid: int, port: int) -> int:
        proc = self.process(pid)
        if port in self._listeners:
            raise StateError(f"port {port} in use")
        if port < 1024 and proc.euid != 0:
            raise PrivilegeError("binding a privileged port needs root")
        sock = Socket("tcp", port, state="listen")
        self._listeners[port] = sock
        fd = proc.next_fd()
        proc.fds[fd] = OpenFile("listen", sock=sock, readable=False)
        return fd

    def accept(self, pid: int, fd: int) -> int:
        proc = self.process(pid)
        of = proc.fds.get(fd)
        if of is None or of.kind != "listen":
            raise DescriptorError(f"fd {fd} is not listening")
        if not of.sock.pending:
            raise WouldBlock("no pending connection")
        conn = of.sock.pending.popleft()
        nfd = proc.next_fd()
        proc.fds[nfd] = OpenFile("socket", sock=conn, readable=True, writable=True)
        self.trace.append(("accept", pid, 1))
        return nfd

    def connect(self, pid: int, ip: str, port: int) -> int:
        proc = self.process(pid)
        lport = self._next_port
        self._next_port += 1
        sock = Socket("tcp", lport, ip, port, "syn-sent")
        self._conns[(lport, ip, port)] = sock
        fd = proc.next_fd()
        proc.fds[fd] = OpenFile("socket", sock=sock, readable=True, writable=True)
        self.trace.append(("connect", pid, 1))
        self.transmit(Packet(self.ip, ip, "tcp", b"", lport, port, "S"))
        return fd

    def socket_of(self, pid: int, fd: int) -> Socket:
        of = self.process(pid).fds.get(fd)
        if of is None or of.sock is None:
            raise DescriptorError(f"fd {fd} is not a socket")
        return of.sock

    def send(self, pid: int, fd: int, data: bytes) -> int:
        sock = self.socket_of(pid, fd)
        self.trace.append(("send", pid, 1))
        data = bytes(data)
        for i in range(0, len(data), TCP_MSS):
            self.transmit(Packet(self.ip, sock.remote_ip, "tcp", data[i:i + TCP_MSS],
                                 sock.local_port, sock.remote_port, "PA"))
        return len(data)

    def recv(self, pid: int, fd: int, n: int = 1 << 16) -> bytes:
        """recv(2): its own syscall, not the read() table entry."""
        sock = self.socket_of(pid, fd)
        self.trace.append(("recv", pid, 1))
        if not sock.inbox:
            raise WouldBlock("socket queue empty")
        return sock.take(n)

    def close_socket(self, pid: int, fd: int) -> None:
        sock = self.socket_of(pid, fd)
        if sock.state == "established":
            self.transmit(Packet(self.ip, sock.remote_ip, "tcp", b"", sock.local_port,
                                 sock.remote_port, "FA"))
        sock.state = "closed"
        self.close(pid, fd)

    # ------------------------------------------------------------------

    def reads_by(self, pid: int) -> int:
        return sum(c for name, p, c in self.trace if name == "read" and p == pid)

    def state_digest(self) -> str:
        """Digest over memory, syscall table, processes and files."""
        h = hashlib.sha256()
        h.update(self.memory.region.tobytes())
        h.update(repr(self.table.entries()).encode())
        h.update(repr(sorted((p.pid, p.uid, p.program_name, p.alive)
                             for p in self.processes.values())).encode())
        for path in self.fs.paths():
            node = self.fs.lookup(path)
            h.update(path.encode() + b"\0" + bytes(node.content))
        return h.hexdigest()


def boot(config: HostConfig | None = None, fs: FileSystem | None = None) -> Host:
    """Boot a host; passes ``fs`` through to model a persistent disk."""
    from .config import default_host_config

    if config is None:
        config = default_host_config()
    elif isinstance(config, dict):
        config = HostConfig.from_dict(config)
    return Host(config, fs)
