"""Detection and disabling toolkit aimed at the hidden read() monitor.

Every detector returns a :class:`DetectionReport`.  The removal tool that
runs inside the honeypot (``nosebreak-tool``) chains scan, classification,
secret extraction and the cleanup jump.
"""
from __future__ import annotations

import ipaddress
import json
import random
import re
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from ._accel import scan_header_words
from .errors import ExtractionError, KernelFault, LabError, LookupFailure, PrivilegeError, WouldBlock
from .simkernel.host import Host, boot
from .simkernel.memory import (HEADER_SIZE, MAX_MODULE_SIZE, MODULE_BASE, MODULE_END, NR_READ,
                               NR_WRITE, Memory, ModuleHeader, in_module_region, in_text)

DETECTED, NOT_DETECTED, INCONCLUSIVE = "detected", "not_detected", "inconclusive"
NUMERIC_NAME_WHITELIST = ("8390",)
SYMBOL_RE = re.compile(r"[A-Za-z][0-9]{1,3}")
IP_TEXT_RE = re.compile(rb"(?<![0-9.])(\d{1,3})\.(\d{1,3})\.(\d{1,3})\.(\d{1,3})\x00")
# a fragment of any octet-to-text table
IP_TABLE_MARK = b"\x00".join(str(i).encode() for i in range(250, 256)) + b"\x00"
VAR_SLOTS = 64
VAR_BLOCK_FROM_END = 0x400
SYSCALL_GAP = 4096
RTT_RATIO = 10.0


@dataclass
class DetectionReport:
    technique: str
    verdict: str
    evidence: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.verdict not in (DETECTED, NOT_DETECTED, INCONCLUSIVE):
            raise ValueError(f"bad verdict {self.verdict!r}")
        if self.verdict == DETECTED and not self.evidence:
            raise ValueError("a detection must carry evidence")

    @property
    def detected(self) -> bool:
        return self.verdict == DETECTED

    def to_dict(self) -> dict:
        return {"technique": self.technique, "verdict": self.verdict,
                "evidence": _jsonable(self.evidence)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, bytes):
        return obj.hex()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if hasattr(obj, "__dataclass_fields__"):
        return _jsonable(asdict(obj))
    return obj


@dataclass(frozen=True)
class ModuleCandidate:
    header_addr: int
    name: str
    base: int
    size: int
    init_addr: int
    cleanup_addr: int
    confidence: float
    symbols: tuple = ()

    def contains(self, addr: int) -> bool:
        return self.base <= addr < self.base + self.size


# ---------------------------------------------------------------------------
# counters
# ---------------------------------------------------------------------------

def parse_proc_net_dev(text: str) -> dict[str, dict]:
    out = {}
    for line in text.splitlines()[2:]:
        if ":" not in line:
            continue
        name, rest = line.split(":", 1)
        f = [int(x) for x in rest.split()]
        out[name.strip()] = {"rx_bytes": f[0], "rx_packets": f[1],
                             "tx_bytes": f[8], "tx_packets": f[9]}
    return out


def detect_counter_regression(host: Host, reads: int = 10000, uid: int = 1000) -> DetectionReport:
    """Sample interface counters around a burst of one-byte reads."""
    before = parse_proc_net_dev(host.render_proc_net_dev())
    proc = host.spawn("/bin/dd", uid)
    try:
        fd = host.open(proc.pid, "/dev/zero")
        host.sys_read(proc.pid, fd, 1, repeat=reads)
    finally:
        host.exit(proc.pid)
    after = parse_proc_net_dev(host.render_proc_net_dev())
    regressions = {}
    for dev, b in before.items():
        a = after.get(dev, {})
        for key, v in b.items():
            if key in a and a[key] < v:
                regressions[f"{dev}.{key}"] = (v, a[key])
    verdict = DETECTED if regressions else NOT_DETECTED
    ev = {"regressions": regressions} if regressions else {}
    ev.update(before=before, after=after, reads=reads)
    return DetectionReport("counter_regression", verdict, ev)


def detect_proc_discrepancy(host: Host) -> DetectionReport:
    """Driver-reported statistics against the /proc/net/dev rendering."""
    shown = parse_proc_net_dev(host.render_proc_net_dev())
    deltas = {}
    for name in host.devices:
        real = host.device_stats(name).as_dict()
        view = shown.get(name)
        if view is None:
            deltas[name] = {"missing": True}
            continue
        d = {k: real[k] - view[k] for k in view if real[k] != view[k]}
        if d:
            deltas[name] = d
    if deltas:
        return DetectionReport("proc_discrepancy", DETECTED, {"deltas": deltas})
    return DetectionReport("proc_discrepancy", NOT_DETECTED, {"devices": sorted(shown)})


# ---------------------------------------------------------------------------
# network probes
# ---------------------------------------------------------------------------

def detect_dd_rtt(lab, gateway: str | None = None, reads_per_tick: int = 10000,
                  warmup: int = 1000, n_base: int = 5, n_loaded: int = 3,
                  ratio_threshold: float = RTT_RATIO) -> DetectionReport:
    """Round-trip time to the gateway, idle and under a one-byte read storm."""
    host, net = lab.host, lab.net
    gateway = gateway or net.gateway_ip
    base = [r for r in net.ping_series(host.ip, gateway, n_base, 10) if r is not None]
    if not base:
        return DetectionReport("dd_rtt", INCONCLUSIVE, {"reason": "gateway unreachable"})
    load = net.drive_dd_load(host, reads_per_tick)
    try:
        net.run(warmup)
        loaded = net.ping_series(host.ip, gateway, n_loaded, 1000)
    finally:
        net.stop_load(load)
    net.run_until_idle(max_ticks=10_000_000)
    baseline = sum(base) / len(base)
    got = [r for r in loaded if r is not None]
    lost = len(loaded) - len(got)
    mean_loaded = sum(got) / len(got) if got else float("inf")
    ratio = mean_loaded / baseline
    ev = {"baseline_ms": baseline, "loaded_ms": got, "lost": lost,
          "mean_loaded_ms": mean_loaded if got else None,
          "ratio": ratio if got else None, "reads_per_tick": reads_per_tick}
    if ratio >= ratio_threshold:
        return DetectionReport("dd_rtt", DETECTED, ev)
    # a monitor behind a link faster than the probe load looks exactly like no monitor
    ev["inconclusive"] = True
    return DetectionReport("dd_rtt", NOT_DETECTED, ev)


def probe_connection_limit(lab, n: int = 30, port: int = 80, uid: int = 1000,
                           prefix: str = "198.51.100.") -> DetectionReport:
    """Open ``n`` connections to distinct outside hosts and look for a cut-off."""
    host, net = lab.host, lab.net
    proc = host.spawn("/usr/bin/wget", uid)
    outcome = []
    for i in range(n):
        fd = host.connect(proc.pid, f"{prefix}{i % 254 + 1}", port)
        net.run_until_idle()
        outcome.append(host.socket_of(proc.pid, fd).state == "established")
        host.close_socket(proc.pid, fd)
    net.run_until_idle()
    host.exit(proc.pid)
    first_fail = next((i for i, ok in enumerate(outcome) if not ok), None)
    ev = {"attempts": n, "established": sum(outcome)}
    if first_fail is not None and first_fail > 0 and not any(outcome[first_fail:]):
        ev["limit"] = first_fail
        return DetectionReport("connection_limit", DETECTED, ev)
    if first_fail is None:
        return DetectionReport("connection_limit", NOT_DETECTED, ev)
    ev["pattern"] = outcome
    return DetectionReport("connection_limit", INCONCLUSIVE, ev)


DEFAULT_MARKERS = (bytes.fromhex("EB02EB02EB02"), b"/bin/sh")


def probe_content_rewrite(lab, peer: tuple[str, int] = ("203.0.113.7", 7),
                          markers=DEFAULT_MARKERS, seed: int = 0,
                          uid: int = 1000) -> DetectionReport:
    """Send marker payloads to a cooperating echo service and compare."""
    host, net = lab.host, lab.net
    rng = random.Random(f"rewrite-probe:{seed}")
    proc = host.spawn("/usr/bin/nc", uid)
    fd = host.connect(proc.pid, *peer)
    net.run_until_idle()
    if host.socket_of(proc.pid, fd).state != "established":
        host.exit(proc.pid)
        return DetectionReport("content_rewrite", INCONCLUSIVE, {"reason": "peer unreachable"})
    control = bytes(rng.choice(b"abcdefghijklmnopqrstuvwxyz") for _ in range(48))
    payloads = [control] + [control[:16] + m + control[16:32] for m in markers]
    pairs = []
    for sent in payloads:
        host.send(proc.pid, fd, sent)
        net.run_until_idle()
        try:
            got = host.recv(proc.pid, fd)
        except WouldBlock:
            got = b""
        pairs.append({"sent": sent, "received": got, "altered": got != sent})
    host.close_socket(proc.pid, fd)
    net.run_until_idle()
    host.exit(proc.pid)
    altered = [p for p in pairs if p["altered"]]
    if all(not p["received"] for p in pairs):
        return DetectionReport("content_rewrite", INCONCLUSIVE, {"reason": "no echo", "pairs": pairs})
    return DetectionReport("content_rewrite", DETECTED if altered else NOT_DETECTED,
                           {"pairs": pairs, "altered": len(altered)})


# ---------------------------------------------------------------------------
# memory forensics
# ---------------------------------------------------------------------------

def _printable_name(raw: bytes | None) -> str | None:
    if not raw or len(raw) > 60 or not all(0x21 <= b < 0x7F for b in raw):
        return None
    return raw.decode("ascii")


def read_symbols(memory: Memory, header_addr: int, size: int) -> tuple:
    """Symbol table following the header, or () if it does not parse."""
    try:
        count = memory.read_u32(header_addr + HEADER_SIZE)
        if count > 256:
            return ()
        out = []
        for i in range(count):
            name_addr = memory.read_u32(header_addr + HEADER_SIZE + 4 + 8 * i)
            value = memory.read_u32(header_addr + HEADER_SIZE + 8 + 8 * i)
            if not (header_addr <= name_addr < header_addr + size):
                return ()
            name = _printable_name(memory.read_cstring(name_addr))
            if name is None:
                return ()
            out.append((name, value))
        return tuple(out)
    except LookupFailure:
        return ()


def scan_hidden_modules(memory: Memory, backend: str | None = None) -> list[ModuleCandidate]:
    """Brute-force header search over the module region at 4-byte stride."""
    words = memory.words()
    hits = scan_header_words(words, MODULE_BASE, MODULE_BASE, MODULE_END, MAX_MODULE_SIZE,
                             backend=backend)
    out = []
    for idx in hits:
        addr = MODULE_BASE + 4 * int(idx)
        hdr = ModuleHeader.unpack(memory.read(addr, HEADER_SIZE))
        name = _printable_name(memory.read_cstring(hdr.name_addr))
        if name is None:
            continue
        syms = read_symbols(memory, addr, hdr.size)
        conf = 1.0 if syms else 0.6
        out.append(ModuleCandidate(addr, name, addr, hdr.size, hdr.init, hdr.cleanup, conf, syms))
    return out


def _string_regions(buf: bytes, min_len: int = 200) -> list[tuple[int, int]]:
    """Runs of printable text separated by single NULs, longer than ``min_len``."""
    b = np.frombuffer(buf, dtype=np.uint8)
    printable = (b >= 0x20) & (b < 0x7F)
    nul = b == 0
    ok = printable.copy()
    inner = nul[1:-1] & printable[:-2] & printable[2:]
    ok[1:-1] |= inner
    edges = np.diff(np.concatenate(([0], ok.astype(np.int8), [0])))
    starts, ends = np.nonzero(edges == 1)[0], np.nonzero(edges == -1)[0]
    return [(int(s), int(e)) for s, e in zip(starts, ends) if e - s > min_len]


def sebek_signals(candidate: ModuleCandidate, memory: Memory,
                  whitelist=NUMERIC_NAME_WHITELIST) -> dict:
    name = candidate.name
    numeric = name.isdigit() and int(name) < 10 ** 9 and name not in whitelist
    symbols = bool(candidate.symbols) and all(SYMBOL_RE.fullmatch(s) for s, _ in candidate.symbols)
    body = memory.read(candidate.base, min(candidate.size, MODULE_END - candidate.base))
    regions = [(s, e) for s, e in _string_regions(body) if IP_TABLE_MARK in body[s:e]]
    return {"numeric_name": numeric, "digit_symbols": symbols,
            "ip_string_table": bool(regions),
            "string_regions": [(candidate.base + s, e - s) for s, e in regions]}


def classify_sebek(candidates: list[ModuleCandidate], memory: Memory,
                   whitelist=NUMERIC_NAME_WHITELIST) -> list[tuple[ModuleCandidate, float]]:
    """Score candidates on the three naming/content heuristics, best first."""
    scored = []
    for c in candidates:
        s = sebek_signals(c, memory, whitelist)
        score = (s["numeric_name"] + s["digit_symbols"] + s["ip_string_table"]) / 3
        scored.append((c, score))
    scored.sort(key=lambda cs: (-cs[1], cs[0].header_addr))
    return scored


@dataclass(frozen=True)
class SecretGuess:
    magic: int
    src_port: int
    dst_port: int
    dst_ip: str | None
    score: float

    def as_tuple(self) -> tuple:
        return (self.magic, self.src_port, self.dst_port, self.dst_ip)


def _var_block(candidate: ModuleCandidate, memory: Memory) -> bytes:
    start = candidate.base + candidate.size - VAR_BLOCK_FROM_END
    try:
        raw = memory.read(start, 4 * VAR_SLOTS)
    except LookupFailure:
        raise ExtractionError("variable block outside readable memory") from None
    if not any(raw):
        raise ExtractionError("variable block is empty")
    return raw


def stored_original_read(candidate: ModuleCandidate, memory: Memory) -> int | None:
    """The saved pre-hook read() entry, if the module keeps one in its data."""
    raw = _var_block(candidate, memory)
    hits = [v for (v,) in struct.iter_unpack("<I", raw) if in_text(v)]
    return hits[0] if len(hits) == 1 else None


def volatile_slots(before: bytes, after: bytes) -> set[int]:
    """Slots that changed between two snapshots: counters, not configuration."""
    return {i // 4 for i in range(0, min(len(before), len(after)), 4)
            if before[i:i + 4] != after[i:i + 4]}


def var_block_snapshot(candidate: ModuleCandidate, memory: Memory) -> bytes:
    return _var_block(candidate, memory)


def extract_secrets(candidate: ModuleCandidate, memory: Memory, limit: int = 10,
                    volatile: set[int] = frozenset()) -> list[SecretGuess]:
    """Ranked guesses for (magic, src_port, dst_port, dst_ip).

    ``volatile`` names slots seen changing between snapshots; they are skipped.
    """
    raw = _var_block(candidate, memory)
    slots = [raw[i:i + 4] for i in range(0, len(raw), 4)]
    values = [struct.unpack("<I", s)[0] for s in slots]
    for i in volatile:
        if 0 <= i < len(slots):
            slots[i], values[i] = b"\0\0\0\0", 0
    body = memory.read(candidate.base, min(candidate.size, MODULE_END - candidate.base))
    texts = set()
    for m in IP_TEXT_RE.finditer(body):
        octets = [int(g) for g in m.groups()]
        if all(o <= 255 for o in octets):
            texts.add(bytes(octets))
    ips = [(s, 1.0) for s in dict.fromkeys(slots) if s in texts]
    if not ips:
        ips = [(s, 0.3) for s in dict.fromkeys(slots)
               if any(s) and ipaddress.IPv4Address(s).is_private]
    ip_raw = {s for s, _ in ips}
    ports = {}
    magics = {}
    for s, v in zip(slots, values):
        if s in ip_raw or in_text(v) or in_module_region(v):
            continue
        if 1 <= v <= 65535:
            ports[v] = max(ports.get(v, 0), 1.0 if v >= 1024 else 0.2)
        elif v >= 65536:
            magics[v] = 1.0
    if not ports or not magics:
        raise ExtractionError("no plausible port/magic values in the variable block")
    hi = [p for p, w in ports.items() if w == 1.0]
    pairs = []
    for a, wa in ports.items():
        for b, wb in ports.items():
            w = wa * wb
            if a == b and len(hi) > 1 and a in hi:
                w *= 0.5  # two distinct high ports: src != dst is the better bet
            pairs.append(((a, b), w))
    guesses = []
    ip_list = ips or [(None, 0.1)]
    for m, wm in magics.items():
        for (sp, dp), wp in pairs:
            for ip, wi in ip_list:
                ip_s = str(ipaddress.IPv4Address(ip)) if ip else None
                guesses.append(SecretGuess(m, sp, dp, ip_s, wm * wp * wi))
    guesses.sort(key=lambda g: (-g.score, g.magic, g.src_port, g.dst_port))
    return guesses[:limit]


def detect_syscall_anomaly(host: Host) -> DetectionReport:
    read, write = host.table[NR_READ], host.table[NR_WRITE]
    gap = abs(read - write)
    owner = next((c for c in scan_hidden_modules(host.memory) if c.contains(read)), None)
    ev = {"sys_read": read, "sys_write": write, "gap": gap,
          "far_apart": gap > SYSCALL_GAP, "in_module": owner is not None}
    if owner is not None:
        ev["module"] = {"name": owner.name, "base": owner.base, "size": owner.size}
    verdict = DETECTED if (ev["far_apart"] or ev["in_module"]) else NOT_DETECTED
    return DetectionReport("syscall_anomaly", verdict, ev)


def detect_module_scan(host: Host) -> DetectionReport:
    """Headers in memory that the kernel module list does not show."""
    public = {m.header_addr for m in host.public_modules()}
    cands = scan_hidden_modules(host.memory)
    hidden = [c for c in cands if c.header_addr not in public]
    ranked = classify_sebek(hidden, host.memory)
    ev = {"candidates": len(cands), "public": len(public),
          "hidden": [{"header_addr": c.header_addr, "name": c.name, "size": c.size,
                      "cleanup_addr": c.cleanup_addr, "score": s} for c, s in ranked]}
    return DetectionReport("module_scan", DETECTED if hidden else NOT_DETECTED, ev)


# ---------------------------------------------------------------------------
# disabling
# ---------------------------------------------------------------------------

def call_kernel_address(host: Host, addr: int, uid: int = 0):
    """Jump into the kernel through the minimal helper module."""
    if uid != 0:
        raise PrivilegeError("kernel jumps need root")
    return host.call_kernel_address(addr)


def disable_by_reboot(host: Host, uid: int = 0) -> Host:
    """Reboot from the same disk: the monitor is not loaded again."""
    if uid != 0:
        raise PrivilegeError("reboot needs root")
    fresh = boot(host.config, fs=host.fs)
    if host.net is not None:
        host.net.rebind(fresh)
    return fresh


# ---------------------------------------------------------------------------
# decoys
# ---------------------------------------------------------------------------

@dataclass
class DecoyPlan:
    shadow_decoy: bool = False
    copy_binaries: list = field(default_factory=list)
    fork_churn: int = 0
    real_commands: list = field(default_factory=list)   # argv lists
    dummies_per_real: int = 0
    uid: int = 1000
    seed: int = 0

    def empty(self) -> bool:
        return not (self.shadow_decoy or self.copy_binaries or self.fork_churn
                    or self.real_commands)


@dataclass(frozen=True)
class DecoyAction:
    kind: str   # shadow | copy-exec | fork | real | dummy
    detail: str
    pid: int


def _shadow_lookalike(rng: random.Random) -> bytes:
    lines = []
    for user in ("root", "daemon", "bin", "sys", "www-data", "admin", "backup"):
        salt = "".join(rng.choice("abcdefghijklmnopqrstuvwxyz0123456789./") for _ in range(8))
        digest = "".join(rng.choice("abcdefghijklmnopqrstuvwxyzABCDEFGHIJ0123456789./")
                         for _ in range(22))
        lines.append(f"{user}:$1${salt}${digest}:{rng.randrange(12000, 13000)}:0:99999:7:::")
    return ("\n".join(lines) + "\n").encode()


def _random_name(rng: random.Random) -> str:
    return "/tmp/." + "".join(rng.choice("abcdefghijklmnopqrstuvwxyz") for _ in range(8))


def generate_decoys(host: Host, plan: DecoyPlan) -> list[DecoyAction]:
    if plan.empty():
        return []
    rng = random.Random(f"decoys:{plan.seed}")
    shell = host.spawn("/bin/sh", plan.uid)
    actions = []
    if plan.shadow_decoy:
        path = _random_name(rng)
        host.write_file(shell.pid, path, _shadow_lookalike(rng))
        child = host.exec(shell.pid, "/bin/cat", ["cat", path], fd_plan={1: "/dev/null"})
        actions.append(DecoyAction("shadow", path, child.pid))
    for binary in plan.copy_binaries:
        image = host.mmap_read(shell.pid, binary)
        path = _random_name(rng)
        host.write_file(shell.pid, path, image)
        host.chmod(shell.pid, path, 0o755)
        child = host.exec(shell.pid, path, [path], fd_plan={1: "/dev/null"})
        actions.append(DecoyAction("copy-exec", f"{binary}->{path}", child.pid))
    for _ in range(plan.fork_churn):
        child = host.fork(shell.pid)
        host.exit(child.pid)
        actions.append(DecoyAction("fork", "", child.pid))
    real = list(plan.real_commands)
    for i, argv in enumerate(real):
        child = host.exec(shell.pid, argv[0], list(argv), fd_plan={1: "/dev/null"})
        actions.append(DecoyAction("real", " ".join(argv), child.pid))
        for j in range(plan.dummies_per_real):
            dummy = real[(i + j + 1) % len(real)]
            child = host.exec(shell.pid, dummy[0], list(dummy), fd_plan={1: "/dev/null"})
            actions.append(DecoyAction("dummy", " ".join(dummy), child.pid))
    host.exit(shell.pid)
    return actions


# ---------------------------------------------------------------------------
# everything together
# ---------------------------------------------------------------------------

HOST_TECHNIQUES = {
    "counter_regression": detect_counter_regression,
    "proc_discrepancy": detect_proc_discrepancy,
    "syscall_anomaly": detect_syscall_anomaly,
    "module_scan": detect_module_scan,
}
# the rewrite probe needs one outbound connection, so it runs before the limit probe
NET_TECHNIQUES = {
    "dd_rtt": detect_dd_rtt,
    "content_rewrite": probe_content_rewrite,
    "connection_limit": probe_connection_limit,
}
TECHNIQUES = tuple(HOST_TECHNIQUES) + tuple(NET_TECHNIQUES)


def run_technique(lab, name: str) -> DetectionReport:
    if name in HOST_TECHNIQUES:
        return HOST_TECHNIQUES[name](lab.host)
    if name in NET_TECHNIQUES:
        return NET_TECHNIQUES[name](lab)
    raise LookupFailure(f"unknown technique {name!r}; known: {', '.join(TECHNIQUES)}")


def detect_all(lab, techniques=TECHNIQUES) -> list[DetectionReport]:
    return [run_technique(lab, t) for t in techniques]


def removal_tool_main(ctx) -> int:
    """In-honeypot tool: find the monitor, recover its secrets, make it unload."""
    host, argv = ctx.host, ctx.argv[1:]
    if ctx.proc.euid != 0:
        ctx.write(2, "nosebreak: kernel memory needs root\n")
        return 1
    report: dict = {"anomaly": detect_syscall_anomaly(host).to_dict()}
    public = {m.header_addr for m in host.public_modules()}
    hidden = [c for c in scan_hidden_modules(host.memory) if c.header_addr not in public]
    ranked = classify_sebek(hidden, host.memory)
    if not ranked or ranked[0][1] < 2 / 3:
        report["found"] = False
        ctx.write(1, json.dumps(report, sort_keys=True) + "\n")
        return 2
    top, score = ranked[0]
    report.update(found=True, module={"name": top.name, "header_addr": top.header_addr,
                                      "cleanup_addr": top.cleanup_addr, "score": score})
    try:
        before = var_block_snapshot(top, host.memory)
        # one read of our own moves whatever counts reads
        fd = host.open(ctx.pid, "/dev/zero")
        host.sys_read(ctx.pid, fd, 1)
        host.close(ctx.pid, fd)
        moved = volatile_slots(before, var_block_snapshot(top, host.memory))
        report["secrets"] = [g.as_tuple() for g in
                             extract_secrets(top, host.memory, volatile=moved)[:5]]
        report["stored_read"] = stored_original_read(top, host.memory)
    except ExtractionError as exc:
        report["secrets_error"] = str(exc)
    if "--dry-run" not in argv:
        try:
            call_kernel_address(host, top.cleanup_addr, uid=ctx.proc.euid)
            report["disabled"] = True
        except (KernelFault, LabError) as exc:
            report["disabled"] = False
            report["error"] = str(exc)
        report["after"] = detect_syscall_anomaly(host).verdict
    ctx.write(1, json.dumps(report, sort_keys=True) + "\n")
    return 0 if report.get("disabled", True) else 3
