"""Scripted end-to-end runs and machine-checkable reports."""
from __future__ import annotations

import copy
import hashlib
import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from . import nosebreak
from .errors import ConfigError, LabError, WouldBlock
from .kebes import KebesClient, SimTransport, wire
from .kebes.client import RemoteError
from .kebes.crypt import FrameReader, Session
from .lab import Lab, LabConfig
from .simkernel import OVERFLOW_TRIGGER
from .simkernel.image import Image

STEP_TYPES = ("deliver-exploit", "start-kebes", "client-commands", "run-detectors",
              "disable", "control-read", "assertions")
WEB_PORT = 443


# ---------------------------------------------------------------------------
# the web service behind the encrypted transport
# ---------------------------------------------------------------------------

def https_key(seed) -> bytes:
    return hashlib.sha256(f"https-session:{seed}".encode()).digest()


def _prekeyed(role: str, key: bytes, seed) -> Session:
    s = Session(role, random.Random(f"https-{role}:{seed}"))
    s.shared_key = key
    return s


class WebServer:
    """httpd with an already-negotiated encrypted transport.

    It reads its socket with read(), so the monitor sees the request bytes;
    on this transport those bytes are ciphertext.
    """

    def __init__(self, host, pid: int, port: int = WEB_PORT, key_seed=None):
        self.host = host
        self.pid = pid
        self.port = port
        self.listen_fd = host.listen(pid, port)
        proc = host.process(pid)
        proc.uid = proc.euid = host.users.get("www-data", 33)
        self.key_seed = host.seed if key_seed is None else key_seed
        self.conns: dict[int, tuple[Session, FrameReader]] = {}
        self.requests: list[dict] = []

    @property
    def busy(self) -> bool:
        return any(self.host.socket_of(self.pid, fd).inbox for fd in self.conns)

    def poll(self) -> None:
        host = self.host
        while True:
            try:
                fd = host.accept(self.pid, self.listen_fd)
            except WouldBlock:
                break
            self.conns[fd] = (_prekeyed("server", https_key(self.key_seed), self.key_seed),
                              FrameReader())
        for fd, (sess, reader) in list(self.conns.items()):
            try:
                data = host.sys_read(self.pid, fd, 1 << 16)
            except WouldBlock:
                continue
            for record in reader.feed(data):
                try:
                    request = wire.decode(sess.open_body(record))
                    response = self.handle(request)
                except LabError as exc:
                    response = {"status": 400, "body": str(exc).encode()}
                host.send(self.pid, fd, sess.seal(wire.encode(response)))

    def handle(self, request: dict) -> dict:
        self.requests.append({"path": request.get("path")})
        path = request.get("path", "/")
        if path.startswith("/cgi-bin/"):
            script = "/usr/lib/cgi-bin/" + path[len("/cgi-bin/"):]
            child = self.host.exec(self.pid, script, [script] + list(request.get("args", [])),
                                   fd_plan={0: None, 1: "/dev/null", 2: "/dev/null"})
            return {"status": 200, "body": b"", "exit": child.exit_status}
        return {"status": 200, "body": b"<html>honey</html>"}


class HttpsClient:
    def __init__(self, lab: Lab, seed, client_ip: str = "192.0.2.80", port: int = 41000):
        self.lab = lab
        self.session = _prekeyed("client", https_key(seed), seed)
        self.transport = SimTransport(lab, lab.host.ip, WEB_PORT, client_ip, port)
        self.reader = FrameReader()

    def request(self, path: str, args: list) -> dict:
        self.transport.connect()
        self.transport.send(self.session.seal(wire.encode({"path": path, "args": args})))
        while True:
            data = self.transport.recv()
            if not data:
                raise LabError("web server did not answer")
            recs = self.reader.feed(data)
            if recs:
                reply = wire.decode(self.session.open_body(recs[0]))
                self.transport.close()
                return reply


# ---------------------------------------------------------------------------
# scenario definition
# ---------------------------------------------------------------------------

@dataclass
class Scenario:
    name: str
    lab: dict = field(default_factory=dict)
    markers: list = field(default_factory=list)   # text markers
    steps: list = field(default_factory=list)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        sessions = set()
        for i, step in enumerate(self.steps):
            kind = step.get("type")
            if kind not in STEP_TYPES:
                raise ConfigError(f"step {i}: unknown type {kind!r}")
            if kind in ("deliver-exploit", "start-kebes"):
                sessions.add(step.get("session", "www" if kind == "deliver-exploit" else "root"))
            if kind in ("client-commands", "disable", "start-kebes") and "via" in step:
                if step["via"] not in sessions:
                    raise ConfigError(f"step {i}: session {step['via']!r} not declared earlier")
            if kind == "client-commands" and step.get("session") not in sessions:
                raise ConfigError(f"step {i}: session {step.get('session')!r} not declared earlier")
        LabConfig.from_dict(self.lab)

    @classmethod
    def from_dict(cls, doc: dict, base: Path | None = None) -> "Scenario":
        doc = dict(doc)
        lab = dict(doc.pop("lab", {}))
        for key, target in (("host", "host"), ("topology", "link"), ("ruleset", "rules")):
            ref = doc.pop(key, None)
            if ref is None:
                continue
            if isinstance(ref, str):
                path = (base or Path(".")) / ref
                try:
                    ref = json.loads(path.read_text())
                except (OSError, ValueError) as exc:
                    raise ConfigError(f"cannot load {key} {path}: {exc}") from None
            lab[target] = ref.get("link", ref) if key == "topology" and isinstance(ref, dict) else ref
        if "sebek" in doc:
            lab["sebek"] = doc.pop("sebek")
        unknown = set(doc) - {"name", "markers", "steps"}
        if unknown:
            raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
        return cls(doc.get("name", "unnamed"), lab, list(doc.get("markers", [])),
                   list(doc.get("steps", [])))

    @classmethod
    def load(cls, path: str | Path) -> "Scenario":
        path = Path(path)
        if path.suffix != ".json" and not path.exists():
            return builtin(str(path))
        try:
            doc = json.loads(path.read_text())
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read scenario {path}: {exc}") from None
        return cls.from_dict(doc, path.parent)

    def to_dict(self) -> dict:
        return {"name": self.name, "lab": self.lab, "markers": self.markers, "steps": self.steps}


def builtin(name: str, sebek: bool = True, version: str = "v217") -> Scenario:
    if name != "nosebreak-full":
        raise ConfigError(f"no built-in scenario {name!r}")
    markers = ["MARKER-7f3a-ls", "MARKER-91c2-file", "MARKER-c0de-exec", "MARKER-55aa-sh"]
    steps = [
        {"type": "deliver-exploit", "session": "www", "port": 31337},
        {"type": "client-commands", "session": "www", "commands": [
            ["SYSINFO"],
            ["LISTDIR", "/tmp"],
            ["CREATEFILE", "/tmp/.{m1}", "{m1} notes"],
            ["FILEINFO", "/tmp/.{m1}"],
            ["READFILE", "/etc/passwd"],
            ["EXECUTE", "/bin/echo", ["echo", "{m2}"], ""],
            ["SHELLCODE", {"shellcode": [["push", "{m3}"], ["uid"], ["drop"]]}],
            ["DELETE", "/tmp/.{m1}"],
        ]},
        {"type": "run-detectors", "techniques": ["syscall_anomaly", "module_scan",
                                                 "proc_discrepancy", "counter_regression"]},
        {"type": "disable", "via": "www"},
        {"type": "start-kebes", "via": "www", "session": "root", "port": 31338},
        {"type": "client-commands", "session": "root", "commands": [
            ["SYSINFO"],
            ["EXECUTE", "/bin/sh", ["sh", "-c", "echo {m0}"], ""],
            ["READFILE", "/etc/shadow"],
        ]},
        {"type": "run-detectors", "techniques": ["syscall_anomaly"]},
        {"type": "assertions", "checks": ["unlogged", "capture_opaque", "monitor_disabled",
                                          "root_server", "privilege_path"]},
    ]
    lab = {"sebek": {"version": version} if sebek else None}
    return Scenario("nosebreak-full" if sebek else "nosebreak-full-clean", lab, markers, steps)


# ---------------------------------------------------------------------------
# running
# ---------------------------------------------------------------------------

@dataclass
class RunReport:
    scenario: str
    seed: int
    steps: list = field(default_factory=list)
    detections: list = field(default_factory=list)
    collector_digest: str = ""
    capture_digest: str = ""
    assertions: dict = field(default_factory=dict)
    markers: list = field(default_factory=list)
    lab: Lab | None = field(default=None, repr=False, compare=False)

    @property
    def passed(self) -> bool:
        return all(s["status"] == "ok" for s in self.steps) and all(self.assertions.values())

    def to_dict(self) -> dict:
        return {"scenario": self.scenario, "seed": self.seed, "steps": self.steps,
                "detections": self.detections, "collector_digest": self.collector_digest,
                "capture_digest": self.capture_digest, "assertions": self.assertions,
                "markers": self.markers, "passed": self.passed}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    @classmethod
    def from_dict(cls, doc: dict) -> "RunReport":
        doc = dict(doc)
        doc.pop("passed", None)
        return cls(**doc)


def _subst(value, markers):
    if isinstance(value, str):
        for i, m in enumerate(markers):
            value = value.replace("{m%d}" % i, m)
        return value
    if isinstance(value, list):
        return [_subst(v, markers) for v in value]
    if isinstance(value, dict):
        if set(value) == {"shellcode"}:
            from .kebes import shellcode
            return shellcode.assemble(*_subst(value["shellcode"], markers))
        if set(value) == {"hex"}:
            return bytes.fromhex(value["hex"])
        return {k: _subst(v, markers) for k, v in value.items()}
    return value


class _Runner:
    def __init__(self, scenario: Scenario, seed: int):
        self.scenario = scenario
        self.seed = seed
        cfg = copy.deepcopy(scenario.lab)
        self.lab = Lab.build(LabConfig.from_dict(cfg), seed=seed)
        host = self.lab.host
        init = host.init.pid
        self.httpd = host.exec(init, "/usr/sbin/apache", ["apache", str(WEB_PORT)])
        self.clients: dict[str, KebesClient] = {}
        self.servers: dict[str, dict] = {}
        self.kebes_ports: set[int] = set()
        self.report = RunReport(scenario.name, seed, markers=list(scenario.markers), lab=self.lab)
        self.uid_log: list[tuple[int, str, list]] = []

    # -- sessions -------------------------------------------------------

    def _connect(self, name: str, port: int) -> KebesClient:
        n = len(self.clients)
        transport = SimTransport(self.lab, self.lab.host.ip, port,
                                 client_ip=f"192.0.2.{100 + n}", client_port=40000 + n)
        client = KebesClient(transport, seed=f"{self.seed}:{name}")
        client.handshake()
        client.add_toolset()
        self.clients[name] = client
        self.kebes_ports.add(port)
        return client

    def _server_uids(self) -> list[int]:
        from .kebes.server import KebesServer

        return sorted(svc_uid for svc_uid in
                      (self.lab.host.process(pid).uid for pid, s in self.lab.host.services.items()
                       if isinstance(s, KebesServer)))

    def step(self, i: int, step: dict) -> dict:
        kind = step["type"]
        fn = getattr(self, "do_" + kind.replace("-", "_"))
        detail = fn(step)
        self.uid_log.append((i, kind, self._server_uids()))
        return detail

    def do_deliver_exploit(self, step):
        port = int(step.get("port", 31337))
        image = Image("kebes-server").to_bytes()
        args = [OVERFLOW_TRIGGER + step.get("filler", ""), image.hex(), str(port),
                f"{self.seed}:www"]
        reply = HttpsClient(self.lab, self.lab.host.seed).request(
            step.get("target", "/cgi-bin/guestbook.cgi"), args)
        self.lab.settle()
        client = self._connect(step.get("session", "www"), port)
        info = client.call("SYSINFO")
        self.servers[step.get("session", "www")] = {"port": port, "uid": info["uid"]}
        return {"http_status": reply["status"], "server_uid": info["uid"], "port": port}

    def do_start_kebes(self, step):
        via = self.clients[step["via"]]
        port = int(step.get("port", 31338))
        name = step.get("session", "root")
        rng = random.Random(f"{self.seed}:stage:{name}")
        stage = "/tmp/" + "".join(rng.choice("abcdefghijklmnopqrstuvwxyz") for _ in range(12))
        via.call("CREATEFILE", stage, Image("kebes-server").to_bytes(), 0o755)
        r = via.call("EXECUTE", "/usr/local/bin/lpstat",
                     ["lpstat", OVERFLOW_TRIGGER, stage, str(port), f"{self.seed}:{name}"], b"")
        via.call("DELETE", stage)
        client = self._connect(name, port)
        info = client.call("SYSINFO")
        self.servers[name] = {"port": port, "uid": info["uid"]}
        return {"server_uid": info["uid"], "euid": info["euid"], "port": port, "status": r["status"]}

    def do_client_commands(self, step):
        client = self.clients[step["session"]]
        calls = [(c[0], _subst(list(c[1:]), self.scenario.markers)) for c in step["commands"]]
        replies = client.batch(calls)
        out = []
        for (name, _), (tag, status, result) in zip(calls, replies):
            out.append({"command": name, "status": status,
                        "result_sha256": hashlib.sha256(wire.encode(result)).hexdigest()})
            if status != "ok":
                raise LabError(f"{name} failed: {result}")
        return {"commands": out}

    def do_run_detectors(self, step):
        self.lab.settle()
        names = step.get("techniques", list(nosebreak.HOST_TECHNIQUES))
        reports = [nosebreak.run_technique(self.lab, t) for t in names]
        self.lab.settle()
        self.report.detections.extend(r.to_dict() for r in reports)
        return {r.technique: r.verdict for r in reports}

    def do_disable(self, step):
        via = self.clients[step["via"]]
        rng = random.Random(f"{self.seed}:tool")
        path = "/tmp/" + "".join(rng.choice("abcdefghijklmnopqrstuvwxyz") for _ in range(12))
        via.call("CREATEFILE", path, Image("nosebreak-tool").to_bytes(), 0o755)
        r = via.call("EXECUTE", "/usr/local/bin/lpstat", ["lpstat", OVERFLOW_TRIGGER, path], b"")
        via.call("DELETE", path)
        self.lab.settle()
        try:
            tool = json.loads(r["output"].decode() or "{}")
        except ValueError:
            raise LabError(f"removal tool output unreadable: {r['output'][:80]!r}") from None
        return {"status": r["status"], "found": tool.get("found"),
                "disabled": tool.get("disabled", False), "module": tool.get("module"),
                "secrets_top": tool.get("secrets", [])[:1]}

    def do_control_read(self, step):
        host = self.lab.host
        marker = self.scenario.markers[int(step.get("marker", 0))]
        sh = host.spawn("/bin/sh", 1000)
        host.write_file(sh.pid, "/tmp/control.txt", marker.encode())
        host.exec(sh.pid, "/bin/cat", ["cat", "/tmp/control.txt"], fd_plan={1: "/dev/null"})
        host.exit(sh.pid)
        self.lab.settle()
        return {"marker": marker}

    def do_assertions(self, step):
        self.lab.settle()
        results = {}
        for check in step.get("checks", []):
            results[check] = bool(getattr(self, "check_" + check)())
        self.report.assertions.update(results)
        return results

    # -- checks ---------------------------------------------------------

    def check_unlogged(self):
        return all(assert_unlogged(self.report, self.scenario.markers).values())

    def check_capture_opaque(self):
        return capture_is_opaque(self.lab, self.kebes_ports)

    def check_monitor_disabled(self):
        mon = self.lab.monitor
        return (mon is None or not mon.active) and \
            nosebreak.detect_syscall_anomaly(self.lab.host).verdict == nosebreak.NOT_DETECTED

    def check_root_server(self):
        return self.servers.get("root", {}).get("uid") == 0

    def check_privilege_path(self):
        root_seen = False
        for _, kind, uids in self.uid_log:
            if 0 in uids and not root_seen:
                if kind != "start-kebes":
                    return False
                root_seen = True
        return root_seen

    def finish(self) -> RunReport:
        for c in self.clients.values():
            c.close()
        self.lab.settle()
        rep = self.report
        rep.collector_digest = self.lab.collector.digest()
        rep.capture_digest = self.lab.wall.capture.digest() if self.lab.wall else ""
        return rep


def run(scenario: Scenario | str, seed: int = 0) -> RunReport:
    if isinstance(scenario, str):
        scenario = Scenario.load(scenario)
    runner = _Runner(scenario, seed)
    failed = False
    for i, step in enumerate(scenario.steps):
        if failed:
            runner.report.steps.append({"type": step["type"], "status": "skipped"})
            continue
        try:
            detail = runner.step(i, step)
            runner.report.steps.append({"type": step["type"], "status": "ok",
                                        "detail": nosebreak._jsonable(detail)})
        except (LabError, KeyError, ValueError) as exc:
            failed = True
            runner.report.steps.append({"type": step["type"], "status": "failed",
                                        "error": f"{type(exc).__name__}: {exc}"})
    return runner.finish()


# ---------------------------------------------------------------------------
# checks usable on any finished run
# ---------------------------------------------------------------------------

def assert_unlogged(report: RunReport, markers) -> dict[str, bool]:
    """Per marker: True iff it is absent from collector data and all captured payloads."""
    lab = report.lab
    if lab is None:
        raise LabError("report has no attached run")
    logged = lab.collector.data_stream()
    payloads = [e.packet.payload for e in lab.wall.capture] if lab.wall else []
    payloads += [p.payload for p in lab.host.local_capture]
    out = {}
    for m in markers:
        mb = m.encode() if isinstance(m, str) else bytes(m)
        out[m if isinstance(m, str) else mb.hex()] = not (
            mb in logged or any(mb in p for p in payloads))
    return out


def capture_is_opaque(lab: Lab, ports) -> bool:
    """Each Kebes flow in the capture is exactly one DH public then whole frames."""
    if lab.wall is None:
        return True
    flows: dict[tuple, bytearray] = {}
    for e in lab.wall.capture:
        p = e.packet
        if e.stage != "pre" or p.proto != "tcp" or not p.payload:
            continue
        if p.dport in ports or p.sport in ports:
            flows.setdefault((p.src, p.sport, p.dst, p.dport), bytearray()).extend(p.payload)
    for stream in flows.values():
        records = FrameReader()
        recs = records.feed(bytes(stream))
        if records.pending or not recs:
            return False
        if len(recs[0]) != 256:
            return False
        if any(len(r) < 32 or len(r) % 16 for r in recs[1:]):
            return False
    return bool(flows)


def export(report: RunReport, path: str | Path, fmt: str = "json") -> Path:
    path = Path(path)
    if fmt == "json":
        path.write_text(report.to_json())
    elif fmt == "pcap":
        if report.lab is None or report.lab.wall is None:
            raise OSError("no capture log to export")
        report.lab.wall.capture.export_pcap(path)
    else:
        raise OSError(f"unknown export format {fmt!r}")
    return path
