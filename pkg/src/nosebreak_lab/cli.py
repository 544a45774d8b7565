"""Command-line entry points."""
from __future__ import annotations

import argparse
import json
import logging
import random
import socketserver
import sys
import threading
from pathlib import Path

from . import nosebreak, scenario
from .errors import LabError
from .lab import Lab, LabConfig

log = logging.getLogger("nosebreak_lab")


def _dump(obj) -> str:
    return json.dumps(nosebreak._jsonable(obj), sort_keys=True, indent=2)


# ---------------------------------------------------------------------------

def nosebreak_main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="nosebreak", description="Detect the hidden read() monitor.")
    sub = ap.add_subparsers(dest="cmd", required=True)
    d = sub.add_parser("detect", help="run detection techniques against a lab state")
    d.add_argument("--host", required=True, help="lab state file (JSON)")
    g = d.add_mutually_exclusive_group(required=True)
    g.add_argument("--all", action="store_true")
    g.add_argument("--technique", choices=nosebreak.TECHNIQUES)
    d.add_argument("--json", action="store_true")
    args = ap.parse_args(argv)
    try:
        lab = Lab.load(args.host)
        names = nosebreak.TECHNIQUES if args.all else (args.technique,)
        reports = [nosebreak.run_technique(lab, n) for n in names]
    except LabError as exc:
        print(f"nosebreak: {exc}", file=sys.stderr)
        return 2
    if args.json:
        print(json.dumps([r.to_dict() for r in reports], sort_keys=True, indent=2))
    else:
        for r in reports:
            print(f"{r.technique:20s} {r.verdict}")
    return 0


# ---------------------------------------------------------------------------

def lab_main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="nosebreak-lab", description="Run lab scenarios.")
    sub = ap.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run a scenario file or a built-in scenario name")
    r.add_argument("scenario")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--report", required=True)
    r.add_argument("--pcap")
    s = sub.add_parser("init-state", help="write a lab state file")
    s.add_argument("path")
    s.add_argument("--sebek", choices=("v216", "v217", "none"), default="v217")
    s.add_argument("--no-wall", action="store_true")
    s.add_argument("--seed", type=int, default=1)
    args = ap.parse_args(argv)
    if args.cmd == "init-state":
        cfg = LabConfig(sebek=None if args.sebek == "none" else {"version": args.sebek},
                        wall=not args.no_wall)
        doc = cfg.to_dict()
        doc["host"] = {"seed": args.seed}
        Path(args.path).write_text(json.dumps(doc, indent=2, sort_keys=True))
        return 0
    try:
        rep = scenario.run(scenario.Scenario.load(args.scenario), seed=args.seed)
        scenario.export(rep, args.report, "json")
        if args.pcap:
            scenario.export(rep, args.pcap, "pcap")
    except (LabError, OSError) as exc:
        print(f"nosebreak-lab: {exc}", file=sys.stderr)
        return 2
    for step in rep.steps:
        print(f"{step['type']:16s} {step['status']}")
    print(f"passed={rep.passed} digest={rep.digest()}")
    return 0 if rep.passed else 1


# ---------------------------------------------------------------------------

def kebes_server_main(argv=None) -> int:
    from .kebes.entropy import gather_entropy
    from .kebes.server import ServerSession

    ap = argparse.ArgumentParser(prog="kebes-server",
                                 description="Serve Kebes sessions on a real port against a simulated host.")
    ap.add_argument("--listen", type=int, required=True)
    ap.add_argument("--host", required=True, help="lab state file for the simulated host")
    ap.add_argument("--bind", default="127.0.0.1")
    ap.add_argument("--uid", type=int, default=33)
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO)
    lab = Lab.load(args.host)
    host = lab.host
    lock = threading.Lock()
    daemon = host.spawn("/usr/sbin/kebesd", args.uid)
    pool = gather_entropy(host, daemon.pid, live=True)

    class Handler(socketserver.BaseRequestHandler):
        def handle(self):
            with lock:
                child = host.fork(daemon.pid)
                pool.stir(["session", child.pid], child.pid, host.clock.hi_res())
                sess = ServerSession(host, child.pid, pool.generator())
                self.request.sendall(sess.hello())
            log.info("session %d from %s", child.pid, self.client_address)
            try:
                while True:
                    data = self.request.recv(1 << 16)
                    if not data:
                        break
                    with lock:
                        out = sess.feed(data)
                    if out:
                        self.request.sendall(out)
            except LabError as exc:
                log.warning("session %d torn down: %s", child.pid, exc)
            finally:
                with lock:
                    host.exit(child.pid)

    class Server(socketserver.ThreadingTCPServer):
        allow_reuse_address = True
        daemon_threads = True

    with Server((args.bind, args.listen), Handler) as srv:
        log.info("listening on %s:%d", args.bind, args.listen)
        try:
            srv.serve_forever()
        except KeyboardInterrupt:
            pass
    return 0


def parse_script(text: str) -> list[tuple[str, list]]:
    """One JSON array per line: ``["NAME", param, ...]``; ``{"hex": ..}`` is bytes."""
    calls = []
    for n, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            item = json.loads(line)
        except ValueError as exc:
            raise LabError(f"script line {n}: {exc}") from None
        if not isinstance(item, list) or not item or not isinstance(item[0], str):
            raise LabError(f"script line {n}: expected [\"NAME\", ...]")
        calls.append((item[0], scenario._subst(item[1:], [])))
    return calls


def kebes_client_main(argv=None) -> int:
    from .kebes.client import KebesClient, SocketTransport

    ap = argparse.ArgumentParser(prog="kebes-client", description="Run a Kebes command script.")
    ap.add_argument("--connect", required=True, help="host:port")
    ap.add_argument("--script", required=True, help="command file, one JSON array per line")
    ap.add_argument("--no-toolset", action="store_true", help="skip ADDCOMMAND of the toolset")
    ap.add_argument("--seed", type=int)
    args = ap.parse_args(argv)
    host, _, port = args.connect.rpartition(":")
    try:
        calls = parse_script(Path(args.script).read_text())
        rng = random.Random(args.seed) if args.seed is not None else random.SystemRandom()
        client = KebesClient(SocketTransport((host or "127.0.0.1", int(port))), rng=rng)
        client.handshake()
        if not args.no_toolset:
            client.add_toolset()
        replies = client.batch(calls) if calls else []
        client.close()
    except (LabError, OSError, ValueError) as exc:
        print(f"kebes-client: {exc}", file=sys.stderr)
        return 2
    print(_dump([{"tag": t, "status": s, "result": r} for t, s, r in replies]))
    return 0 if all(s == "ok" for _, s, _ in replies) else 1
