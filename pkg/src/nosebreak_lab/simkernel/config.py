"""HostConfig: the JSON document a host boots from."""
from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ConfigError
from .image import Image, LibrarySpec
from .memory import DEFAULT_LAYOUT_SEED


@dataclass
class HostConfig:
    seed: int = 1
    layout_seed: int = DEFAULT_LAYOUT_SEED
    hostname: str = "honey"
    ip: str = "10.0.0.2"
    files: list[dict] = field(default_factory=list)
    devices: list[dict] = field(default_factory=list)
    executables: list[dict] = field(default_factory=list)
    users: dict[str, int] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, doc: dict) -> "HostConfig":
        if not isinstance(doc, dict):
            raise ConfigError("host config must be a JSON object")
        known = {"seed", "layout_seed", "hostname", "ip", "files", "devices",
                 "executables", "users"}
        extra = set(doc) - known
        if extra:
            raise ConfigError(f"unknown host config keys: {sorted(extra)}")
        try:
            cfg = cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "HostConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None

    def to_dict(self) -> dict:
        return {"seed": self.seed, "layout_seed": self.layout_seed,
                "hostname": self.hostname, "ip": self.ip, "files": self.files,
                "devices": self.devices, "executables": self.executables,
                "users": self.users}

    def validate(self) -> None:
        for name in ("seed", "layout_seed"):
            if not isinstance(getattr(self, name), int):
                raise ConfigError(f"{name} must be an integer")
        for f in self.files:
            if not isinstance(f, dict) or "path" not in f:
                raise ConfigError(f"file entry needs a path: {f!r}")
            if f.get("kind", "regular") not in ("regular", "device", "procfs"):
                raise ConfigError(f"bad file kind in {f!r}")
        for d in self.devices:
            if not isinstance(d, dict) or "name" not in d:
                raise ConfigError(f"device entry needs a name: {d!r}")
        for e in self.executables:
            if not isinstance(e, dict) or "path" not in e or "program" not in e:
                raise ConfigError(f"executable needs path and program: {e!r}")
            for lib in e.get("libs", []):
                if lib.get("load", "mmap") not in ("mmap", "read"):
                    raise ConfigError(f"bad library load mode in {e['path']}")


def file_content(entry: dict, seed: int) -> bytes:
    if "content" in entry:
        return entry["content"].encode()
    if "content_hex" in entry:
        return bytes.fromhex(entry["content_hex"])
    if "random" in entry:
        rng = random.Random(f"file:{seed}:{entry['path']}")
        return rng.randbytes(int(entry["random"]))
    return b""


def executable_image(entry: dict, seed: int) -> bytes:
    rng = random.Random(f"exe:{seed}:{entry['path']}")
    libs = [LibrarySpec(l["path"], l.get("load", "mmap")) for l in entry.get("libs", [])]
    return Image(entry["program"], libs, list(entry.get("args", [])),
                 rng.randbytes(int(entry.get("body", 256)))).to_bytes()


_LIBC = {"path": "/lib/libc.so.6", "load": "mmap"}
_LD = {"path": "/lib/ld-linux.so.2", "load": "mmap"}


def default_host_config(seed: int = 1, layout_seed: int = DEFAULT_LAYOUT_SEED) -> HostConfig:
    """A small Debian-ish honeypot: web server, vulnerable CGI, SUID tool."""
    files = [
        {"path": "/etc/passwd", "content": "root:x:0:0:root:/root:/bin/sh\n"
                                           "www-data:x:33:33:www-data:/var/www:/bin/sh\n"
                                           "user:x:1000:1000::/home/user:/bin/sh\n"},
        {"path": "/etc/shadow", "content": "root:$1$Qm2Tj8$S0mEh4sHbEE:12500:0:99999:7:::\n",
         "mode": 0o600},
        {"path": "/etc/hostname", "content": "honey\n"},
        {"path": "/var/log/messages", "random": 6000},
        {"path": "/var/log/syslog", "random": 9000},
        {"path": "/var/log/auth.log", "random": 3000, "mode": 0o640},
        {"path": "/var/www/index.html", "content": "<html><body>It works!</body></html>\n"},
        {"path": "/var/lib/dpkg/status", "random": 20000},
        {"path": "/var/spool/cron/crontab", "random": 200, "mode": 0o600},
        {"path": "/tmp/.X0-lock", "content": "      1234\n"},
        {"path": "/home/user/notes.txt", "content": "remember to patch the cgi\n"},
        {"path": "/lib/ld-linux.so.2", "random": 4096, "mode": 0o755},
        {"path": "/lib/libc.so.6", "random": 8192, "mode": 0o755},
        {"path": "/lib/libproc.so.3", "random": 960, "mode": 0o755},
        {"path": "/lib/libpthread.so.0", "random": 3072, "mode": 0o755},
        {"path": "/usr/lib/libpython2.3.so", "random": 8192, "mode": 0o755},
        {"path": "/dev/zero", "kind": "device", "rule": "zero", "mode": 0o666},
        {"path": "/dev/null", "kind": "device", "rule": "null", "mode": 0o666},
        {"path": "/dev/urandom", "kind": "device", "rule": "urandom", "mode": 0o666},
        {"path": "/dev/random", "kind": "device", "rule": "urandom", "mode": 0o666},
        {"path": "/proc/net/dev", "kind": "procfs", "rule": "net/dev", "mode": 0o444},
        {"path": "/proc/modules", "kind": "procfs", "rule": "modules", "mode": 0o444},
    ]
    exe = [
        {"path": "/bin/echo", "program": "echo", "libs": [_LD, _LIBC]},
        {"path": "/bin/cat", "program": "cat", "libs": [_LD, _LIBC]},
        {"path": "/bin/ls", "program": "ls", "libs": [_LD, _LIBC]},
        {"path": "/bin/dd", "program": "dd", "libs": [_LD, _LIBC]},
        {"path": "/bin/true", "program": "true", "libs": [_LD]},
        {"path": "/bin/sh", "program": "sh", "libs": [_LD, _LIBC]},
        {"path": "/usr/bin/id", "program": "id", "libs": [_LD, _LIBC]},
        {"path": "/usr/bin/uptime", "program": "uptime",
         "libs": [_LD, _LIBC, {"path": "/lib/libproc.so.3", "load": "read"}]},
        {"path": "/usr/sbin/apache", "program": "httpd", "libs": [_LD, _LIBC,
                                                                  {"path": "/lib/libpthread.so.0"}]},
        {"path": "/usr/lib/cgi-bin/guestbook.cgi", "program": "vuln-cgi", "libs": [_LD, _LIBC]},
        {"path": "/usr/local/bin/lpstat", "program": "suid-vuln", "libs": [_LD, _LIBC],
         "mode": 0o4755, "uid": 0},
    ]
    devices = [
        {"name": "lo"},
        {"name": "eth0", "rx_bytes": 91337442, "rx_packets": 120331,
         "tx_bytes": 48213337, "tx_packets": 80115},
    ]
    users = {"root": 0, "www-data": 33, "user": 1000}
    return HostConfig(seed=seed, layout_seed=layout_seed, files=files,
                      devices=devices, executables=exe, users=users)
