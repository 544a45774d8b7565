"""In-memory filesystem with a complete write history.

Unlinking drops the directory entry only.  The inode's last content stays
on "disk" as residue, and every content version ever written stays in the
history, so forensic checks can look at everything a disk examiner could.
"""
from __future__ import annotations

import posixpath
from dataclasses import dataclass, field

from ..errors import NotFound, StateError

REGULAR = "regular"
DEVICE = "device"
PROCFS = "procfs"


@dataclass
class FileNode:
    ino: int
    path: str
    kind: str
    content: bytearray = field(default_factory=bytearray)
    rule: str = ""  # device generator rule or procfs renderer key
    mode: int = 0o644
    uid: int = 0
    mtime: int = 0
    ctime: int = 0
    nlink: int = 1

    @property
    def size(self) -> int:
        return len(self.content) if self.kind == REGULAR else 0

    def readable_by(self, uid: int) -> bool:
        if uid == 0:
            return True
        if self.uid == uid:
            return bool(self.mode & 0o400)
        return bool(self.mode & 0o004)

    def executable(self) -> bool:
        return self.kind == REGULAR and bool(self.mode & 0o111)


@dataclass(frozen=True)
class WriteRecord:
    tick: int
    ino: int
    path: str
    offset: int
    data: bytes


class FileSystem:
    def __init__(self):
        self._entries: dict[str, int] = {}
        self.inodes: dict[int, FileNode] = {}
        self.history: list[WriteRecord] = []
        self.syncs: list[tuple[int, int]] = []
        self._versions: dict[int, list[bytes]] = {}
        self._next_ino = 1
        self.tick = 0

    # -- lookup ----------------------------------------------------------

    @staticmethod
    def norm(path: str) -> str:
        if not path.startswith("/"):
            raise NotFound(f"relative path {path!r}")
        return posixpath.normpath(path)

    def exists(self, path: str) -> bool:
        return self.norm(path) in self._entries

    def lookup(self, path: str) -> FileNode:
        try:
            return self.inodes[self._entries[self.norm(path)]]
        except KeyError:
            raise NotFound(path) from None

    def paths(self) -> list[str]:
        return sorted(self._entries)

    def isdir(self, path: str) -> bool:
        path = self.norm(path)
        prefix = path.rstrip("/") + "/"
        return path == "/" or any(p.startswith(prefix) for p in self._entries)

    def listdir(self, path: str) -> list[str]:
        path = self.norm(path)
        prefix = "/" if path == "/" else path + "/"
        names = {p[len(prefix):].split("/", 1)[0]
                 for p in self._entries if p.startswith(prefix)}
        if not names and path in self._entries:
            raise NotFound(f"{path} is not a directory")
        if not names and not self.isdir(path):
            raise NotFound(path)
        return sorted(names)

    def walk(self, top: str) -> list[str]:
        """All file paths below ``top``, sorted."""
        prefix = self.norm(top).rstrip("/") + "/"
        return [p for p in self.paths() if p.startswith(prefix)]

    # -- mutation --------------------------------------------------------

    def create(self, path: str, content: bytes = b"", *, kind: str = REGULAR,
               rule: str = "", mode: int = 0o644, uid: int = 0,
               exclusive: bool = False) -> FileNode:
        path = self.norm(path)
        if path in self._entries:
            if exclusive:
                raise StateError(f"{path} exists")
            node = self.lookup(path)
            self.truncate(path)
            if content:
                self.write(path, 0, content)
            return node
        node = FileNode(self._next_ino, path, kind, bytearray(), rule, mode,
                        uid, self.tick, self.tick)
        self._next_ino += 1
        self.inodes[node.ino] = node
        self._entries[path] = node.ino
        self._versions[node.ino] = []
        if content:
            self.write(path, 0, content)
        return node

    def write(self, path: str, offset: int, data: bytes) -> int:
        node = self.lookup(path)
        return self.write_inode(node, offset, data)

    def write_inode(self, node: FileNode, offset: int, data: bytes) -> int:
        if node.kind != REGULAR:
            return len(data)  # sinks like /dev/null
        data = bytes(data)
        end = offset + len(data)
        if len(node.content) < offset:
            node.content.extend(bytes(offset - len(node.content)))
        node.content[offset:end] = data
        node.mtime = self.tick
        self.history.append(WriteRecord(self.tick, node.ino, node.path, offset, data))
        self._versions[node.ino].append(bytes(node.content))
        return len(data)

    def truncate(self, path: str, size: int = 0) -> None:
        node = self.lookup(path)
        del node.content[size:]
        self._versions[node.ino].append(bytes(node.content))

    def rename(self, old: str, new: str) -> None:
        old, new = self.norm(old), self.norm(new)
        if old not in self._entries:
            raise NotFound(old)
        if new in self._entries:
            self.unlink(new)
        ino = self._entries.pop(old)
        self._entries[new] = ino
        self.inodes[ino].path = new

    def unlink(self, path: str) -> None:
        path = self.norm(path)
        if path not in self._entries:
            raise NotFound(path)
        node = self.inodes[self._entries.pop(path)]
        node.nlink = 0

    def fsync(self, path: str) -> None:
        self.syncs.append((self.tick, self.lookup(path).ino))

    def chmod(self, path: str, mode: int) -> None:
        self.lookup(path).mode = mode

    # -- forensics -------------------------------------------------------

    def versions(self, ino: int) -> list[bytes]:
        """Every content version the inode ever held, oldest first."""
        return list(self._versions.get(ino, []))

    def residue(self) -> dict[int, bytes]:
        """Last on-disk content of every unlinked regular inode."""
        return {ino: bytes(n.content) for ino, n in self.inodes.items()
                if n.nlink == 0 and n.kind == REGULAR}

    def disk_blobs(self) -> list[bytes]:
        """Everything still readable from the disk surface: live files and residue."""
        return [bytes(n.content) for n in self.inodes.values() if n.kind == REGULAR]

    def clone(self) -> "FileSystem":
        import copy
        return copy.deepcopy(self)
