"""Kernel address space: text region, module region, syscall table."""
from __future__ import annotations

import random
import struct
from dataclasses import dataclass, field

import numpy as np

from ..errors import LookupFailure

TEXT_BASE = 0xC0100000
TEXT_END = 0xC0400000
MODULE_BASE = 0xC8800000
MODULE_END = 0xC9000000

NR_READ = 3
NR_WRITE = 4
NR_SYSCALLS = 256

DEFAULT_LAYOUT_SEED = 0
# boot-time anchors reproduced under the default layout seed
DEFAULT_SYS_READ = 0xC0132ECC
DEFAULT_SYS_WRITE = 0xC0132FC8
DEFAULT_MODULE_CURSOR = 0xC884E000

HEADER_SIZE = 24
HEADER = struct.Struct("<6I")
MAX_MODULE_SIZE = 1 << 20
PAGE = 0x1000

Address = int


def in_text(addr: Address) -> bool:
    return TEXT_BASE <= addr < TEXT_END


def in_module_region(addr: Address) -> bool:
    return MODULE_BASE <= addr < MODULE_END


@dataclass(frozen=True)
class ModuleHeader:
    next_header: Address
    name_addr: Address
    size: int
    flags: int
    init: Address
    cleanup: Address

    def pack(self) -> bytes:
        return HEADER.pack(self.next_header, self.name_addr, self.size,
                           self.flags, self.init, self.cleanup)

    @classmethod
    def unpack(cls, raw: bytes) -> "ModuleHeader":
        return cls(*HEADER.unpack(raw))


class Memory:
    """Byte image of the module region.

    Kernel text is not materialized: reads there return zero bytes, which
    is all the detectors ever need from it.
    """

    def __init__(self):
        self.region = np.zeros(MODULE_END - MODULE_BASE, dtype=np.uint8)

    def _off(self, addr: Address, n: int) -> int:
        if not (MODULE_BASE <= addr and addr + n <= MODULE_END):
            raise LookupFailure(f"address {addr:#x}+{n} outside module region")
        return addr - MODULE_BASE

    def read(self, addr: Address, n: int) -> bytes:
        if in_text(addr) and in_text(addr + n - 1 if n else addr):
            return bytes(n)
        off = self._off(addr, n)
        return self.region[off:off + n].tobytes()

    def write(self, addr: Address, data: bytes) -> None:
        off = self._off(addr, len(data))
        self.region[off:off + len(data)] = np.frombuffer(bytes(data), dtype=np.uint8)

    def read_u32(self, addr: Address) -> int:
        return struct.unpack("<I", self.read(addr, 4))[0]

    def write_u32(self, addr: Address, value: int) -> None:
        self.write(addr, struct.pack("<I", value & 0xFFFFFFFF))

    def read_cstring(self, addr: Address, limit: int = 64) -> bytes | None:
        """NUL-terminated bytes at ``addr``, or None if no NUL within ``limit``."""
        limit = min(limit, MODULE_END - addr)
        raw = self.read(addr, limit)
        end = raw.find(b"\0")
        return None if end < 0 else raw[:end]

    def words(self) -> np.ndarray:
        return self.region.view("<u4")

    def digest(self) -> str:
        import hashlib
        return hashlib.sha256(self.region.tobytes()).hexdigest()


class SyscallTable:
    """Syscall number -> handler address, with the boot image kept aside."""

    def __init__(self, entries: list[Address]):
        self._entries = list(entries)
        self._boot = tuple(entries)

    def __getitem__(self, nr: int) -> Address:
        return self._entries[nr]

    def __setitem__(self, nr: int, addr: Address) -> None:
        self._entries[nr] = addr

    def __len__(self) -> int:
        return len(self._entries)

    def entries(self) -> list[Address]:
        return list(self._entries)

    def boot_entry(self, nr: int) -> Address:
        """Original boot-time entry (oracle use only)."""
        return self._boot[nr]


def generate_syscall_table(layout_seed: int, n: int = NR_SYSCALLS) -> SyscallTable:
    """Lay out ``n`` syscall handlers in kernel text, gaps below one page."""
    rng = random.Random(f"syscalls:{layout_seed}")
    steps = [rng.randrange(0x20, 0x800, 4) for _ in range(n - 1)]
    if layout_seed == DEFAULT_LAYOUT_SEED:
        anchor = DEFAULT_SYS_READ
        steps[NR_READ] = DEFAULT_SYS_WRITE - DEFAULT_SYS_READ
    else:
        anchor = TEXT_BASE + 0x10000 + rng.randrange(0, 0x100000, 4)
    entries = [0] * n
    entries[NR_READ] = anchor
    for i in range(NR_READ - 1, -1, -1):
        entries[i] = entries[i + 1] - steps[i]
    for i in range(NR_READ + 1, n):
        entries[i] = entries[i - 1] + steps[i - 1]
    return SyscallTable(entries)


def initial_module_cursor(layout_seed: int) -> Address:
    if layout_seed == DEFAULT_LAYOUT_SEED:
        return DEFAULT_MODULE_CURSOR
    rng = random.Random(f"modcursor:{layout_seed}")
    return MODULE_BASE + rng.randrange(0x10, 0x100) * PAGE


@dataclass
class ModuleDescriptor:
    """What ``load_module`` needs to place a module.

    ``layout`` maps region names to (offset, bytes) pairs written relative to
    the module base; ``functions`` maps offsets to callables registered as
    kernel functions.  ``var_block`` names byte fields at offsets inside
    the module.
    """

    name: str
    size: int
    symbols: list[tuple[str, int]] = field(default_factory=list)
    hidden: bool = False
    init_offset: int = 0x200
    cleanup_offset: int = 0x300
    flags: int = 1
    var_block: dict[str, tuple[int, bytes]] = field(default_factory=dict)
    layout: list[tuple[int, bytes]] = field(default_factory=list)
    functions: dict[int, object] = field(default_factory=dict)
    fill_seed: int | None = None


@dataclass
class KernelModule:
    name: str
    base: Address
    size: int
    header_addr: Address
    init_addr: Address
    cleanup_addr: Address
    hidden: bool
    symbols: list[tuple[str, Address]]
    var_block: dict[str, tuple[Address, bytes]]

    def contains(self, addr: Address) -> bool:
        return self.base <= addr < self.base + self.size
