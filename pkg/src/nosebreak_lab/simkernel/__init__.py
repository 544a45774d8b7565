"""Deterministic model of the target host's kernel-visible state."""
from .config import HostConfig, default_host_config
from .fs import DEVICE, PROCFS, REGULAR, FileNode, FileSystem
from .host import (DeviceCounters, Host, KernelFunction, NetDevice, Process,
                   ReadCall, SimClock, boot)
from .image import Image, LibrarySpec, parse_image
from .memory import (DEFAULT_SYS_READ, DEFAULT_SYS_WRITE, HEADER_SIZE,
                     MODULE_BASE, MODULE_END, NR_READ, NR_WRITE, TEXT_BASE,
                     TEXT_END, KernelModule, Memory, ModuleDescriptor,
                     ModuleHeader, SyscallTable, in_module_region, in_text)
from .modules import stock_module
from .programs import OVERFLOW_TRIGGER, PROGRAMS, ProgramContext

__all__ = [
    "HostConfig", "default_host_config", "FileNode", "FileSystem", "REGULAR",
    "DEVICE", "PROCFS", "DeviceCounters", "Host", "KernelFunction", "NetDevice",
    "Process", "ReadCall", "SimClock", "boot", "Image", "LibrarySpec",
    "parse_image", "DEFAULT_SYS_READ", "DEFAULT_SYS_WRITE", "HEADER_SIZE",
    "MODULE_BASE", "MODULE_END", "NR_READ", "NR_WRITE", "TEXT_BASE", "TEXT_END",
    "KernelModule", "Memory", "ModuleDescriptor", "ModuleHeader",
    "SyscallTable", "in_module_region", "in_text", "stock_module",
    "OVERFLOW_TRIGGER", "PROGRAMS", "ProgramContext",
]
