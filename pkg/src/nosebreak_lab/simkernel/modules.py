"""Descriptors for ordinary, visible kernel modules."""
from __future__ import annotations

import random

from .memory import ModuleDescriptor

STOCK_SYMBOLS = {
    "8390": ["ei_open", "ei_close", "ei_interrupt", "ethdev_init", "NS8390_init"],
    "ext3": ["ext3_read_super", "ext3_write_inode", "ext3_sync_fs", "journal_start"],
    "usbcore": ["usb_register", "usb_deregister", "usb_alloc_urb", "usb_submit_urb"],
    "ide-cd": ["ide_cdrom_setup", "cdrom_open", "cdrom_release"],
    "nfs": ["nfs_lookup", "nfs_getattr", "nfs_readdir", "nfs_read_super"],
    "af_packet": ["packet_create", "packet_sendmsg", "packet_recvmsg"],
    "3c59x": ["vortex_open", "vortex_start_xmit", "vortex_interrupt"],
}


def stock_module(name: str, seed: int = 0) -> ModuleDescriptor:
    rng = random.Random(f"stock:{name}:{seed}")
    size = rng.randrange(2, 7) * 0x1000
    syms = STOCK_SYMBOLS.get(name, [f"{name}_init", f"{name}_exit"])
    symbols = [(s, 0x400 + 0x40 * i) for i, s in enumerate(syms)]
    return ModuleDescriptor(name=name, size=size, symbols=symbols,
                            init_offset=0x300, cleanup_offset=0x380,
                            fill_seed=rng.randrange(1 << 30))
