import struct

import pytest

from nosebreak_lab.errors import StateError
from nosebreak_lab.nosebreak import parse_proc_net_dev
from nosebreak_lab.packet import Packet
from nosebreak_lab.sebek import (HOOK_OFFSET, MAX_CHUNK, RECORD_HEADER_SIZE, Collector,
                                 SebekConfig, SebekRecord, cleanup, command_field, install,
                                 instance)
from nosebreak_lab.simkernel.memory import NR_READ


def test_record_layout_round_trip():
    rec = SebekRecord(0xD0D0D0D0, 0x217, 5, 10, 20, 30, 40, 3, command_field("cat"), b"abc")
    raw = rec.pack()
    assert len(raw) == RECORD_HEADER_SIZE + 3
    assert struct.unpack_from("<I", raw)[0] == 0xD0D0D0D0
    assert SebekRecord.unpack(raw) == rec
    with pytest.raises(ValueError):
        SebekRecord.unpack(raw[:-1])


def test_command_field_truncates_to_twelve():
    assert command_field("averyveryverylongname") == b"averyveryver"
    assert command_field("sh") == b"sh" + bytes(10)


def test_config_validation():
    with pytest.raises(ValueError):
        SebekConfig(version="v300")
    with pytest.raises(ValueError):
        SebekConfig(module_name="sebek")
    a, b = SebekConfig.randomized(1), SebekConfig.randomized(1)
    assert a == b and a != SebekConfig.randomized(2)


def test_install_hooks_read(host):
    orig = host.table[NR_READ]
    mod = install(host)
    assert host.table[NR_READ] == mod.base + HOOK_OFFSET
    assert mod.name not in [m.name for m in host.public_modules()]
    with pytest.raises(StateError):
        install(host)
    cleanup(host)
    assert host.table[NR_READ] == orig


def test_read_emits_chunked_records(host):
    install(host)
    pid = host.spawn("/bin/cat", 0).pid
    host.write_file(pid, "/tmp/big", b"x" * 2500)
    fd = host.open(pid, "/tmp/big")
    host.drain_tx()
    host.sys_read(pid, fd, 4096)
    pkts = host.drain_tx()
    coll = Collector()
    for p in pkts:
        coll.receive(p)
    assert [len(r.data) for r in coll.records] == [MAX_CHUNK, MAX_CHUNK, 2500 - 2 * MAX_CHUNK]
    assert coll.data_stream() == b"x" * 2500
    assert {r.command_name for r in coll.records} == {"cat"}


def test_collector_ignores_foreign_traffic():
    coll = Collector()
    assert coll.receive(Packet("10.0.0.5", "10.0.1.10", "udp", b"junk", 1101, 1101)) == []
    assert coll.receive(Packet("10.0.0.5", "10.0.1.10", "tcp", b"", 1, 1101)) == []
    assert coll.ignored == 2


def _tx_view(host):
    return host.device_stats("eth0").tx_bytes


def test_v216_regresses_counter(host):
    install(host, SebekConfig(version="v216"))
    pid = host.spawn("/bin/dd", 0).pid
    fd = host.open(pid, "/dev/zero")
    host.drain_tx()
    before = _tx_view(host)
    host.sys_read(pid, fd, 512)
    assert _tx_view(host) < before


def _proc_tx(host):
    return parse_proc_net_dev(host.render_proc_net_dev())["eth0"]["tx_bytes"]


def test_v217_view_excludes_own_packets(host):
    install(host, SebekConfig(version="v217"))
    pid = host.spawn("/bin/dd", 0).pid
    fd = host.open(pid, "/dev/zero")
    before = _proc_tx(host)
    host.sys_read(pid, fd, 512)
    assert len(host.drain_tx()) == 1
    assert _proc_tx(host) == before
    assert _tx_view(host) == before + 608
    assert instance(host).deducted_packets == 1


def test_cleanup_twice_fails(host):
    install(host)
    cleanup(host)
    with pytest.raises(StateError):
        cleanup(host)
