import pytest
from hypothesis import given, settings, strategies as st

from nosebreak_lab.netsim import Calibration, Link, load_topology
from nosebreak_lab.packet import Packet

RECORD_WIRE = 68 + 1 + 28  # one-byte read record, header plus UDP/IP


def _pkt(n: int, repeat: int = 1) -> Packet:
    return Packet("10.0.0.5", "10.0.1.10", "udp", bytes(n), 1, 2, repeat=repeat)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.one_of(st.tuples(st.just("in"), st.integers(0, 400), st.integers(1, 50)),
                          st.tuples(st.just("step"), st.just(0), st.just(0))), max_size=60),
       st.integers(1, 200))
def test_link_conserves_packets_and_bytes(ops, cap):
    link = Link("l", capacity=2000, base_latency=0.35, queue_cap=cap)
    offered = delivered_bytes = 0
    for op, size, rep in ops:
        if op == "in":
            admitted = link.enqueue(_pkt(size, rep), 0)
            offered += admitted * _pkt(size).size
        else:
            delivered_bytes += sum(p.total_size for p in link.step())
        assert link.conserved()
        assert 0 <= link.queued_packets <= cap
    assert offered == delivered_bytes + link.queued_bytes


def test_link_respects_capacity_per_tick():
    link = Link("l", capacity=1000, base_latency=0.35, queue_cap=10_000)
    link.enqueue(_pkt(72, repeat=100), 0)  # 100 bytes each
    sizes = [sum(p.total_size for p in link.step()) for _ in range(12)]
    assert sizes[:10] == [1000] * 10 and sum(sizes) == 10_000


def test_drop_tail_when_full():
    link = Link("l", capacity=10, base_latency=0.35, queue_cap=5)
    assert link.enqueue(_pkt(0, 8), 0) == 5
    assert link.dropped == 3


def test_idle_ping_is_twice_base(lab):
    assert lab.net.ping(lab.host.ip, lab.net.gateway_ip) == pytest.approx(0.7)


def oracle_backlog_wait(reads_per_tick: int, ticks: int, cal: Calibration) -> float:
    # independent fluid model of one drop-tail FIFO fed by fixed-size trains
    backlog = 0  # packets
    credit = 0
    for _ in range(ticks):
        backlog = min(cal.queue_cap, backlog + reads_per_tick)
        credit += cal.capacity
        sent = min(backlog, credit // RECORD_WIRE)
        backlog -= sent
        credit -= sent * RECORD_WIRE
        if backlog == 0:
            credit = 0
    return backlog * RECORD_WIRE / cal.capacity


def test_loaded_ping_matches_queue_oracle(lab):
    cal = lab.net.calibration
    load = lab.net.drive_dd_load(lab.host, 10_000)
    lab.net.run(1500)
    rtt = lab.net.ping(lab.host.ip, lab.net.gateway_ip)
    lab.net.stop_load(load)
    expect = oracle_backlog_wait(10_000, 1500, cal) + 2 * cal.base_latency
    assert rtt == pytest.approx(expect, rel=0.01)
    assert rtt > 100 * 0.7


def test_no_monitor_no_delay(make_lab):
    lab = make_lab(sebek=None)
    lab.net.drive_dd_load(lab.host, 10_000)
    lab.net.run(500)
    assert lab.net.ping(lab.host.ip, lab.net.gateway_ip) == pytest.approx(0.7)


def test_fast_link_hides_load(make_lab):
    lab = make_lab(link={"capacity": 102400 * 100})
    lab.net.drive_dd_load(lab.host, 10_000)
    lab.net.run(500)
    assert lab.net.ping(lab.host.ip, lab.net.gateway_ip) == pytest.approx(0.7)


def test_tx_counted_on_departure(lab):
    before = lab.host.nic.tx_packets
    lab.net.drive_dd_load(lab.host, 5000)
    lab.net.run(1)
    sent = lab.net.uplink.delivered
    assert lab.host.nic.tx_packets - before == sent < 5000


def test_load_topology_defaults():
    assert load_topology({}) == Calibration()
    assert load_topology({"link": {"capacity": 5}}).capacity == 5
