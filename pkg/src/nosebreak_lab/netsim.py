"""Packet transport with a capacity/queue congestion model.

One tick is one millisecond.  Each tick first runs the active loads, then
drains every link within its byte capacity.  Links are drop-tail FIFOs, and
a packet's queueing delay is the backlog ahead of it divided by capacity.
"""
from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field

from .packet import ICMP_ECHO_REPLY, ICMP_ECHO_REQUEST, Packet

PING_PAYLOAD = bytes(56)


@dataclass(frozen=True)
class Calibration:
    """Default link parameters.

    Idle round trip is ``2 * base_latency``.  A saturated queue holds
    ``queue_cap`` monitor packets of ~97 bytes, so the loaded round trip
    is about ``queue_cap * 97 / capacity`` ms.
    """

    capacity: int = 102400          # bytes per tick
    base_latency: float = 0.35      # ms, one way
    queue_cap: int = 6_000_000      # packets
    tick_ms: float = 1.0


@dataclass
class Link:
    name: str
    capacity: int
    base_latency: float
    queue_cap: int
    tick_ms: float = 1.0
    queue: deque = field(default_factory=deque)
    queued_packets: int = 0
    queued_bytes: int = 0
    enqueued: int = 0
    delivered: int = 0
    dropped: int = 0
    offered_bytes: int = 0
    _credit: int = 0

    def enqueue(self, packet: Packet, now: int) -> int:
        """Offer a packet (or train); returns how many copies were admitted."""
        self.enqueued += packet.repeat
        self.offered_bytes += packet.total_size
        room = self.queue_cap - self.queued_packets
        n = min(packet.repeat, max(room, 0))
        self.dropped += packet.repeat - n
        if n == 0:
            return 0
        if n < packet.repeat:
            packet, _ = packet.split(n)
        packet.meta["enqueued_at"] = now
        packet.meta["queue_wait_ms"] = self.queued_bytes / self.capacity * self.tick_ms
        self.queue.append(packet)
        self.queued_packets += n
        self.queued_bytes += packet.total_size
        return n

    def step(self) -> list[Packet]:
        self._credit += self.capacity
        out = []
        while self.queue:
            head = self.queue[0]
            n = min(head.repeat, self._credit // head.size)
            if n == 0:
                break
            if n < head.repeat:
                sent, rest = head.split(n)
                self.queue[0] = rest
            else:
                sent = self.queue.popleft()
            self._credit -= sent.total_size
            self.queued_packets -= n
            self.queued_bytes -= sent.total_size
            self.delivered += n
            out.append(sent)
        if not self.queue:
            self._credit = 0
        return out

    def conserved(self) -> bool:
        return self.delivered + self.dropped + self.queued_packets == self.enqueued


class DDLoad:
    """``dd if=/dev/zero of=/dev/null bs=1`` as a per-tick read burst."""

    def __init__(self, host, reads_per_tick: int, uid: int = 1000):
        self.host = host
        self.reads_per_tick = reads_per_tick
        self.proc = host.spawn("/bin/dd", uid)
        self.fd = host.open(self.proc.pid, "/dev/zero")
        self.ticks = 0
        self.active = True

    def step(self) -> None:
        if self.active and self.reads_per_tick > 0:
            self.host.sys_read(self.proc.pid, self.fd, 1, repeat=self.reads_per_tick)
            self.ticks += 1

    def stop(self) -> None:
        self.active = False
        if self.proc.alive:
            self.host.exit(self.proc.pid)


class Network:
    """Host <-> gateway links plus everything reachable behind the gateway.

    The gateway is the honeywall when one is present, otherwise a plain
    router.  Endpoints behind it (collector, internet) receive packets
    through ``deliver(packet, net)``.
    """

    def __init__(self, host, *, wall=None, gateway_ip: str = "10.0.0.1",
                 calibration: Calibration | None = None):
        cal = calibration or Calibration()
        self.calibration = cal
        self.host = host
        self.wall = wall
        self.gateway_ip = gateway_ip
        self.now = 0
        self.uplink = Link("host->gw", cal.capacity, cal.base_latency, cal.queue_cap, cal.tick_ms)
        self.downlink = Link("gw->host", cal.capacity, cal.base_latency, cal.queue_cap, cal.tick_ms)
        self.endpoints: dict[str, object] = {}
        self.default_endpoint = None
        self.loads: list = []
        self.delivered_log: list[Packet] = []
        self._ping_ids = itertools.count(1)
        self._ping_results: dict[int, float] = {}
        self._ping_lost: set[int] = set()
        self._echo_plan: list[Packet] = []
        host.net = self
        host.nic.tx_path = self._from_host
        if wall is not None:
            wall.clock = lambda: self.now

    @property
    def links(self) -> list[Link]:
        return [self.uplink, self.downlink]

    # -- topology --------------------------------------------------------

    def add_endpoint(self, ip: str, endpoint) -> None:
        self.endpoints[ip] = endpoint

    def _from_host(self, packet: Packet) -> None:
        self.uplink.enqueue(packet, self.now)

    def inject(self, packet: Packet) -> None:
        """A packet arriving at the gateway from outside the honeynet."""
        self._at_gateway(packet, from_host=False)

    def _at_gateway(self, packet: Packet, from_host: bool) -> None:
        if packet.dst == self.gateway_ip:
            if packet.proto == "icmp" and packet.icmp_type == ICMP_ECHO_REQUEST:
                reply = Packet(self.gateway_ip, packet.src, "icmp", packet.payload,
                               packet.sport, packet.dport, icmp_type=ICMP_ECHO_REPLY,
                               meta=dict(packet.meta))
                self.downlink.enqueue(reply, self.now)
            return
        if self.wall is not None:
            verdict = self.wall.forward(packet)
            if verdict.blocked:
                return
            packet = verdict.packet
        if from_host:
            target = self.endpoints.get(packet.dst, self.default_endpoint)
            if target is not None:
                target.deliver(packet, self)
        elif packet.dst == self.host.ip:
            self.downlink.enqueue(packet, self.now)

    # -- time ------------------------------------------------------------

    def tick(self) -> list[Packet]:
        # echoes sent between ticks enter ahead of this tick's load burst
        for pkt in self._echo_plan:
            if self.uplink.enqueue(pkt, self.now):
                pkt.meta["out_wait"] = pkt.meta["queue_wait_ms"]
                self.host.local_capture.append(pkt)
            else:
                self._ping_lost.add(pkt.meta["ping_id"])
        self._echo_plan.clear()
        for load in list(self.loads):
            load.step()
        delivered = []
        for p in self.uplink.step():
            self.host.nic.count_tx(p)
            delivered.append(p)
            self._at_gateway(p, from_host=True)
        for p in self.downlink.step():
            delivered.append(p)
            pid = p.meta.get("ping_id")
            if pid is not None and p.icmp_type == ICMP_ECHO_REPLY and p.dst == self.host.ip:
                self._ping_results[pid] = (p.meta["out_wait"] + p.meta["queue_wait_ms"]
                                           + 2 * self.calibration.base_latency)
            self.host.receive(p)
        self.poll_services()
        self.now += 1
        self.host.clock.advance()
        self.host.fs.tick = self.host.clock.tick
        return delivered

    def poll_services(self) -> None:
        for svc in list(self.host.services.values()):
            poll = getattr(svc, "poll", None)
            if poll is not None:
                poll()

    def run(self, ticks: int) -> None:
        for _ in range(ticks):
            self.tick()

    def idle(self) -> bool:
        if self._echo_plan or any(l.queue for l in self.links):
            return False
        return not any(getattr(s, "busy", False) for s in self.host.services.values())

    def rebind(self, host) -> None:
        """Attach a freshly booted host to the same wire."""
        self.host = host
        host.net = self
        host.nic.tx_path = self._from_host

    def run_until_idle(self, max_ticks: int = 100_000) -> int:
        n = 0
        self.tick()
        n += 1
        while not self.idle() and n < max_ticks:
            self.tick()
            n += 1
        return n

    # -- measurement -----------------------------------------------------

    def _send_echo(self, src: str, dst: str) -> int:
        pid = next(self._ping_ids)
        self._echo_plan.append(Packet(src, dst, "icmp", PING_PAYLOAD, pid & 0xFFFF, 0,
                                      icmp_type=ICMP_ECHO_REQUEST, meta={"ping_id": pid}))
        return pid

    def ping(self, src: str, dst: str, timeout_ticks: int = 60_000) -> float | None:
        """Round trip in ms, or None on timeout."""
        rtts = self.ping_series(src, dst, 1, 1, timeout_ticks)
        return rtts[0]

    def ping_series(self, src: str, dst: str, count: int, interval: int = 1000,
                    timeout_ticks: int = 60_000) -> list[float | None]:
        """Send ``count`` echoes ``interval`` ticks apart while loads keep running."""
        if src == dst:
            return [2 * self.calibration.base_latency] * count
        if src != self.host.ip:
            raise ValueError("pings originate at the host")
        sent = []
        for i in range(count):
            sent.append(self._send_echo(src, dst))
            self.run(interval if i < count - 1 else 1)
        deadline = self.now + timeout_ticks
        pending = set(sent)
        while True:
            pending -= set(self._ping_results) | self._ping_lost
            if not pending or self.now >= deadline:
                break
            self.tick()
        out = [self._ping_results.pop(pid, None) for pid in sent]
        self._ping_lost.difference_update(sent)
        return out

    def drive_dd_load(self, host, reads_per_tick: int) -> DDLoad:
        load = DDLoad(host, reads_per_tick)
        self.loads.append(load)
        return load

    def stop_load(self, load: DDLoad) -> None:
        load.stop()
        if load in self.loads:
            self.loads.remove(load)


def ping(net: Network, src: str, dst: str) -> float | None:
    return net.ping(src, dst)


def drive_dd_load(net: Network, host, reads_per_tick: int) -> DDLoad:
    return net.drive_dd_load(host, reads_per_tick)


def load_topology(doc: dict) -> Calibration:
    """Calibration from a topology document's ``link`` section."""
    link = doc.get("link", {})
    return Calibration(capacity=int(link.get("capacity", Calibration.capacity)),
                       base_latency=float(link.get("base_latency", Calibration.base_latency)),
                       queue_cap=int(link.get("queue_cap", Calibration.queue_cap)),
                       tick_ms=float(link.get("tick_ms", Calibration.tick_ms)))
