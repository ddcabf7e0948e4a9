"""Nodes, links, TCP endpoints and the dumbbell builder."""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from typing import Callable, Iterable

from aqmlab.aqm import Discipline, make_discipline
from aqmlab.config import ConfigError, ScenarioConfig
from aqmlab.engine import Simulator
from aqmlab.trace import FLAGS, TraceRecord

log = logging.getLogger(__name__)

DATA_KINDS = ("tcp", "cbr")


class Packet:
    __slots__ = ("id", "fid", "kind", "size", "seq", "src_node", "dst_node",
                 "src_addr", "dst_addr", "created_at")

    def __init__(self, id: int, fid: int, kind: str, size: int, seq: int,
                 src_node: int, dst_node: int, created_at: float,
                 src_port: int = 0, dst_port: int = 0):
        if size <= 0:
            raise ValueError("packet size must be positive")
        self.id = id
        self.fid = fid
        self.kind = kind
        self.size = size
        self.seq = seq
        self.src_node = src_node
        self.dst_node = dst_node
        self.src_addr = f"{src_node}.{src_port}"
        self.dst_addr = f"{dst_node}.{dst_port}"
        self.created_at = created_at

    def __repr__(self) -> str:
        return f"Packet(id={self.id}, {self.kind} fid={self.fid} seq={self.seq} {self.src_addr}->{self.dst_addr})"


class Network:
    """Owns the simulator, the nodes and links, and the trace fan-out."""

    def __init__(self, sim: Simulator):
        self.sim = sim
        self.nodes: list[Node] = []
        self.links: dict[tuple[int, int], Link] = {}
        self.names: dict[str, int] = {}
        self.trace_sinks: list[Callable[[TraceRecord], None]] = []
        self._next_id = 0

    def next_packet_id(self) -> int:
        pid = self._next_id
        self._next_id += 1
        return pid

    def add_node(self, name: str) -> "Node":
        node = Node(self, len(self.nodes), name)
        self.nodes.append(node)
        self.names[name] = node.id
        return node

    def node(self, name: str) -> "Node":
        return self.nodes[self.names[name]]

    def add_link(self, src: "Node", dst: "Node", rate_bps: float, delay_s: float,
                 queue: Discipline) -> "Link":
        if (src.id, dst.id) in self.links:
            raise ValueError(f"duplicate link {src.name}->{dst.name}")
        link = Link(self, src, dst, rate_bps, delay_s, queue)
        self.links[(src.id, dst.id)] = link
        src.out_links[dst.id] = link
        return link

    def link(self, src: str, dst: str) -> "Link":
        return self.links[(self.names[src], self.names[dst])]

    def compute_routes(self) -> None:
        """Shortest-hop static routing (BFS from each destination)."""
        incoming: dict[int, list[int]] = {n.id: [] for n in self.nodes}
        for (a, b) in self.links:
            incoming[b].append(a)
        for dest in self.nodes:
            seen = {dest.id}
            frontier = deque([dest.id])
            while frontier:
                cur = frontier.popleft()
                for prev in sorted(incoming[cur]):
                    if prev not in seen:
                        seen.add(prev)
                        self.nodes[prev].routes[dest.id] = self.links[(prev, cur)]
                        frontier.append(prev)

    def emit(self, event: str, link: "Link", pkt: Packet) -> None:
        record = TraceRecord(
            event, round(self.sim.now, 6), link.src.id, link.dst.id, pkt.kind, pkt.size,
            FLAGS, pkt.fid, pkt.src_addr, pkt.dst_addr, pkt.seq, pkt.id,
        )
        for sink in self.trace_sinks:
            sink(record)


class Node:
    def __init__(self, net: Network, id: int, name: str):
        self.net = net
        self.id = id
        self.name = name
        self.out_links: dict[int, Link] = {}
        self.routes: dict[int, Link] = {}
        self.agent = None

    def send(self, pkt: Packet) -> None:
        """Hand a locally generated or forwarded packet to the next-hop link."""
        try:
            link = self.routes[pkt.dst_node]
        except KeyError:
            raise RuntimeError(f"{self.name}: no route to node {pkt.dst_node}") from None
        link.enqueue(pkt)

    def receive(self, pkt: Packet) -> None:
        if pkt.dst_node == self.id:
            if self.agent is not None:
                self.agent.receive(pkt)
        else:
            self.send(pkt)


class Link:
    """Simplex link: a queue discipline feeding a serializer and a delay line."""

    def __init__(self, net: Network, src: Node, dst: Node, rate_bps: float,
                 delay_s: float, queue: Discipline):
        if rate_bps <= 0 or delay_s < 0:
            raise ValueError("link rate must be positive and delay nonnegative")
        self.net = net
        self.sim = net.sim
        self.src = src
        self.dst = dst
        self.rate_bps = rate_bps
        self.delay_s = delay_s
        self.queue = queue
        queue.attach(rate_bps)
        self.busy = False
        self.monitor: Callable[[float, int, int], None] | None = None
        self.arrivals = 0
        self.drops = 0
        self.departures = 0
        self.bytes_sent = 0

    def enqueue(self, pkt: Packet) -> None:
        net = self.net
        tracing = bool(net.trace_sinks)
        self.arrivals += 1
        if tracing:
            net.emit("+", self, pkt)
        dropped = self.queue.enqueue(pkt, self.sim.now)
        if dropped:
            self.drops += len(dropped)
            if tracing:
                for victim in dropped:
                    net.emit("d", self, victim)
        if not self.busy:
            self._transmit_next()
        if self.monitor is not None:
            self.monitor(self.sim.now, self.queue.backlog_packets, self.queue.backlog_bytes)

    def _transmit_next(self) -> None:
        sim = self.sim
        pkt = self.queue.dequeue(sim.now)
        if pkt is None:
            self.busy = False
            return
        self.busy = True
        self.departures += 1
        self.bytes_sent += pkt.size
        if self.net.trace_sinks:
            self.net.emit("-", self, pkt)
        done = sim.now + pkt.size * 8 / self.rate_bps
        sim.schedule(done, self._transmit_done)
        sim.schedule(done + self.delay_s, self._arrive, pkt)

    def _transmit_done(self) -> None:
        self._transmit_next()
        if self.monitor is not None:
            self.monitor(self.sim.now, self.queue.backlog_packets, self.queue.backlog_bytes)

    def _arrive(self, pkt: Packet) -> None:
        if self.net.trace_sinks:
            self.net.emit("r", self, pkt)
        self.dst.receive(pkt)


# --- TCP ------------------------------------------------------------------


@dataclass
class TcpSourceState:
    cwnd: float = 1.0
    ssthresh: float = 64.0
    next_seq: int = 0
    highest_acked: int = -1
    dup_ack_count: int = 0
    rto_s: float = 1.0
    base_rto_s: float = 1.0
    max_rto_s: float = 64.0
    receiver_window: int | None = None

    @property
    def in_flight(self) -> int:
        return self.next_seq - self.highest_acked - 1


def source_try_send(state: TcpSourceState) -> list[int]:
    """Sequence numbers the window allows to go out now (advances ``next_seq``)."""
    seqs = []
    limit = int(state.cwnd)
    if state.receiver_window is not None:
        limit = min(limit, state.receiver_window)
    while state.in_flight < limit:
        seqs.append(state.next_seq)
        state.next_seq += 1
    return seqs


def tcp_on_ack(state: TcpSourceState, ack_seq: int) -> int | None:
    """Apply one cumulative ACK; returns a sequence number to fast-retransmit, if any."""
    if ack_seq > state.highest_acked:
        state.highest_acked = ack_seq
        if state.next_seq <= ack_seq:
            state.next_seq = ack_seq + 1
        state.dup_ack_count = 0
        state.rto_s = state.base_rto_s
        if state.cwnd < state.ssthresh:
            state.cwnd += 1.0
        else:
            state.cwnd += 1.0 / state.cwnd
        return None
    if ack_seq < state.highest_acked:
        return None
    state.dup_ack_count += 1
    if state.dup_ack_count == 3:
        state.ssthresh = max(state.cwnd / 2.0, 2.0)
        state.cwnd = state.ssthresh
        return state.highest_acked + 1
    return None


def tcp_on_timeout(state: TcpSourceState) -> int:
    """Back off and rewind to the oldest unacknowledged segment, which is returned."""
    state.ssthresh = max(state.cwnd / 2.0, 2.0)
    state.cwnd = 1.0
    state.dup_ack_count = 0
    state.rto_s = min(state.rto_s * 2.0, state.max_rto_s)
    state.next_seq = state.highest_acked + 1
    return state.next_seq


class TcpSource:
    """Window-limited bulk sender attached to a node."""

    def __init__(self, net: Network, node: Node, dst: Node, fid: int, packet_size: int,
                 state: TcpSourceState | None = None):
        self.net = net
        self.sim = net.sim
        self.node = node
        self.dst = dst
        self.fid = fid
        self.packet_size = packet_size
        self.state = state or TcpSourceState()
        self.deadline: float | None = None
        self._timer = None
        self.sent = 0
        self.retransmits = 0
        self.timeouts = 0
        node.agent = self

    def start(self, at: float) -> None:
        self.sim.schedule(at, self._send_window)

    def _emit(self, seq: int) -> None:
        pkt = Packet(self.net.next_packet_id(), self.fid, "tcp", self.packet_size, seq,
                     self.node.id, self.dst.id, self.sim.now)
        self.sent += 1
        self.node.send(pkt)

    def _send_window(self) -> None:
        for seq in source_try_send(self.state):
            self._emit(seq)
        if self.state.in_flight > 0 and self.deadline is None:
            self._arm()

    def _arm(self) -> None:
        # One pending timer event; it re-checks ``deadline`` when it fires.
        self.deadline = self.sim.now + self.state.rto_s
        if self._timer is not None and self._timer.at > self.deadline:
            self._timer.cancel()
            self._timer = None
        if self._timer is None:
            self._timer = self.sim.schedule(self.deadline, self._on_timer)

    def _on_timer(self) -> None:
        self._timer = None
        if self.deadline is None:
            return
        if self.sim.now < self.deadline:
            self._timer = self.sim.schedule(self.deadline, self._on_timer)
            return
        self.timeouts += 1
        self.deadline = None
        seq = tcp_on_timeout(self.state)
        log.debug("t=%.6f fid=%d timeout, resend from %d", self.sim.now, self.fid, seq)
        self.retransmits += 1
        self._send_window()
        if self.deadline is None:
            self._arm()

    def receive(self, ack: Packet) -> None:
        st = self.state
        before = st.highest_acked
        resend = tcp_on_ack(st, ack.seq)
        if st.highest_acked > before:
            self.deadline = None
            if st.in_flight > 0:
                self._arm()
        if resend is not None:
            self.retransmits += 1
            self._emit(resend)
            self._arm()
        self._send_window()


class TcpSink:
    """Cumulative-ACK receiver."""

    def __init__(self, net: Network, node: Node, ack_size: int = 40):
        self.net = net
        self.node = node
        self.ack_size = ack_size
        self.expected = 0
        self._buffered: set[int] = set()
        self.received_bytes = 0
        node.agent = self

    def on_data(self, pkt: Packet) -> Packet:
        seq = pkt.seq
        if seq == self.expected:
            self.expected += 1
            while self.expected in self._buffered:
                self._buffered.discard(self.expected)
                self.expected += 1
        elif seq > self.expected:
            self._buffered.add(seq)
        return Packet(self.net.next_packet_id(), pkt.fid, "ack", self.ack_size, self.expected - 1,
                      self.node.id, pkt.src_node, self.net.sim.now)

    def receive(self, pkt: Packet) -> None:
        self.received_bytes += pkt.size
        self.node.send(self.on_data(pkt))


def sink_on_data(sink: TcpSink, pkt: Packet) -> Packet:
    return sink.on_data(pkt)


# --- dumbbell -------------------------------------------------------------


@dataclass
class Dumbbell:
    net: Network
    sources: list[TcpSource]
    sinks: list[TcpSink]
    config: ScenarioConfig

    @property
    def bottleneck(self) -> Link:
        return self.net.link("R1", "R2")

    @property
    def reverse_bottleneck(self) -> Link:
        return self.net.link("R2", "R1")

    @property
    def sink_nodes(self) -> list[int]:
        return [s.node.id for s in self.sinks]


def node_names(flows: int) -> list[str]:
    """S1..Sn, R1, R2, D1..Dn: the order fixes trace node numbers."""
    return ([f"S{i}" for i in range(1, flows + 1)] + ["R1", "R2"]
            + [f"D{i}" for i in range(1, flows + 1)])


def build_dumbbell(config: ScenarioConfig, sim: Simulator | None = None,
                   trace_sinks: Iterable[Callable[[TraceRecord], None]] = ()) -> Dumbbell:
    config.validate()
    if config.flows < 1:
        raise ConfigError("a dumbbell needs at least one flow")
    sim = sim or Simulator(config.seed)
    net = Network(sim)
    net.trace_sinks.extend(trace_sinks)
    for name in node_names(config.flows):
        net.add_node(name)
    params = config.discipline_params()
    for spec in config.link_specs():
        a, b = net.node(spec.src), net.node(spec.dst)
        for u, v in ((a, b), (b, a)):
            queue = make_discipline(spec.discipline, spec.buffer_bytes, sim.rng, params)
            net.add_link(u, v, spec.rate_bps, spec.prop_delay_s, queue)
    net.compute_routes()

    sources, sinks = [], []
    for i in range(1, config.flows + 1):
        state = TcpSourceState(
            cwnd=config.initial_cwnd, ssthresh=config.initial_ssthresh,
            rto_s=config.initial_rto_s, base_rto_s=config.initial_rto_s,
            max_rto_s=config.max_rto_s, receiver_window=config.receiver_window,
        )
        src = TcpSource(net, net.node(f"S{i}"), net.node(f"D{i}"), i,
                        config.packet_size_bytes, state)
        sinks.append(TcpSink(net, net.node(f"D{i}"), config.ack_size_bytes))
        jitter = sim.rng.uniform() * config.start_jitter_ms if config.start_jitter_ms else 0.0
        src.start(((i - 1) * config.stagger_ms + jitter) / 1e3)
        sources.append(src)
    return Dumbbell(net, sources, sinks, config)
