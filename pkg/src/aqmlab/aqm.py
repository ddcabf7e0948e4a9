"""Queue disciplines: DropTail, RED, SFQ and REM.

Every discipline exposes the same surface used by a link:

* ``enqueue(packet, now)`` returns the list of packets dropped by this
  arrival. The arriving packet itself may be in that list; SFQ may instead
  push out a packet that was already queued.
* ``dequeue(now)`` returns the next packet to transmit or ``None``.
* ``backlog_bytes`` / ``backlog_packets`` count packets waiting, not the one
  on the wire.
"""

from __future__ import annotations

import zlib
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable

from aqmlab.engine import RandomSource

DISCIPLINES = ("droptail", "red", "sfq", "rem")


class Discipline:
    name = "base"

    def __init__(self, buffer_bytes: int):
        if buffer_bytes <= 0:
            raise ValueError("buffer_bytes must be positive")
        self.buffer_bytes = buffer_bytes
        self.backlog_bytes = 0
        self.rate_bps: float | None = None

    def attach(self, rate_bps: float) -> None:
        self.rate_bps = rate_bps

    @property
    def backlog_packets(self) -> int:
        raise NotImplementedError

    def enqueue(self, packet: Any, now: float) -> list:
        raise NotImplementedError

    def dequeue(self, now: float) -> Any | None:
        raise NotImplementedError


# --- DropTail -------------------------------------------------------------


def droptail_admits(backlog_bytes: int, size_bytes: int, buffer_bytes: int) -> bool:
    return backlog_bytes + size_bytes <= buffer_bytes


class DropTail(Discipline):
    name = "droptail"

    def __init__(self, buffer_bytes: int):
        super().__init__(buffer_bytes)
        self._fifo: deque = deque()

    @property
    def backlog_packets(self) -> int:
        return len(self._fifo)

    def enqueue(self, packet, now):
        if self.backlog_bytes + packet.size > self.buffer_bytes:
            return [packet]
        self._fifo.append(packet)
        self.backlog_bytes += packet.size
        return []

    def dequeue(self, now):
        if not self._fifo:
            return None
        packet = self._fifo.popleft()
        self.backlog_bytes -= packet.size
        return packet


def droptail_enqueue(queue: DropTail, packet) -> bool:
    """True if ``packet`` was accepted."""
    return not queue.enqueue(packet, 0.0)


# --- RED --------------------------------------------------------------------


@dataclass
class RedParams:
    # Thresholds in packets: max_th at half the 2-packet buffer, min_th a third of that.
    w_q: float = 0.002
    max_p: float = 0.1
    min_th: float = 1 / 3
    max_th: float = 1.0
    mean_pkt_bytes: int = 2000

    def validate(self) -> None:
        if not 0 < self.w_q <= 1:
            raise ValueError("red w_q must lie in (0, 1]")
        if not 0 < self.max_p <= 1:
            raise ValueError("red max_p must lie in (0, 1]")
        if not 0 <= self.min_th < self.max_th:
            raise ValueError("red thresholds need 0 <= min_th < max_th")
        if self.mean_pkt_bytes <= 0:
            raise ValueError("red mean_pkt_bytes must be positive")


@dataclass
class RedState:
    w_q: float = 0.002
    min_th: float = 1 / 3
    max_th: float = 1.0
    max_p: float = 0.1
    avg: float = 0.0
    count: int = -1
    idle_since: float | None = 0.0

    @classmethod
    def from_params(cls, params: RedParams) -> "RedState":
        return cls(w_q=params.w_q, min_th=params.min_th, max_th=params.max_th, max_p=params.max_p)


def red_avg_update(avg: float, q: float, w_q: float, idle_packets: float = 0.0) -> float:
    """EWMA of the queue length.

    ``idle_packets`` is how many packets the link could have sent while the
    queue sat empty; the old average decays as if that many empty samples
    had been seen first.
    """
    if idle_packets > 0:
        avg *= (1.0 - w_q) ** idle_packets
    return (1.0 - w_q) * avg + w_q * q


def red_drop_probability(avg: float, count: int, min_th: float, max_th: float, max_p: float) -> float:
    if avg < min_th:
        return 0.0
    if avg >= max_th:
        return 1.0
    p_b = max_p * (avg - min_th) / (max_th - min_th)
    denom = 1.0 - count * p_b
    if denom <= 0:
        return 1.0
    return min(1.0, p_b / denom)


def red_drop_decision(state: RedState, rng: RandomSource | Callable[[], float]) -> bool:
    """Early-drop test for one arrival; True means drop. Mutates ``state.count``.

    ``count`` is advanced before the probability is computed, so the first
    arrival after a quiet period is tested with ``count == 0``.
    """
    if state.avg < state.min_th:
        state.count = -1
        return False
    if state.avg >= state.max_th:
        state.count = 0
        return True
    state.count += 1
    p_a = red_drop_probability(state.avg, state.count, state.min_th, state.max_th, state.max_p)
    draw = rng.uniform() if isinstance(rng, RandomSource) else rng()
    if draw < p_a:
        state.count = 0
        return True
    return False


class Red(Discipline):
    name = "red"

    def __init__(self, buffer_bytes: int, rng: RandomSource, params: RedParams | None = None):
        super().__init__(buffer_bytes)
        self.params = params or RedParams()
        self.params.validate()
        self.state = RedState.from_params(self.params)
        self.rng = rng
        self._fifo: deque = deque()
        self.early_drops = 0
        self.forced_drops = 0

    @property
    def backlog_packets(self) -> int:
        return len(self._fifo)

    def _idle_packets(self, now: float) -> float:
        st = self.state
        if st.idle_since is None or self.rate_bps is None:
            return 0.0
        per_packet = self.params.mean_pkt_bytes * 8 / self.rate_bps
        return max(0.0, now - st.idle_since) / per_packet

    def enqueue(self, packet, now):
        st = self.state
        idle = self._idle_packets(now) if not self._fifo else 0.0
        st.avg = red_avg_update(st.avg, len(self._fifo), st.w_q, idle)
        st.idle_since = None
        if red_drop_decision(st, self.rng):
            self.early_drops += 1
            return [packet]
        if self.backlog_bytes + packet.size > self.buffer_bytes:
            self.forced_drops += 1
            st.count = 0
            return [packet]
        self._fifo.append(packet)
        self.backlog_bytes += packet.size
        return []

    def dequeue(self, now):
        if not self._fifo:
            if self.state.idle_since is None:
                self.state.idle_since = now
            return None
        packet = self._fifo.popleft()
        self.backlog_bytes -= packet.size
        return packet


# --- REM --------------------------------------------------------------------


@dataclass
class RemParams:
    gamma: float = 0.001
    phi: float = 1.001
    alpha: float = 0.1
    target_backlog: float = 0.0
    update_period_s: float = 0.01
    mean_pkt_bytes: int = 2000

    def validate(self) -> None:
        if self.gamma <= 0 or self.alpha <= 0:
            raise ValueError("rem gamma and alpha must be positive")
        if self.phi <= 1:
            raise ValueError("rem phi must exceed 1")
        if self.target_backlog < 0:
            raise ValueError("rem target_backlog must be nonnegative")
        if self.update_period_s <= 0 or self.mean_pkt_bytes <= 0:
            raise ValueError("rem update_period_s and mean_pkt_bytes must be positive")


@dataclass
class RemState:
    gamma: float = 0.001
    alpha: float = 0.1
    phi: float = 1.001
    target_backlog: float = 0.0
    update_period_s: float = 0.01
    mean_pkt_bytes: int = 2000
    price: float = 0.0
    arrived_since_update: int = 0
    next_update: float = 0.01

    @classmethod
    def from_params(cls, params: RemParams) -> "RemState":
        return cls(
            gamma=params.gamma, alpha=params.alpha, phi=params.phi,
            target_backlog=params.target_backlog, update_period_s=params.update_period_s,
            mean_pkt_bytes=params.mean_pkt_bytes, next_update=params.update_period_s,
        )

    @property
    def rate_normalizer(self) -> float:
        """Bits/s per (packet per update period)."""
        return self.mean_pkt_bytes * 8 / self.update_period_s


def rem_price_update(state: RemState, backlog_pkts: float, input_bps: float, capacity_bps: float) -> RemState:
    mismatch = state.alpha * (backlog_pkts - state.target_backlog)
    mismatch += (input_bps - capacity_bps) / state.rate_normalizer
    state.price = max(0.0, state.price + state.gamma * mismatch)
    return state


def rem_mark_prob(price: float, phi: float) -> float:
    return 1.0 - phi ** (-price)


def rem_path_pass_prob(prices, phi: float) -> float:
    """Probability a packet crosses every priced link unmarked."""
    p = 1.0
    for price in prices:
        p *= 1.0 - rem_mark_prob(price, phi)
    return p


class Rem(Discipline):
    name = "rem"

    def __init__(self, buffer_bytes: int, rng: RandomSource, params: RemParams | None = None):
        super().__init__(buffer_bytes)
        self.params = params or RemParams()
        self.params.validate()
        self.state = RemState.from_params(self.params)
        self.rng = rng
        self._fifo: deque = deque()
        self.early_drops = 0
        self.forced_drops = 0

    @property
    def backlog_packets(self) -> int:
        return len(self._fifo)

    def _catch_up(self, now: float) -> None:
        # Backlog only changes inside enqueue/dequeue, so replaying missed
        # periods here is exact.
        st = self.state
        if now < st.next_update:
            return
        capacity = self.rate_bps or 0.0
        period = st.update_period_s
        backlog = len(self._fifo)
        while st.next_update <= now:
            input_bps = st.arrived_since_update * 8 / period
            rem_price_update(st, backlog, input_bps, capacity)
            st.arrived_since_update = 0
            st.next_update += period
            if st.price == 0.0 and backlog <= st.target_backlog and st.next_update <= now:
                # Idle periods leave a zero price at zero; skip ahead.
                skipped = int((now - st.next_update) / period) + 1
                st.next_update += skipped * period

    def enqueue(self, packet, now):
        self._catch_up(now)
        st = self.state
        st.arrived_since_update += packet.size
        if self.backlog_bytes + packet.size > self.buffer_bytes:
            self.forced_drops += 1
            return [packet]
        if st.price > 0.0 and self.rng.uniform() < rem_mark_prob(st.price, st.phi):
            self.early_drops += 1
            return [packet]
        self._fifo.append(packet)
        self.backlog_bytes += packet.size
        return []

    def dequeue(self, now):
        self._catch_up(now)
        if not self._fifo:
            return None
        packet = self._fifo.popleft()
        self.backlog_bytes -= packet.size
        return packet


# --- SFQ --------------------------------------------------------------------


@dataclass
class SfqParams:
    n_buckets: int = 16
    perturb_period_s: float = 5.0

    def validate(self) -> None:
        if self.n_buckets < 1:
            raise ValueError("sfq n_buckets must be >= 1")
        if self.perturb_period_s <= 0:
            raise ValueError("sfq perturb_period_s must be positive")


def sfq_classify(flow_key: tuple, perturbation: int, n_buckets: int) -> int:
    if n_buckets < 1:
        raise ValueError("n_buckets must be >= 1")
    if n_buckets == 1:
        return 0
    data = "|".join(str(part) for part in flow_key).encode()
    return zlib.crc32(data, perturbation & 0xFFFFFFFF) % n_buckets


def flow_key(packet) -> tuple:
    return (packet.src_addr, packet.dst_addr, packet.fid)


@dataclass
class SfqState:
    n_buckets: int
    buckets: list = field(default_factory=list)
    bucket_bytes: list = field(default_factory=list)
    perturbation: int = 0
    rr_cursor: int = 0
    arrivals: int = 0

    def __post_init__(self):
        if not self.buckets:
            self.buckets = [deque() for _ in range(self.n_buckets)]
            self.bucket_bytes = [0] * self.n_buckets


def sfq_enqueue(state: SfqState, packet, buffer_bytes: int) -> list:
    """Append ``packet`` to its bucket, then shed from the longest bucket while over budget."""
    idx = sfq_classify(flow_key(packet), state.perturbation, state.n_buckets)
    state.buckets[idx].append((state.arrivals, packet))
    state.arrivals += 1
    state.bucket_bytes[idx] += packet.size
    dropped = []
    while sum(state.bucket_bytes) > buffer_bytes:
        longest = max(state.bucket_bytes)
        victim = idx if state.bucket_bytes[idx] == longest else state.bucket_bytes.index(longest)
        _, pkt = state.buckets[victim].pop()
        state.bucket_bytes[victim] -= pkt.size
        dropped.append(pkt)
    return dropped


def sfq_dequeue(state: SfqState):
    n = state.n_buckets
    for step in range(n):
        idx = (state.rr_cursor + step) % n
        bucket = state.buckets[idx]
        if bucket:
            _, packet = bucket.popleft()
            state.bucket_bytes[idx] -= packet.size
            state.rr_cursor = (idx + 1) % n
            return packet
    return None


class Sfq(Discipline):
    name = "sfq"

    def __init__(self, buffer_bytes: int, rng: RandomSource, params: SfqParams | None = None):
        super().__init__(buffer_bytes)
        self.params = params or SfqParams()
        self.params.validate()
        self.rng = rng
        self.state = SfqState(self.params.n_buckets)
        self._next_perturb = 0.0
        self._count = 0

    @property
    def backlog_packets(self) -> int:
        return self._count

    def _maybe_perturb(self, now: float) -> None:
        if now < self._next_perturb:
            return
        period = self.params.perturb_period_s
        while self._next_perturb <= now:
            self._next_perturb += period
        st = self.state
        if st.n_buckets == 1:
            return
        st.perturbation = self.rng.randbits(32)
        # Re-file queued packets under the new hash, keeping arrival order.
        queued = sorted(entry for bucket in st.buckets for entry in bucket)
        for bucket in st.buckets:
            bucket.clear()
        st.bucket_bytes = [0] * st.n_buckets
        for entry in queued:
            idx = sfq_classify(flow_key(entry[1]), st.perturbation, st.n_buckets)
            st.buckets[idx].append(entry)
            st.bucket_bytes[idx] += entry[1].size

    def enqueue(self, packet, now):
        self._maybe_perturb(now)
        dropped = sfq_enqueue(self.state, packet, self.buffer_bytes)
        self._count += 1 - len(dropped)
        self.backlog_bytes += packet.size - sum(p.size for p in dropped)
        return dropped

    def dequeue(self, now):
        self._maybe_perturb(now)
        packet = sfq_dequeue(self.state)
        if packet is not None:
            self._count -= 1
            self.backlog_bytes -= packet.size
        return packet

    def bucket_of(self, packet) -> int:
        return sfq_classify(flow_key(packet), self.state.perturbation, self.state.n_buckets)


def make_discipline(name: str, buffer_bytes: int, rng: RandomSource, params: dict | None = None) -> Discipline:
    """Build a discipline by name. ``params`` maps discipline name to its params object."""
    params = params or {}
    if name == "droptail":
        return DropTail(buffer_bytes)
    if name == "red":
        return Red(buffer_bytes, rng, params.get("red"))
    if name == "rem":
        return Rem(buffer_bytes, rng, params.get("rem"))
    if name == "sfq":
        return Sfq(buffer_bytes, rng, params.get("sfq"))
    raise ValueError(f"unknown discipline {name!r}; choose one of {', '.join(DISCIPLINES)}")
