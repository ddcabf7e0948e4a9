"""Loss, throughput, delay, queue length and utilization from trace records.

Everything here consumes :class:`~aqmlab.trace.TraceRecord` streams, so the
same code serves a trace file on disk and records fed live by a running
simulation.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from aqmlab.trace import TraceRecord

DATA_KINDS = frozenset(("tcp", "cbr"))
METRICS = ("delay", "queue_length", "throughput", "loss_rate")


class TraceInconsistency(ValueError):
    pass


def compute_loss_ratio(sent: int, lost: int) -> float:
    if lost < 0 or sent < 0:
        raise ValueError("counts must be nonnegative")
    if lost > sent:
        raise TraceInconsistency(f"lost ({lost}) exceeds sent ({sent})")
    if sent == 0:
        return 0.0
    return 100.0 * lost / sent


def compute_utilization(sent_packets: int, packet_size_bytes: int, link_rate_bps: float,
                        duration_s: float) -> float:
    if link_rate_bps <= 0 or duration_s <= 0:
        raise ValueError("link rate and duration must be positive")
    return 100.0 * sent_packets * packet_size_bytes * 8 / (link_rate_bps * duration_s)


def bottleneck_counts(records: Iterable[TraceRecord], bottleneck: tuple[int, int]) -> tuple[int, int]:
    """(sent, lost): data packets enqueued at and dropped by the bottleneck queue."""
    sent = lost = 0
    for rec in records:
        if (rec.from_node, rec.to_node) == bottleneck and rec.pkt_type in DATA_KINDS:
            if rec.event == "+":
                sent += 1
            elif rec.event == "d":
                lost += 1
    return sent, lost


# --- accumulators -----------------------------------------------------------


class ThroughputMeter:
    """Bytes received at the sink nodes, binned into fixed windows."""

    def __init__(self, sinks: Iterable[int], window_s: float = 1.0):
        if window_s <= 0:
            raise ValueError("window_s must be positive")
        self.sinks = frozenset(sinks)
        self.window_s = window_s
        self.bins: dict[int, int] = {}
        self.total_bytes = 0
        self.last_time = 0.0

    def feed(self, rec: TraceRecord) -> None:
        if rec.event == "r" and rec.to_node in self.sinks:
            idx = int(rec.time // self.window_s)
            self.bins[idx] = self.bins.get(idx, 0) + rec.pkt_size
            self.total_bytes += rec.pkt_size
        if rec.time > self.last_time:
            self.last_time = rec.time

    def series(self, duration_s: float | None = None) -> list[tuple[float, float]]:
        end = duration_s if duration_s is not None else self.last_time
        n = math.ceil(end / self.window_s - 1e-9) if end > 0 else 0
        if self.bins:
            n = max(n, max(self.bins) + 1)
        w = self.window_s
        return [(i * w, 8 * self.bins.get(i, 0) / w / 1e6) for i in range(n)]


@dataclass
class DelaySample:
    pkt_id: int
    kind: str
    sent_at: float
    delay_s: float


class DelayMeter:
    """First enqueue at the source node to final receipt at the destination node."""

    def __init__(self, keep_samples: bool = True):
        self.keep_samples = keep_samples
        self.samples: list[DelaySample] = []
        self._start: dict[int, float] = {}
        self.stats: dict[str, list[float]] = {}  # kind -> [count, sum, min, max]
        self.data_bits = 0
        self.data_delay_sum = 0.0

    def feed(self, rec: TraceRecord) -> None:
        ev = rec.event
        if ev == "+":
            pid = rec.pkt_id
            if pid not in self._start and rec.from_node == rec.src_node:
                self._start[pid] = rec.time
        elif ev == "r":
            if rec.to_node != rec.dst_node:
                return
            try:
                start = self._start.pop(rec.pkt_id)
            except KeyError:
                raise TraceInconsistency(
                    f"packet {rec.pkt_id} received at {rec.time} without a send record"
                ) from None
            self._add(rec, start, rec.time - start)
        elif ev == "d":
            self._start.pop(rec.pkt_id, None)

    def _add(self, rec: TraceRecord, start: float, delay: float) -> None:
        kind = rec.pkt_type
        if self.keep_samples:
            self.samples.append(DelaySample(rec.pkt_id, kind, start, delay))
        st = self.stats.get(kind)
        if st is None:
            self.stats[kind] = [1, delay, delay, delay]
        else:
            st[0] += 1
            st[1] += delay
            if delay < st[2]:
                st[2] = delay
            if delay > st[3]:
                st[3] = delay
        if kind in DATA_KINDS:
            self.data_bits += 8 * rec.pkt_size
            self.data_delay_sum += delay

    def summary(self, kinds: Iterable[str] | None = None) -> tuple[int, float, float, float]:
        """(count, min, max, mean) over the given kinds (all kinds by default)."""
        rows = [v for k, v in self.stats.items() if kinds is None or k in kinds]
        count = sum(r[0] for r in rows)
        if count == 0:
            return 0, 0.0, 0.0, 0.0
        return (count, min(r[2] for r in rows), max(r[3] for r in rows),
                sum(r[1] for r in rows) / count)


class QueueMeter:
    """Backlog of one queue reconstructed from its '+', '-' and 'd' records.

    Records sharing a timestamp are applied together and only the resulting
    value is kept, so a packet admitted and dropped (or admitted and sent
    straight to the wire) in the same instant does not show up as backlog.
    """

    def __init__(self, from_node: int, to_node: int, kinds: Iterable[str] | None = None):
        self.key = (from_node, to_node)
        self.kinds = frozenset(kinds) if kinds is not None else None
        self.value = 0
        self._queued: set[int] = set()
        self._pending_time: float | None = None
        self.points: list[tuple[float, int]] = [(0.0, 0)]
        self.enqueues = 0
        self.dequeues = 0
        self.matched_drops = 0
        self.unmatched_drops = 0

    def feed(self, rec: TraceRecord) -> None:
        if (rec.from_node, rec.to_node) != self.key:
            return
        if self.kinds is not None and rec.pkt_type not in self.kinds:
            return
        ev = rec.event
        if ev == "r":
            return
        if self._pending_time is not None and rec.time != self._pending_time:
            self._commit()
        self._pending_time = rec.time
        if ev == "+":
            self._queued.add(rec.pkt_id)
            self.value += 1
            self.enqueues += 1
        elif ev == "-":
            self._queued.discard(rec.pkt_id)
            self.value -= 1
            self.dequeues += 1
            if self.value < 0:
                raise TraceInconsistency(
                    f"queue {self.key} backlog negative at t={rec.time} (packet {rec.pkt_id})")
        elif ev == "d":
            if rec.pkt_id in self._queued:
                self._queued.discard(rec.pkt_id)
                self.value -= 1
                self.matched_drops += 1
            else:
                self.unmatched_drops += 1

    def _commit(self) -> None:
        if self._pending_time is None:
            return
        if self.value != self.points[-1][1]:
            if self._pending_time == self.points[-1][0]:
                self.points[-1] = (self._pending_time, self.value)
            else:
                self.points.append((self._pending_time, self.value))
        self._pending_time = None

    def series(self) -> list[tuple[float, int]]:
        self._commit()
        return list(self.points)

    def time_weighted_mean(self, end: float) -> float:
        pts = self.series()
        if end <= 0:
            return float(pts[-1][1])
        area = 0.0
        for (t0, v), (t1, _) in zip(pts, pts[1:] + [(end, 0)]):
            t1 = min(t1, end)
            if t1 > t0:
                area += v * (t1 - t0)
        return area / end


def compute_throughput_series(records: Iterable[TraceRecord], sinks: Iterable[int],
                              window_s: float = 1.0, duration_s: float | None = None):
    """Per-window receive rate in Mb/s at ``sinks``; returns (series, max, min)."""
    meter = ThroughputMeter(sinks, window_s)
    for rec in records:
        meter.feed(rec)
    series = meter.series(duration_s)
    values = [v for _, v in series] or [0.0]
    return series, max(values), min(values)


def compute_delays(records: Iterable[TraceRecord]) -> DelayMeter:
    meter = DelayMeter()
    for rec in records:
        meter.feed(rec)
    return meter


def compute_queue_length_series(records: Iterable[TraceRecord], from_node: int, to_node: int,
                                kinds: Iterable[str] | None = None):
    """Backlog change points for one queue; returns (series, max, min)."""
    meter = QueueMeter(from_node, to_node, kinds)
    for rec in records:
        meter.feed(rec)
    series = meter.series()
    values = [v for _, v in series]
    return series, max(values), min(values)


# --- report -----------------------------------------------------------------


@dataclass
class MetricsReport:
    label: str = ""
    duration_s: float = 0.0
    packet_size_bytes: int = 0
    link_rate_bps: float = 0.0
    sent_packets: int = 0
    lost_packets: int = 0
    drop_events: int = 0
    loss_ratio_pct: float = 0.0
    utilization_pct: float = 0.0
    throughput_min: float = 0.0
    throughput_max: float = 0.0
    throughput_mean: float = 0.0
    delay_weighted_throughput_mbps: float = 0.0
    delay_min_s: float = 0.0
    delay_max_s: float = 0.0
    delay_mean_s: float = 0.0
    delay_by_kind: dict = field(default_factory=dict)  # kind -> (count, min, max, mean)
    queue_min: int = 0
    queue_max: int = 0
    queue_mean: float | None = None
    throughput_series: list = field(default_factory=list)
    delay_samples: list = field(default_factory=list)
    queue_series: list = field(default_factory=list)

    def rows(self) -> list[tuple[str, object, object, object]]:
        """(name, min, max, value) rows; delays in milliseconds."""
        ms = 1e3
        rows: list[tuple[str, object, object, object]] = [
            ("label", "", "", self.label),
            ("duration_s", "", "", self.duration_s),
            ("packet_size_bytes", "", "", self.packet_size_bytes),
            ("link_rate_mbps", "", "", self.link_rate_bps / 1e6),
            ("queue_length_pkts", self.queue_min, self.queue_max,
             "" if self.queue_mean is None else round(self.queue_mean, 6)),
            ("throughput_mbps", round(self.throughput_min, 6), round(self.throughput_max, 6),
             round(self.throughput_mean, 6)),
            ("delay_ms", round(self.delay_min_s * ms, 6), round(self.delay_max_s * ms, 6),
             round(self.delay_mean_s * ms, 6)),
        ]
        for kind in sorted(self.delay_by_kind):
            count, lo, hi, mean = self.delay_by_kind[kind]
            rows.append((f"delay_{kind}_ms", round(lo * ms, 6), round(hi * ms, 6), round(mean * ms, 6)))
        rows += [
            ("sent_packets", "", "", self.sent_packets),
            ("lost_packets", "", "", self.lost_packets),
            ("drop_events", "", "", self.drop_events),
            ("loss_ratio_pct", "", "", round(self.loss_ratio_pct, 6)),
            ("utilization_pct", "", "", round(self.utilization_pct, 6)),
            ("delay_weighted_throughput_mbps", "", "", round(self.delay_weighted_throughput_mbps, 6)),
        ]
        return rows

    def write_csv(self, fh) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("metric", "min", "max", "value"))
        writer.writerows(self.rows())

    def summary_text(self) -> str:
        ms = 1e3
        q_mean = "n/a" if self.queue_mean is None else f"{self.queue_mean:.4f}"
        lines = [
            f"Report: {self.label or '(unlabelled)'}",
            f"  Queue length      max {self.queue_max}   min {self.queue_min}   mean {q_mean}",
            f"  Throughput (Mbps) max {self.throughput_max:.2f}   min {self.throughput_min:.2f}",
            f"  Delay (ms)        max {self.delay_max_s * ms:.2f}   min {self.delay_min_s * ms:.2f}",
            f"  Send packets      {self.sent_packets}",
            f"  Lost packets      {self.lost_packets}",
            f"  Avg loss ratio    {self.loss_ratio_pct:.4f} %",
            f"  Utilization       {self.utilization_pct:.2f} %",
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def read_csv(cls, fh) -> "MetricsReport":
        rep = cls()
        reader = csv.DictReader(fh)
        ms = 1e-3

        def num(text: str) -> float:
            return float(text) if text != "" else 0.0

        for row in reader:
            name, lo, hi, val = row["metric"], row["min"], row["max"], row["value"]
            if name == "label":
                rep.label = val
            elif name == "duration_s":
                rep.duration_s = num(val)
            elif name == "packet_size_bytes":
                rep.packet_size_bytes = int(num(val))
            elif name == "link_rate_mbps":
                rep.link_rate_bps = num(val) * 1e6
            elif name == "queue_length_pkts":
                rep.queue_min, rep.queue_max = int(num(lo)), int(num(hi))
                rep.queue_mean = float(val) if val != "" else None
            elif name == "throughput_mbps":
                rep.throughput_min, rep.throughput_max, rep.throughput_mean = num(lo), num(hi), num(val)
            elif name == "delay_ms":
                rep.delay_min_s, rep.delay_max_s, rep.delay_mean_s = num(lo) * ms, num(hi) * ms, num(val) * ms
            elif name.startswith("delay_") and name.endswith("_ms"):
                kind = name[len("delay_"):-len("_ms")]
                rep.delay_by_kind[kind] = (0, num(lo) * ms, num(hi) * ms, num(val) * ms)
            elif name == "sent_packets":
                rep.sent_packets = int(num(val))
            elif name == "lost_packets":
                rep.lost_packets = int(num(val))
            elif name == "drop_events":
                rep.drop_events = int(num(val))
            elif name == "loss_ratio_pct":
                rep.loss_ratio_pct = num(val)
            elif name == "utilization_pct":
                rep.utilization_pct = num(val)
            elif name == "delay_weighted_throughput_mbps":
                rep.delay_weighted_throughput_mbps = num(val)
            else:
                raise ValueError(f"unknown report row {name!r}")
        return rep


class MetricsCollector:
    """Single-pass computation of every report metric.

    Callable, so it can be attached directly as a simulation trace sink.
    """

    def __init__(self, bottleneck: tuple[int, int], sinks: Iterable[int], window_s: float = 1.0,
                 keep_samples: bool = True):
        self.bottleneck = bottleneck
        self.throughput = ThroughputMeter(sinks, window_s)
        self.delays = DelayMeter(keep_samples)
        self.queue = QueueMeter(*bottleneck, kinds=DATA_KINDS)
        self.sent = 0
        self.lost = 0
        self.records = 0
        self.drop_events = 0

    def feed(self, rec: TraceRecord) -> None:
        self.records += 1
        if rec.event == "d":
            self.drop_events += 1
        if (rec.from_node, rec.to_node) == self.bottleneck and rec.pkt_type in DATA_KINDS:
            if rec.event == "+":
                self.sent += 1
            elif rec.event == "d":
                self.lost += 1
        self.throughput.feed(rec)
        self.delays.feed(rec)
        self.queue.feed(rec)

    __call__ = feed

    def feed_all(self, records: Iterable[TraceRecord]) -> "MetricsCollector":
        for rec in records:
            self.feed(rec)
        return self

    def report(self, label: str, duration_s: float, packet_size_bytes: int,
               link_rate_bps: float) -> MetricsReport:
        series = self.throughput.series(duration_s)
        tput = [v for _, v in series] or [0.0]
        _, dmin, dmax, dmean = self.delays.summary()
        qseries = self.queue.series()
        qvalues = [v for _, v in qseries]
        d = self.delays
        return MetricsReport(
            label=label,
            duration_s=duration_s,
            packet_size_bytes=packet_size_bytes,
            link_rate_bps=link_rate_bps,
            sent_packets=self.sent,
            lost_packets=self.lost,
            drop_events=self.drop_events,
            loss_ratio_pct=compute_loss_ratio(self.sent, self.lost),
            utilization_pct=compute_utilization(self.sent, packet_size_bytes, link_rate_bps, duration_s),
            throughput_min=min(tput),
            throughput_max=max(tput),
            throughput_mean=sum(tput) / len(tput),
            delay_weighted_throughput_mbps=(d.data_bits / d.data_delay_sum / 1e6) if d.data_delay_sum > 0 else 0.0,
            delay_min_s=dmin,
            delay_max_s=dmax,
            delay_mean_s=dmean,
            delay_by_kind={k: d.summary([k]) for k in sorted(d.stats)},
            queue_min=min(qvalues),
            queue_max=max(qvalues),
            queue_mean=self.queue.time_weighted_mean(duration_s),
            throughput_series=series,
            delay_samples=d.samples,
            queue_series=qseries,
        )


# --- ranking ----------------------------------------------------------------


def _grades(keys: Mapping[str, tuple]) -> dict[str, str]:
    """Competition ranking on ascending keys; equal keys share the better grade."""
    ordered = sorted(keys.values())
    return {name: chr(ord("A") + ordered.index(key)) for name, key in keys.items()}


def rank_algorithms(reports: Mapping[str, MetricsReport]) -> dict[str, dict[str, str]]:
    """Grade each named report per metric, A being best.

    Queue length prefers the smaller time-weighted mean, then the smaller
    maximum, then the smaller maximum delay (queueing delay mirrors
    occupancy). Means are ignored unless every report carries one.
    """
    if len(reports) < 2:
        raise ValueError("ranking needs at least two reports")
    use_mean = all(r.queue_mean is not None for r in reports.values())
    per_metric = {
        "delay": {n: (r.delay_max_s,) for n, r in reports.items()},
        "queue_length": {
            n: ((r.queue_mean if use_mean else 0.0), r.queue_max, r.delay_max_s)
            for n, r in reports.items()
        },
        "throughput": {n: (-r.throughput_max,) for n, r in reports.items()},
        "loss_rate": {n: (r.loss_ratio_pct,) for n, r in reports.items()},
    }
    graded = {metric: _grades(keys) for metric, keys in per_metric.items()}
    return {name: {metric: graded[metric][name] for metric in METRICS} for name in reports}


def write_ranking_csv(ranking: Mapping[str, Mapping[str, str]], fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(("algorithm",) + METRICS)
    for name, grades in ranking.items():
        writer.writerow((name,) + tuple(grades[m] for m in METRICS))


def comparison_rows(reports: Mapping[str, MetricsReport]) -> list[tuple]:
    """Side-by-side matrix: (metric, statistic, value per report...)."""
    ms = 1e3
    names = list(reports)
    get = reports.__getitem__

    def row(metric: str, stat: str, fn) -> tuple:
        return (metric, stat) + tuple(fn(get(n)) for n in names)

    return [
        ("metric", "stat") + tuple(names),
        row("queue_length", "max", lambda r: r.queue_max),
        row("queue_length", "min", lambda r: r.queue_min),
        row("throughput_mbps", "max", lambda r: round(r.throughput_max, 2)),
        row("throughput_mbps", "min", lambda r: round(r.throughput_min, 2)),
        row("delay_ms", "max", lambda r: round(r.delay_max_s * ms, 2)),
        row("delay_ms", "min", lambda r: round(r.delay_min_s * ms, 2)),
        row("send_packets", "", lambda r: r.sent_packets),
        row("lost_packets", "", lambda r: r.lost_packets),
        row("avg_loss_ratio_pct", "", lambda r: round(r.loss_ratio_pct, 4)),
        row("utilization_pct", "", lambda r: round(r.utilization_pct, 2)),
    ]
