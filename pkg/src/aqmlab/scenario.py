"""Run the dumbbell scenario end to end."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import IO, Callable

from aqmlab.config import ScenarioConfig
from aqmlab.engine import Simulator
from aqmlab.metrics import MetricsCollector, MetricsReport
from aqmlab.network import Dumbbell, build_dumbbell
from aqmlab.trace import TraceRecord, TraceWriter

log = logging.getLogger(__name__)


@dataclass
class RunResult:
    config: ScenarioConfig
    events: int
    report: MetricsReport | None
    dumbbell: Dumbbell


def bottleneck_pair(flows: int) -> tuple[int, int]:
    """Trace node numbers of R1 and R2."""
    return flows, flows + 1


def sink_node_ids(flows: int) -> list[int]:
    return list(range(flows + 2, 2 * flows + 2))


def run_scenario(config: ScenarioConfig, trace_out: IO[str] | None = None, window_s: float = 1.0,
                 collect: bool = True, keep_samples: bool = True,
                 extra_sinks: list[Callable[[TraceRecord], None]] | None = None) -> RunResult:
    config.validate()
    sinks: list[Callable[[TraceRecord], None]] = []
    if trace_out is not None:
        sinks.append(TraceWriter(trace_out))
    collector = None
    if collect:
        collector = MetricsCollector(bottleneck_pair(config.flows), sink_node_ids(config.flows),
                                     window_s, keep_samples=keep_samples)
        sinks.append(collector)
    sinks.extend(extra_sinks or ())
    sim = Simulator(config.seed)
    dumbbell = build_dumbbell(config, sim, sinks)
    events = sim.run(config.duration_s)
    log.info("aqm=%s rate=%gMbps seed=%d: %d events", config.aqm,
             config.bottleneck_rate_mbps, config.seed, events)
    report = None
    if collector is not None:
        report = collector.report(config.aqm, config.duration_s, config.packet_size_bytes,
                                  config.bottleneck_rate_bps)
    return RunResult(config, events, report, dumbbell)
