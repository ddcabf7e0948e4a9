import io
import random
from itertools import groupby

import pytest

from aqmlab.metrics import (
    MetricsCollector,
    MetricsReport,
    QueueMeter,
    TraceInconsistency,
    bottleneck_counts,
    comparison_rows,
    compute_delays,
    compute_loss_ratio,
    compute_queue_length_series,
    compute_throughput_series,
    compute_utilization,
    rank_algorithms,
)
from aqmlab.scenario import bottleneck_pair, run_scenario
from aqmlab.config import ScenarioConfig
from aqmlab.trace import FLAGS, TraceRecord, stream_trace

from conftest import SAMPLE_TRACE_LINES, Recorder, traced_run


def rec(event, t, frm, to, kind="tcp", size=2000, pid=0, src="0.0", dst="3.0", seq=0, fid=1):
    return TraceRecord(event, t, frm, to, kind, size, FLAGS, fid, src, dst, seq, pid)


# --- loss and utilization


@pytest.mark.parametrize("sent, lost, pct", [(37157, 151, 0.4064), (42554, 56, 0.1316), (49117, 66, 0.1344)])
def test_loss_ratio_published_rows(sent, lost, pct):
    assert round(compute_loss_ratio(sent, lost), 4) == pct


def test_loss_ratio_edges():
    assert compute_loss_ratio(1234, 0) == 0.0
    assert compute_loss_ratio(0, 0) == 0.0
    with pytest.raises(TraceInconsistency):
        compute_loss_ratio(5, 6)


@pytest.mark.parametrize("sent, pct, tol", [(49117, 78.58, 0.01), (37157, 59.45, 0.005), (42554, 68.08, 0.01)])
def test_utilization_published_rows(sent, pct, tol):
    assert compute_utilization(sent, 2000, 10e6, 100) == pytest.approx(pct, abs=tol)


def test_utilization_formula_and_zero():
    assert compute_utilization(49117, 2000, 10e6, 100) == pytest.approx(78.5872, abs=1e-9)
    assert compute_utilization(0, 2000, 10e6, 100) == 0.0


# --- throughput


def test_throughput_empty():
    series, hi, lo = compute_throughput_series([], sinks=[3], window_s=1.0, duration_s=5)
    assert series == [(float(i), 0.0) for i in range(5)]
    assert (hi, lo) == (0.0, 0.0)
    assert compute_throughput_series([], sinks=[3])[1] == 0.0


def test_throughput_one_receipt():
    records = [rec("r", 0.4, 2, 3, size=1000)]
    series, hi, _ = compute_throughput_series(records, sinks=[3], window_s=1.0, duration_s=2)
    assert series[0] == (0.0, pytest.approx(0.008, abs=1e-12))
    assert series[1] == (1.0, 0.0)
    assert hi == pytest.approx(0.008)


def test_throughput_ignores_non_sink_receipts():
    records = [rec("r", 0.4, 1, 2, size=1000), rec("r", 0.5, 2, 3, size=500)]
    series, _, _ = compute_throughput_series(records, sinks=[3], window_s=0.5)
    assert series == [(0.0, 0.0), (0.5, pytest.approx(8 * 500 / 0.5 / 1e6))]


# --- delay


def test_delay_three_packet_oracle():
    # packet 1: sent 0.100 at node 0, received at node 3 at 0.1625 -> 62.5 ms
    # packet 2: sent 0.110, dropped at the 1->2 queue -> no sample
    # packet 3 (ack from node 3 back to 0): sent 0.200, received at 0.2601 -> 60.1 ms
    records = [
        rec("+", 0.100, 0, 1, pid=1), rec("-", 0.100, 0, 1, pid=1),
        rec("+", 0.110, 0, 1, pid=2), rec("-", 0.110, 0, 1, pid=2),
        rec("r", 0.1102, 0, 1, pid=1), rec("+", 0.1102, 1, 2, pid=1),
        rec("r", 0.1202, 0, 1, pid=2), rec("+", 0.1202, 1, 2, pid=2), rec("d", 0.1202, 1, 2, pid=2),
        rec("-", 0.1202, 1, 2, pid=1),
        rec("r", 0.1500, 1, 2, pid=1), rec("+", 0.1500, 2, 3, pid=1), rec("-", 0.1500, 2, 3, pid=1),
        rec("r", 0.1625, 2, 3, pid=1),
        rec("+", 0.200, 3, 2, kind="ack", size=40, pid=3, src="3.0", dst="0.0"),
        rec("r", 0.2601, 1, 0, kind="ack", size=40, pid=3, src="3.0", dst="0.0"),
    ]
    meter = compute_delays(records)
    got = {s.pkt_id: s.delay_s for s in meter.samples}
    assert got.keys() == {1, 3}
    assert got[1] == pytest.approx(0.0625, abs=1e-12)
    assert got[3] == pytest.approx(0.0601, abs=1e-12)
    count, lo, hi, _ = meter.summary()
    assert (count, lo, hi) == (2, pytest.approx(0.0601), pytest.approx(0.0625))
    assert meter.summary(["tcp"])[0] == 1


def test_unmatched_receive_is_an_error():
    with pytest.raises(TraceInconsistency):
        compute_delays([rec("r", 1.0, 2, 3, pid=9)])


def test_delay_first_enqueue_counts_not_retries_at_later_hops():
    records = [rec("+", 0.0, 0, 1, pid=1), rec("+", 0.5, 1, 2, pid=1), rec("r", 1.0, 2, 3, pid=1)]
    assert compute_delays(records).samples[0].delay_s == 1.0


# --- queue length


def test_queue_enqueue_dequeue():
    series, hi, lo = compute_queue_length_series(
        [rec("+", 1.0, 5, 6, pid=1), rec("-", 2.0, 5, 6, pid=1)], 5, 6)
    assert series == [(0.0, 0), (1.0, 1), (2.0, 0)]
    assert (hi, lo) == (1, 0)


def test_queue_enqueue_drop():
    series, _, _ = compute_queue_length_series(
        [rec("+", 1.0, 5, 6, pid=1), rec("d", 2.0, 5, 6, pid=1)], 5, 6)
    assert series == [(0.0, 0), (1.0, 1), (2.0, 0)]


def test_queue_lone_drop_does_not_count():
    meter = QueueMeter(5, 6)
    for r in [rec("+", 1.0, 5, 6, pid=1), rec("d", 1.5, 5, 6, pid=2)]:
        meter.feed(r)
    assert meter.series() == [(0.0, 0), (1.0, 1)]
    assert meter.unmatched_drops == 1


def test_queue_same_instant_collapses():
    records = [rec("+", 1.0, 5, 6, pid=1), rec("-", 1.0, 5, 6, pid=1),
               rec("+", 2.0, 5, 6, pid=2), rec("+", 2.0, 5, 6, pid=3), rec("d", 2.0, 5, 6, pid=3)]
    series, hi, _ = compute_queue_length_series(records, 5, 6)
    assert series == [(0.0, 0), (2.0, 1)]
    assert hi == 1


def test_queue_negative_is_an_error():
    with pytest.raises(TraceInconsistency):
        compute_queue_length_series([rec("-", 1.0, 5, 6, pid=1)], 5, 6)


def test_queue_time_weighted_mean():
    meter = QueueMeter(5, 6)
    for r in [rec("+", 1.0, 5, 6, pid=1), rec("+", 2.0, 5, 6, pid=2), rec("-", 3.0, 5, 6, pid=1)]:
        meter.feed(r)
    # 0 on [0,1), 1 on [1,2), 2 on [2,3), 1 on [3,4]
    assert meter.time_weighted_mean(4.0) == pytest.approx(1.0)


def test_sample_trace_analysis():
    collector = MetricsCollector((2, 3), sinks=[3], window_s=1.0)
    collector.feed_all(stream_trace(SAMPLE_TRACE_LINES))
    report = collector.report("sample", 2.0, 1000, 10e6)
    assert report.drop_events == 1
    assert (report.sent_packets, report.lost_packets) == (1, 1)
    assert report.loss_ratio_pct == 100.0


# --- against the simulator


def test_data_queue_bounded_by_two_packets(any_aqm):
    result, _ = traced_run(any_aqm)
    assert (result.report.queue_max, result.report.queue_min) == (2, 0)


def test_queue_conservation_every_queue(any_aqm):
    result, records = traced_run(any_aqm)
    for (a, b), link in result.dumbbell.net.links.items():
        meter = QueueMeter(a, b)
        for r in records:
            meter.feed(r)
        assert meter.unmatched_drops == 0
        assert meter.enqueues == meter.dequeues + meter.matched_drops + link.queue.backlog_packets
        assert meter.value == link.queue.backlog_packets


def test_queue_series_matches_internal_backlog(any_aqm):
    config = ScenarioConfig(aqm=any_aqm, duration_s=10.0)
    samples = {}
    recorder = Recorder()

    from aqmlab.network import build_dumbbell
    from aqmlab.engine import Simulator

    sim = Simulator(config.seed)
    db = build_dumbbell(config, sim, [recorder])
    db.bottleneck.monitor = lambda t, pkts, _bytes: samples.__setitem__(round(t, 6), pkts)
    sim.run(config.duration_s)
    series, _, _ = compute_queue_length_series(recorder.records, *bottleneck_pair(5))
    for t, value in series[1:]:
        assert samples[t] == value
    # and between change points the internal value never differs from the step function
    times = [t for t, _ in series]
    import bisect
    for t, pkts in samples.items():
        assert series[bisect.bisect_right(times, t) - 1][1] == pkts


def test_counts_invariant_under_same_time_reordering():
    _, records = traced_run("red")
    shuffled = []
    rng = random.Random(3)
    for _, group in groupby(records, key=lambda r: r.time):
        group = list(group)
        rng.shuffle(group)
        shuffled.extend(group)
    assert shuffled != records
    pair = bottleneck_pair(5)
    assert bottleneck_counts(shuffled, pair) == bottleneck_counts(records, pair)
    sent, lost = bottleneck_counts(shuffled, pair)
    report = traced_run("red")[0].report
    assert compute_utilization(sent, 2000, 10e6, 20.0) == report.utilization_pct
    assert compute_loss_ratio(sent, lost) == report.loss_ratio_pct


def test_report_csv_round_trip():
    report = traced_run("rem")[0].report
    buf = io.StringIO()
    report.write_csv(buf)
    back = MetricsReport.read_csv(io.StringIO(buf.getvalue()))
    again = io.StringIO()
    back.write_csv(again)
    assert again.getvalue() == buf.getvalue()
    assert back.sent_packets == report.sent_packets
    assert back.delay_max_s == pytest.approx(report.delay_max_s, abs=1e-9)


# --- ranking


def published_reports():
    def mk(label, tmax, dmax, sent, lost):
        return MetricsReport(label=label, queue_max=2, queue_min=0, throughput_max=tmax,
                             delay_max_s=dmax / 1e3, delay_min_s=0.06003, sent_packets=sent,
                             lost_packets=lost, loss_ratio_pct=compute_loss_ratio(sent, lost),
                             duration_s=100, packet_size_bytes=2000)
    return {
        "RED": mk("RED", 5.53, 67.25, 37157, 151),
        "SFQ": mk("SFQ", 6.64, 90.01, 42554, 56),
        "REM": mk("REM", 7.51, 92.96, 49117, 66),
    }


PUBLISHED_GRADES = {
    "RED": {"delay": "A", "queue_length": "A", "throughput": "C", "loss_rate": "C"},
    "SFQ": {"delay": "B", "queue_length": "B", "throughput": "B", "loss_rate": "A"},
    "REM": {"delay": "C", "queue_length": "C", "throughput": "A", "loss_rate": "B"},
}


def test_ranking_reproduces_published_grades():
    assert rank_algorithms(published_reports()) == PUBLISHED_GRADES


def test_ranking_order_independent():
    reps = published_reports()
    reversed_reps = dict(reversed(list(reps.items())))
    assert rank_algorithms(reversed_reps) == PUBLISHED_GRADES


def test_ranking_ties_share_grade():
    rep = published_reports()["SFQ"]
    ranking = rank_algorithms({"x": rep, "y": rep})
    assert ranking["x"] == ranking["y"] == {m: "A" for m in PUBLISHED_GRADES["RED"]}


def test_ranking_simple_loss_triple():
    reps = {n: MetricsReport(label=n, loss_ratio_pct=v) for n, v in (("p", 1.0), ("q", 2.0), ("r", 3.0))}
    assert [rank_algorithms(reps)[n]["loss_rate"] for n in "pqr"] == ["A", "B", "C"]


def test_ranking_needs_two():
    with pytest.raises(ValueError):
        rank_algorithms({"only": MetricsReport()})


def test_comparison_matrix_shape():
    rows = comparison_rows(published_reports())
    assert rows[0] == ("metric", "stat", "RED", "SFQ", "REM")
    assert ("avg_loss_ratio_pct", "", 0.4064, 0.1316, 0.1344) in rows
