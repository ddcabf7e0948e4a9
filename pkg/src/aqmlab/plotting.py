"""PNG figures for reports and sweeps (loss vs. bandwidth, throughput, delay, queue length)."""

from __future__ import annotations

import os
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from aqmlab.metrics import MetricsReport  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 3.6),
    "figure.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 9,
    "legend.fontsize": 8,
    "legend.frameon": False,
}


def _save(fig, path: str) -> str:
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def report_figures(report: MetricsReport, outdir: str, prefix: str = "") -> list[str]:
    """Throughput, per-packet delay and queue-length plots; returns the written paths."""
    os.makedirs(outdir, exist_ok=True)
    stem = prefix or report.label or "report"
    written = []
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        if report.throughput_series:
            xs, ys = zip(*report.throughput_series)
            ax.step(xs, ys, where="post", lw=1.0)
        ax.set_xlabel("time (s)")
        ax.set_ylabel("throughput (Mb/s)")
        ax.set_title(f"Throughput: {stem}")
        written.append(_save(fig, os.path.join(outdir, f"{stem}_throughput.png")))

        fig, ax = plt.subplots()
        for kind in sorted({s.kind for s in report.delay_samples}):
            pts = [(s.sent_at, s.delay_s * 1e3) for s in report.delay_samples if s.kind == kind]
            xs, ys = zip(*pts)
            ax.plot(xs, ys, ".", ms=1.5, label=kind)
        if report.delay_samples:
            ax.legend(loc="upper right", markerscale=6)
        ax.set_xlabel("send time (s)")
        ax.set_ylabel("end-to-end delay (ms)")
        ax.set_title(f"Delay: {stem}")
        written.append(_save(fig, os.path.join(outdir, f"{stem}_delay.png")))

        fig, ax = plt.subplots()
        if report.queue_series:
            xs, ys = zip(*report.queue_series)
            end = max(report.duration_s, xs[-1])
            ax.step(list(xs) + [end], list(ys) + [ys[-1]], where="post", lw=0.6)
        ax.set_xlabel("time (s)")
        ax.set_ylabel("queue length (packets)")
        ax.set_title(f"Queue length: {stem}")
        written.append(_save(fig, os.path.join(outdir, f"{stem}_queue.png")))
    return written


def sweep_figure(rows: Sequence[dict], outdir: str, label: str) -> str:
    os.makedirs(outdir, exist_ok=True)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        rates = [r["rate_mbps"] for r in rows]
        ax.plot(rates, [r["loss_rate_pct"] for r in rows], "o-", lw=1.2)
        ax.set_xlabel("bottleneck bandwidth (Mb/s)")
        ax.set_ylabel("loss rate (%)")
        ax.set_title(f"Loss rate vs. bandwidth: {label}")
        return _save(fig, os.path.join(outdir, f"{label}_loss_rate.png"))
