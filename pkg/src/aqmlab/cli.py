"""Command-line front end: ``aqmlab simulate | analyze | sweep | compare | defaults``."""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from aqmlab.aqm import DISCIPLINES
from aqmlab.config import ConfigError, ScenarioConfig, dump_config, load_config
from aqmlab.metrics import (
    MetricsCollector,
    MetricsReport,
    TraceInconsistency,
    comparison_rows,
    rank_algorithms,
    write_ranking_csv,
)
from aqmlab.scenario import bottleneck_pair, run_scenario, sink_node_ids
from aqmlab.trace import TraceParseError, stream_trace

log = logging.getLogger("aqmlab")

DEFAULT_RATES = (5.0, 10.0, 15.0, 20.0, 25.0)
SWEEP_FIELDS = ("rate_mbps", "loss_rate_pct", "utilization_pct", "max_throughput_mbps")


class CliError(Exception):
    pass


def setup_logging() -> None:
    level = os.environ.get("AQMLAB_LOG", "error").upper()
    if level not in ("ERROR", "INFO", "DEBUG"):
        level = "ERROR"
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


def parse_rates(text: str) -> list[float]:
    try:
        rates = [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad rate list {text!r}") from None
    if not rates or any(r <= 0 for r in rates):
        raise argparse.ArgumentTypeError("rates must be a nonempty list of positive numbers")
    return rates


def parse_pair(text: str) -> tuple[int, int]:
    try:
        a, b = text.split(":")
        return int(a), int(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected FROM:TO node numbers, got {text!r}") from None


def _config(args) -> ScenarioConfig:
    config = load_config(args.config)
    overrides = {}
    if getattr(args, "aqm", None):
        overrides["aqm"] = args.aqm
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    return config.with_overrides(**overrides).validate()


def _open_out(path: str | None):
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w", newline=""), True


def sweep_row(rate_mbps: float, report: MetricsReport) -> dict:
    return {
        "rate_mbps": rate_mbps,
        "loss_rate_pct": round(report.loss_ratio_pct, 6),
        "utilization_pct": round(report.utilization_pct, 6),
        "max_throughput_mbps": round(report.throughput_max, 6),
    }


# --- simulate -----------------------------------------------------------------


def cmd_simulate(args) -> int:
    config = _config(args)
    out, close = _open_out(args.out) if args.out else (None, False)
    try:
        result = run_scenario(config, trace_out=out, window_s=args.window_s,
                              keep_samples=bool(args.figures))
    finally:
        if close:
            out.close()
    rep = result.report
    line = (f"aqm={config.aqm} seed={config.seed} sent={rep.sent_packets} lost={rep.lost_packets} "
            f"loss={rep.loss_ratio_pct:.4f}% utilization={rep.utilization_pct:.2f}%")
    print(line, file=sys.stderr if out is sys.stdout else sys.stdout)
    if args.report:
        with open(args.report, "w", newline="") as fh:
            rep.write_csv(fh)
    if args.figures:
        from aqmlab.plotting import report_figures
        report_figures(rep, args.figures)
    return 0


# --- analyze ------------------------------------------------------------------


def analyze_stream(lines, config: ScenarioConfig, bottleneck: tuple[int, int] | None,
                   window_s: float, duration_s: float | None = None,
                   label: str | None = None, keep_samples: bool = False) -> MetricsReport:
    pair = bottleneck or bottleneck_pair(config.flows)
    collector = MetricsCollector(pair, sink_node_ids(config.flows), window_s,
                                 keep_samples=keep_samples)
    collector.feed_all(stream_trace(lines))
    duration = duration_s if duration_s is not None else config.duration_s
    return collector.report(label or config.aqm, duration, config.packet_size_bytes,
                            config.bottleneck_rate_bps)


def cmd_analyze(args) -> int:
    config = _config(args)
    if args.rate_mbps is not None:
        config = config.with_overrides(bottleneck_rate_mbps=args.rate_mbps)
    if args.trace == "-":
        report = analyze_stream(sys.stdin, config, args.bottleneck, args.window_s,
                                args.duration_s, args.label, bool(args.figures))
    else:
        with open(args.trace) as fh:
            report = analyze_stream(fh, config, args.bottleneck, args.window_s,
                                    args.duration_s, args.label, bool(args.figures))
    out, close = _open_out(args.out)
    try:
        report.write_csv(out)
    finally:
        if close:
            out.close()
    summary = report.summary_text()
    if close:
        Path(args.out).with_suffix(".txt").write_text(summary)
    else:
        sys.stderr.write(summary)
    if args.figures:
        from aqmlab.plotting import report_figures
        report_figures(report, args.figures)
    return 0


# --- sweep --------------------------------------------------------------------


def _sweep_point(config: ScenarioConfig, rate: float, window_s: float) -> dict:
    cfg = config.with_overrides(bottleneck_rate_mbps=rate)
    result = run_scenario(cfg, window_s=window_s, keep_samples=False)
    return sweep_row(rate, result.report)


def run_sweep(config: ScenarioConfig, rates: list[float], window_s: float = 1.0,
              jobs: int = 1) -> list[dict]:
    """One run per rate, same seed; rows come back in request order."""
    if not rates or any(r <= 0 for r in rates):
        raise CliError("rates must be a nonempty list of positive numbers")
    if jobs > 1 and len(rates) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_sweep_point, config, r, window_s) for r in rates]
            return [f.result() for f in futures]
    return [_sweep_point(config, r, window_s) for r in rates]


def write_sweep_csv(rows: list[dict], fh) -> None:
    writer = csv.DictWriter(fh, fieldnames=SWEEP_FIELDS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)


def cmd_sweep(args) -> int:
    config = _config(args)
    rates = args.rates or list(DEFAULT_RATES)
    try:
        rows = run_sweep(config, rates, args.window_s, args.jobs)
    except CliError:
        raise
    except Exception as exc:
        raise CliError(f"sweep failed for aqm={config.aqm}: {exc}") from exc
    out, close = _open_out(args.out)
    try:
        write_sweep_csv(rows, out)
    finally:
        if close:
            out.close()
    if args.figures:
        from aqmlab.plotting import sweep_figure
        sweep_figure(rows, args.figures, config.aqm)
    return 0


# --- compare ------------------------------------------------------------------


def load_reports(paths: list[str]) -> dict[str, MetricsReport]:
    reports: dict[str, MetricsReport] = {}
    for path in paths:
        with open(path, newline="") as fh:
            rep = MetricsReport.read_csv(fh)
        name = rep.label or Path(path).stem
        if name in reports:
            name = Path(path).stem
        if name in reports:
            raise CliError(f"duplicate report name {name!r} ({path})")
        reports[name] = rep
    return reports


def fingerprint_warnings(reports: dict[str, MetricsReport]) -> list[str]:
    warnings = []
    for attr in ("duration_s", "packet_size_bytes"):
        values = {name: getattr(r, attr) for name, r in reports.items()}
        if len(set(values.values())) > 1:
            warnings.append(f"reports disagree on {attr}: {values}")
    return warnings


def render_table(rows: list[tuple]) -> str:
    widths = [max(len(str(row[i])) for row in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(str(v).ljust(w) for v, w in zip(row, widths)).rstrip()
                     for row in rows) + "\n"


def cmd_compare(args) -> int:
    if len(args.reports) < 2:
        raise CliError("compare needs at least two reports")
    reports = load_reports(args.reports)
    for warning in fingerprint_warnings(reports):
        log.warning(warning)
        print(f"warning: {warning}", file=sys.stderr)
    matrix = comparison_rows(reports)
    ranking = rank_algorithms(reports)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(matrix)
        ranking_path = args.ranking or str(Path(args.out).with_suffix("")) + "_ranking.csv"
        with open(ranking_path, "w", newline="") as fh:
            write_ranking_csv(ranking, fh)
    elif args.ranking:
        with open(args.ranking, "w", newline="") as fh:
            write_ranking_csv(ranking, fh)
    rank_rows = [("algorithm", "delay", "queue_length", "throughput", "loss_rate")]
    rank_rows += [(n,) + tuple(g.values()) for n, g in ranking.items()]
    sys.stdout.write(render_table(matrix) + "\n" + render_table(rank_rows))
    return 0


def cmd_defaults(args) -> int:
    sys.stdout.write(dump_config(ScenarioConfig()))
    return 0


# --- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aqmlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, aqm=True):
        p.add_argument("--config", metavar="PATH", help="scenario INI file (default: the built-in dumbbell)")
        p.add_argument("--seed", type=int, help="override the scenario seed")
        if aqm:
            p.add_argument("--aqm", choices=DISCIPLINES, help="bottleneck queue discipline")
        p.add_argument("--window-s", type=float, default=1.0, help="throughput window in seconds")

    p = sub.add_parser("simulate", help="run the scenario and write its trace")
    common(p)
    p.add_argument("--out", metavar="PATH", help="trace output ('-' for stdout)")
    p.add_argument("--report", metavar="PATH", help="also write the metrics report CSV")
    p.add_argument("--figures", metavar="DIR", help="write PNG figures into DIR")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="compute metrics from a trace file")
    p.add_argument("trace", help="trace file ('-' for stdin)")
    common(p)
    p.add_argument("--bottleneck", type=parse_pair, metavar="FROM:TO",
                   help="queue to count sent/lost packets on (default R1:R2)")
    p.add_argument("--duration-s", type=float, help="run length for utilization (default: config)")
    p.add_argument("--rate-mbps", type=float, help="bottleneck rate for utilization (default: config)")
    p.add_argument("--label", help="report label (default: the aqm name)")
    p.add_argument("--out", metavar="PATH", help="report CSV (default stdout); a .txt summary goes beside it")
    p.add_argument("--figures", metavar="DIR", help="write PNG figures into DIR")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("sweep", help="loss/utilization across bottleneck bandwidths")
    common(p)
    p.add_argument("--rates", type=parse_rates, metavar="LIST",
                   help="comma-separated Mb/s (default 5,10,15,20,25)")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.add_argument("--out", metavar="PATH", help="sweep CSV (default stdout)")
    p.add_argument("--figures", metavar="DIR", help="write the loss-rate PNG into DIR")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="side-by-side table and A/B/C ranking of reports")
    p.add_argument("reports", nargs="+", help="report CSVs written by analyze/simulate")
    p.add_argument("--out", metavar="PATH", help="comparison matrix CSV")
    p.add_argument("--ranking", metavar="PATH", help="ranking CSV (default: <out>_ranking.csv)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("defaults", help="print the default configuration file")
    p.set_defaults(func=cmd_defaults)
    return parser


def main(argv: list[str] | None = None) -> int:
    setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, CliError, TraceParseError, TraceInconsistency) as exc:
        print(f"aqmlab {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"aqmlab {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
