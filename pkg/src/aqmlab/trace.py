"""Reading and writing the 12-field ns-2 style ASCII trace.

A line looks like::

    r 1.3556 3 2 ack 40 ------- 1 3.0 0.0 15 201

event, time, from node, to node, packet type, size, flags, flow id,
source and destination address (``node.port``), sequence number, packet id.
"""

from __future__ import annotations

import re
from typing import IO, Iterable, Iterator, NamedTuple

EVENT_CODES = ("+", "-", "r", "d")
PACKET_TYPES = ("tcp", "ack", "cbr")
FLAGS = "-------"

_FLAGS_RE = re.compile(r"^-{1,7}$")
_ADDR_RE = re.compile(r"^-?\d+\.-?\d+$")


class TraceParseError(ValueError):
    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class TraceRecord(NamedTuple):
    event: str
    time: float
    from_node: int
    to_node: int
    pkt_type: str
    pkt_size: int
    flags: str
    fid: int
    src_addr: str
    dst_addr: str
    seq_num: int
    pkt_id: int

    @property
    def src_node(self) -> int:
        return int(self.src_addr.partition(".")[0])

    @property
    def dst_node(self) -> int:
        return int(self.dst_addr.partition(".")[0])


def format_time(t: float) -> str:
    text = f"{t:.6f}".rstrip("0").rstrip(".")
    return text if text not in ("", "-0") else "0"


def format_record(record: TraceRecord) -> str:
    """One trace line, without the trailing newline."""
    return (
        f"{record.event} {format_time(record.time)} {record.from_node} {record.to_node} "
        f"{record.pkt_type} {record.pkt_size} {record.flags} {record.fid} "
        f"{record.src_addr} {record.dst_addr} {record.seq_num} {record.pkt_id}"
    )


def normalize_flags(record: TraceRecord) -> TraceRecord:
    return record._replace(flags=FLAGS)


def parse_record(line: str, lineno: int | None = None) -> TraceRecord:
    fields = line.split()
    if len(fields) != 12:
        raise TraceParseError(f"expected 12 fields, got {len(fields)}", lineno)
    event, t, frm, to, ptype, size, flags, fid, src, dst, seq, pid = fields
    if event not in EVENT_CODES:
        raise TraceParseError(f"unknown event code {event!r}", lineno)
    if not _FLAGS_RE.match(flags):
        raise TraceParseError(f"malformed flags field {flags!r}", lineno)
    for addr in (src, dst):
        if not _ADDR_RE.match(addr):
            raise TraceParseError(f"malformed address {addr!r}", lineno)
    try:
        return TraceRecord(
            event, float(t), int(frm), int(to), ptype, int(size), flags,
            int(fid), src, dst, int(seq), int(pid),
        )
    except ValueError as exc:
        raise TraceParseError(f"non-numeric field: {exc}", lineno) from None


def stream_trace(lines: Iterable[str], check_order: bool = False) -> Iterator[TraceRecord]:
    """Lazily parse ``lines``; blank lines are skipped."""
    last = float("-inf")
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        record = parse_record(line, lineno)
        if check_order:
            if record.time < last:
                raise TraceParseError(
                    f"time {record.time} goes backwards (previous {last})", lineno
                )
            last = record.time
        yield record


def read_trace(path: str, check_order: bool = False) -> Iterator[TraceRecord]:
    with open(path) as fh:
        yield from stream_trace(fh, check_order=check_order)


class TraceWriter:
    """Sink that writes records as text lines to an open file."""

    def __init__(self, fh: IO[str]):
        self.fh = fh
        self.lines = 0

    def __call__(self, record: TraceRecord) -> None:
        self.fh.write(format_record(record))
        self.fh.write("\n")
        self.lines += 1
