"""Reading and writing candump-style text captures.

One frame per line::

    (1700000000.123456) can0 123#DEADBEEF00112233

Identifiers and data are hex in either case; ``ID#R`` marks a remote frame.
Blank lines and lines starting with ``#`` are skipped.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .can_frame import CanFrame, FrameError

_LINE = re.compile(
    r"^\((?P<ts>\d+\.\d+)\)\s+(?P<channel>\S+)\s+"
    r"(?P<id>[0-9A-Fa-f]{1,3})#(?P<data>[0-9A-Fa-f]*|[Rr]\d?)$"
)


class LogParseError(ValueError):
    def __init__(self, lineno, message):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True)
class LogRecord:
    lineno: int
    timestamp: float
    channel: str
    frame: CanFrame


def parse_line(line: str, lineno: int = 1) -> LogRecord:
    m = _LINE.match(line.strip())
    if not m:
        raise LogParseError(lineno, f"not a candump line: {line.strip()!r}")
    data = m["data"]
    try:
        if data[:1] in ("R", "r"):
            dlc = int(data[1:]) if len(data) > 1 else 0
            frame = CanFrame(int(m["id"], 16), b"", rtr=1, dlc=dlc)
        else:
            if len(data) % 2:
                raise LogParseError(lineno, "odd number of data hex digits")
            frame = CanFrame(int(m["id"], 16), bytes.fromhex(data))
    except FrameError as exc:
        raise LogParseError(lineno, str(exc)) from exc
    return LogRecord(lineno, float(m["ts"]), m["channel"], frame)


def parse_log(lines) -> list[LogRecord]:
    records = []
    for lineno, line in enumerate(lines, 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        records.append(parse_line(line, lineno))
    return records


def format_line(frame: CanFrame, timestamp: float = 0.0, channel: str = "can0") -> str:
    if frame.rtr:
        body = "R" if frame.dlc == 0 else f"R{frame.dlc}"
    else:
        body = frame.data.hex().upper()
    return f"({timestamp:.6f}) {channel} {frame.identifier:03X}#{body}"
