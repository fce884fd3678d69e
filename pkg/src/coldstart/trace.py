"""Azure-Functions-style invocation logs: parsing, filtering, merging, resampling.

Day files follow the public 2019 trace layout: ``HashOwner, HashApp,
HashFunction, Trigger`` followed by 1440 per-minute count columns named
``"1"`` .. ``"1440"``. All timestamps are UTC.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import IO, Iterable, Sequence

import numpy as np

MINUTES_PER_DAY = 1440
TRIGGERS = ("http", "timer", "event", "queue", "storage", "orchestration", "others")
ID_COLUMNS = ("HashOwner", "HashApp", "HashFunction", "Trigger")
MINUTE_COLUMNS = tuple(str(i) for i in range(1, MINUTES_PER_DAY + 1))
DEFAULT_START = datetime(2019, 7, 1, tzinfo=timezone.utc)
STEP = {"minute": timedelta(minutes=1), "hour": timedelta(hours=1)}


class TraceError(ValueError):
    pass


class MalformedHeader(TraceError):
    pass


class BadCount(TraceError):
    def __init__(self, row: int, column: str, value: str):
        super().__init__(f"row {row}, column {column!r}: bad count {value!r}")
        self.row = row
        self.column = column
        self.value = value


class DuplicateFunctionInDay(TraceError):
    pass


class LengthNotDivisible(TraceError):
    pass


class TooFewEvents(TraceError):
    pass


class SeriesTooShort(TraceError):
    pass


@dataclass(frozen=True)
class RawTraceRow:
    owner_hash: str
    app_hash: str
    function_hash: str
    trigger: str
    minute_counts: np.ndarray = field(repr=False)

    @property
    def function_id(self) -> str:
        return self.owner_hash + self.app_hash + self.function_hash


@dataclass
class InvocationSeries:
    function_id: str
    granularity: str
    start_time: datetime
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.granularity not in STEP:
            raise ValueError(f"unknown granularity {self.granularity!r}")
        self.values = np.asarray(self.values, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def step(self) -> timedelta:
        return STEP[self.granularity]

    def timestamps(self, n: int | None = None) -> list[datetime]:
        n = len(self.values) if n is None else n
        return [self.start_time + i * self.step for i in range(n)]


@dataclass
class GapSeries:
    """Inter-arrival gaps in minutes between successive invocation minutes."""

    function_id: str
    gaps: np.ndarray
    first_event_time: datetime

    def __post_init__(self):
        self.gaps = np.asarray(self.gaps, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.gaps)

    def event_times(self) -> list[datetime]:
        offsets = np.concatenate([[0], np.cumsum(self.gaps)])
        return [self.first_event_time + timedelta(minutes=int(m)) for m in offsets]

    def event_minutes(self, start_time: datetime) -> np.ndarray:
        """Event positions as minute indices relative to ``start_time``."""
        first = int((self.first_event_time - start_time) // timedelta(minutes=1))
        return first + np.concatenate([[0], np.cumsum(self.gaps)]).astype(np.int64)


# -- parsing -------------------------------------------------------------------


def parse_day_file(stream: IO[bytes] | IO[str] | bytes | str) -> list[RawTraceRow]:
    """Parse one day file into rows. Accepts bytes, text, or a file object."""
    if isinstance(stream, (bytes, bytearray)):
        text = stream.decode("utf-8")
    elif isinstance(stream, str):
        text = stream
    else:
        raw = stream.read()
        text = raw.decode("utf-8") if isinstance(raw, (bytes, bytearray)) else raw
    reader = csv.reader(io.StringIO(text, newline=""))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise MalformedHeader("empty file") from None
    if tuple(header) != ID_COLUMNS + MINUTE_COLUMNS:
        if set(header) != set(ID_COLUMNS + MINUTE_COLUMNS) or len(header) != len(ID_COLUMNS) + MINUTES_PER_DAY:
            raise MalformedHeader(
                f"expected {len(ID_COLUMNS) + MINUTES_PER_DAY} columns "
                "HashOwner,HashApp,HashFunction,Trigger,1..1440"
            )
    pos = {name: i for i, name in enumerate(header)}
    id_pos = [pos[c] for c in ID_COLUMNS]
    minute_pos = [pos[c] for c in MINUTE_COLUMNS]

    rows = []
    for rownum, rec in enumerate(reader, start=1):
        if not rec or (len(rec) == 1 and not rec[0].strip()):
            continue
        if len(rec) != len(header):
            raise BadCount(rownum, "<row>", f"{len(rec)} cells")
        counts = np.empty(MINUTES_PER_DAY, dtype=np.int64)
        for k, p in enumerate(minute_pos):
            cell = rec[p].strip()
            try:
                v = int(cell)
            except ValueError:
                raise BadCount(rownum, MINUTE_COLUMNS[k], cell) from None
            if v < 0:
                raise BadCount(rownum, MINUTE_COLUMNS[k], cell)
            counts[k] = v
        owner, app, func, trigger = (rec[p].strip() for p in id_pos)
        rows.append(RawTraceRow(owner, app, func, trigger.lower(), counts))
    return rows


def filter_http(rows: Iterable[RawTraceRow]) -> list[RawTraceRow]:
    return [r for r in rows if r.trigger == "http"]


def merge_days(
    day_tables: Sequence[Sequence[RawTraceRow]],
    start_time: datetime = DEFAULT_START,
) -> dict[str, InvocationSeries]:
    """Concatenate each function's daily counts; absent days become zeros."""
    n_days = len(day_tables)
    merged: dict[str, np.ndarray] = {}
    for day, rows in enumerate(day_tables):
        seen = set()
        for row in rows:
            fid = row.function_id
            if fid in seen:
                raise DuplicateFunctionInDay(f"{fid} appears twice on day {day + 1}")
            seen.add(fid)
            if fid not in merged:
                merged[fid] = np.zeros(n_days * MINUTES_PER_DAY, dtype=np.int64)
            merged[fid][day * MINUTES_PER_DAY:(day + 1) * MINUTES_PER_DAY] = row.minute_counts
    return {
        fid: InvocationSeries(fid, "minute", start_time, values)
        for fid, values in merged.items()
    }


def resample_to_hour(s: InvocationSeries) -> InvocationSeries:
    if s.granularity != "minute":
        raise TraceError("resample_to_hour expects a minute series")
    if len(s.values) % 60:
        raise LengthNotDivisible(f"length {len(s.values)} is not a multiple of 60")
    hourly = s.values.reshape(-1, 60).sum(axis=1)
    return InvocationSeries(s.function_id, "hour", s.start_time, hourly)


def to_gap_series(s: InvocationSeries) -> GapSeries:
    """Collapse each nonzero minute to one event and difference the event minutes."""
    if s.granularity != "minute":
        raise TraceError("to_gap_series expects a minute series")
    events = np.flatnonzero(s.values)
    if len(events) < 2:
        raise TooFewEvents(f"{s.function_id}: {len(events)} invocation minute(s)")
    return GapSeries(
        s.function_id,
        np.diff(events),
        s.start_time + timedelta(minutes=int(events[0])),
    )


def window_origins(length: int, context: int, horizon: int, stride: int = 1, history: int = 0) -> list[int]:
    """Forecast origins ``t0`` for sliding windows, anchored so the last ends at ``length``.

    Each window uses ``[t0 - context - history, t0)`` as input and
    ``[t0, t0 + horizon)`` as target.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    need = context + history + horizon
    if length < need:
        raise SeriesTooShort(f"length {length} < {need}")
    last = length - horizon
    count = (length - need) // stride + 1
    return [last - k * stride for k in range(count - 1, -1, -1)]


def split_series(
    s: InvocationSeries | np.ndarray,
    context_length: int,
    prediction_length: int,
    stride: int = 1,
) -> list[tuple[np.ndarray, np.ndarray]]:
    values = s.values if isinstance(s, InvocationSeries) else np.asarray(s)
    return [
        (values[t0 - context_length:t0], values[t0:t0 + prediction_length])
        for t0 in window_origins(len(values), context_length, prediction_length, stride)
    ]


# -- canonical series I/O ------------------------------------------------------


def _fmt_time(t: datetime) -> str:
    return t.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_time(text: str) -> datetime:
    t = datetime.fromisoformat(text.replace("Z", "+00:00"))
    return t if t.tzinfo else t.replace(tzinfo=timezone.utc)


def series_to_json(s: InvocationSeries) -> dict:
    return {
        "functionId": s.function_id,
        "granularity": s.granularity,
        "startTime": _fmt_time(s.start_time),
        "values": [int(v) for v in s.values],
    }


def series_from_json(obj: dict) -> InvocationSeries:
    return InvocationSeries(
        obj["functionId"], obj["granularity"], parse_time(obj["startTime"]), obj["values"]
    )


def write_series_csv(series: Iterable[InvocationSeries], fh: IO[str]) -> None:
    series = list(series)
    width = max((len(s.values) for s in series), default=0)
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["functionId", "granularity", "startTime"] + [f"v{i}" for i in range(width)])
    for s in series:
        if len(s.values) != width:
            raise TraceError("all series in one CSV must share a length")
        writer.writerow([s.function_id, s.granularity, _fmt_time(s.start_time)] + [int(v) for v in s.values])


def read_series_csv(fh: IO[str]) -> list[InvocationSeries]:
    reader = csv.reader(fh)
    header = next(reader, None)
    if header is None or header[:3] != ["functionId", "granularity", "startTime"]:
        raise MalformedHeader("series CSV must start with functionId,granularity,startTime")
    out = []
    for rownum, rec in enumerate(reader, start=1):
        if not rec:
            continue
        try:
            values = [int(v) for v in rec[3:]]
        except ValueError:
            raise BadCount(rownum, "v*", ",".join(rec[3:6])) from None
        out.append(InvocationSeries(rec[0], rec[1], parse_time(rec[2]), values))
    return out


def load_series(path) -> list[InvocationSeries]:
    """Read canonical series from a ``.csv`` or ``.json`` file."""
    path = str(path)
    with open(path, encoding="utf-8", newline="") as fh:
        if path.endswith(".json"):
            obj = json.load(fh)
            items = obj if isinstance(obj, list) else [obj]
            return [series_from_json(o) for o in items]
        return read_series_csv(fh)


def save_series(series: Sequence[InvocationSeries], path) -> None:
    path = str(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if path.endswith(".json"):
            json.dump([series_to_json(s) for s in series], fh, indent=1)
            fh.write("\n")
        else:
            write_series_csv(series, fh)


def write_day_file(rows: Sequence[RawTraceRow], fh: IO[str]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(list(ID_COLUMNS + MINUTE_COLUMNS))
    for r in rows:
        writer.writerow([r.owner_hash, r.app_hash, r.function_hash, r.trigger] + [int(v) for v in r.minute_counts])
