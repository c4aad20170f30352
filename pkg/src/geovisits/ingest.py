"""Event-stream ingestion: parsing, spatial filtering, local time, trajectories.

Input records are line-delimited (NDJSON or CSV). Malformed lines never abort
a parse; they are counted and reported with their line number. Timestamps are
kept as integer epoch seconds internally and converted to local civil time
with the US statutory daylight-saving rule (in force since 2007) rather than
a full tz database.
"""

from __future__ import annotations

import csv
import json
from bisect import bisect_right
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from functools import lru_cache
from typing import Iterable, Iterator

from .errors import InputError, TimeRangeError

_EPOCH = datetime(1970, 1, 1)
_MAX_LOGGED_ERRORS = 1000

CSV_HEADER = ["user", "lon", "lat", "ts"]


@dataclass(frozen=True, slots=True)
class TweetRecord:
    """One geo-located event: opaque user id, position, UTC epoch seconds."""

    user_id: str
    lon: float
    lat: float
    t_utc: int


@dataclass(frozen=True)
class BoundingBox:
    min_lat: float
    min_lon: float
    max_lat: float
    max_lon: float

    def __post_init__(self):
        if not (self.min_lat < self.max_lat and self.min_lon < self.max_lon):
            raise InputError(
                f"invalid bounding box: ({self.min_lat}, {self.min_lon}) .. "
                f"({self.max_lat}, {self.max_lon})"
            )

    def contains(self, lat: float, lon: float) -> bool:
        """Boundary-inclusive membership test."""
        return (
            self.min_lat <= lat <= self.max_lat
            and self.min_lon <= lon <= self.max_lon
        )


@dataclass
class Trajectory:
    """A user's records in chronological order (stable on timestamp ties)."""

    user_id: str
    points: list[TweetRecord]

    def __len__(self) -> int:
        return len(self.points)


@dataclass
class ParseResult:
    records: list[TweetRecord]
    errors: list[tuple[int, str]] = field(default_factory=list)
    error_count: int = 0


def epoch_from_rfc3339(ts: str) -> int:
    """Parse an RFC3339 timestamp ('Z' or numeric offset) to epoch seconds."""
    s = ts.strip()
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is None:
        raise ValueError("timestamp missing UTC offset")
    return int(dt.timestamp())


def rfc3339_from_epoch(epoch: int) -> str:
    dt = datetime.fromtimestamp(epoch, tz=timezone.utc)
    return f"{dt:%Y-%m-%dT%H:%M:%S}Z"


def _make_record(user, lon, lat, ts) -> TweetRecord | str:
    """Validate raw fields; return a TweetRecord or an error message."""
    if user is None or (isinstance(user, str) and user == ""):
        return "missing user id"
    if not isinstance(user, str):
        if isinstance(user, bool) or not isinstance(user, int):
            return "user id must be a string"
        user = str(user)
    if isinstance(lon, bool) or isinstance(lat, bool):
        return "longitude/latitude not numeric"
    try:
        lon = float(lon)
        lat = float(lat)
    except (TypeError, ValueError):
        return "longitude/latitude not numeric"
    if not -180.0 <= lon <= 180.0:
        return "longitude out of range"
    if not -90.0 <= lat <= 90.0:
        return "latitude out of range"
    try:
        epoch = epoch_from_rfc3339(ts)
    except (TypeError, ValueError, AttributeError):
        return f"bad timestamp {ts!r}"
    return TweetRecord(user, lon, lat, epoch)


def _parse_ndjson(lines: Iterable[str], result: ParseResult) -> None:
    records = result.records
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            rec = _make_record(
                obj.get("user"), obj.get("lon"), obj.get("lat"), obj.get("ts")
            )
        except (json.JSONDecodeError, AttributeError):
            rec = "unparseable JSON line"
        if isinstance(rec, str):
            result.error_count += 1
            if len(result.errors) < _MAX_LOGGED_ERRORS:
                result.errors.append((lineno, rec))
        else:
            records.append(rec)


def _parse_csv(lines: Iterable[str], result: ParseResult) -> None:
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise InputError("empty CSV input: header row required") from None
    header = [h.strip().lstrip("﻿") for h in header]
    if header != CSV_HEADER:
        raise InputError(
            f"CSV header must be {','.join(CSV_HEADER)!r}, got {','.join(header)!r}"
        )
    for row in reader:
        if not row:
            continue
        if len(row) != 4:
            result.error_count += 1
            if len(result.errors) < _MAX_LOGGED_ERRORS:
                result.errors.append((reader.line_num, "wrong field count"))
            continue
        rec = _make_record(row[0], row[1], row[2], row[3])
        if isinstance(rec, str):
            result.error_count += 1
            if len(result.errors) < _MAX_LOGGED_ERRORS:
                result.errors.append((reader.line_num, rec))
        else:
            result.records.append(rec)


def parse_stream(lines: Iterable[str], fmt: str = "ndjson") -> ParseResult:
    """Parse a line-delimited event stream into TweetRecords.

    Every well-formed line yields exactly one record; malformed lines are
    counted in the result (with up to the first 1000 messages retained).
    """
    result = ParseResult(records=[])
    if fmt == "ndjson":
        _parse_ndjson(lines, result)
    elif fmt == "csv":
        _parse_csv(lines, result)
    else:
        raise InputError(f"unknown input format {fmt!r} (expected ndjson or csv)")
    return result


def bbox_filter(records: Iterable[TweetRecord], box: BoundingBox) -> list[TweetRecord]:
    """Keep records inside the box, boundaries included. Idempotent."""
    return [r for r in records if box.contains(r.lat, r.lon)]


# ---------------------------------------------------------------------------
# Local civil time
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TzRules:
    """Fixed-offset zone with the US daylight-saving rule.

    Standard time applies outside DST; DST runs from the second Sunday of
    March 02:00 local standard time to the first Sunday of November 02:00
    local daylight time. Valid for rule years 2007 and later; instants whose
    local year falls outside [year_min, year_max] are rejected.
    """

    std_offset_hours: float = -6.0
    dst_offset_hours: float = -5.0
    year_min: int = 2014
    year_max: int = 2014

    def __post_init__(self):
        if self.year_min < 2007:
            raise InputError("US DST rule supported for years >= 2007")
        if self.year_max < self.year_min:
            raise InputError("year_max must be >= year_min")

    @property
    def std_offset_s(self) -> int:
        return round(self.std_offset_hours * 3600)

    @property
    def dst_offset_s(self) -> int:
        return round(self.dst_offset_hours * 3600)


def _nth_sunday_of_month(year: int, month: int, n: int) -> int:
    first_wd = datetime(year, month, 1).weekday()  # Monday == 0
    first_sunday = 1 + (6 - first_wd) % 7
    return first_sunday + 7 * (n - 1)


@lru_cache(maxsize=None)
def _tz_tables(
    std_offset_s: int, dst_offset_s: int, year_min: int, year_max: int
) -> tuple[tuple[int, ...], tuple[tuple[int, int], ...]]:
    """Per-year local-standard year boundaries and UTC DST windows."""
    year_starts = []
    windows = []
    for year in range(year_min, year_max + 2):
        year_starts.append(int((datetime(year, 1, 1) - _EPOCH).total_seconds()))
    for year in range(year_min, year_max + 1):
        mar = _nth_sunday_of_month(year, 3, 2)
        nov = _nth_sunday_of_month(year, 11, 1)
        start_local = datetime(year, 3, mar, 2, 0)  # 02:00 standard
        end_local = datetime(year, 11, nov, 2, 0)  # 02:00 daylight
        start_utc = int((start_local - _EPOCH).total_seconds()) - std_offset_s
        end_utc = int((end_local - _EPOCH).total_seconds()) - dst_offset_s
        windows.append((start_utc, end_utc))
    return tuple(year_starts), tuple(windows)


def utc_offset_at(t_utc: int, rules: TzRules) -> int:
    """Offset in seconds to add to a UTC epoch for local civil time."""
    starts, windows = _tz_tables(
        rules.std_offset_s, rules.dst_offset_s, rules.year_min, rules.year_max
    )
    local_std = t_utc + rules.std_offset_s
    if not starts[0] <= local_std < starts[-1]:
        raise TimeRangeError(
            f"instant {rfc3339_from_epoch(t_utc)} outside supported years "
            f"{rules.year_min}..{rules.year_max}"
        )
    ws, we = windows[bisect_right(starts, local_std) - 1]
    return rules.dst_offset_s if ws <= t_utc < we else rules.std_offset_s


def to_local_time(t_utc: int, rules: TzRules) -> datetime:
    """Convert a UTC epoch to naive local civil time under the rule set."""
    return _EPOCH + timedelta(seconds=t_utc + utc_offset_at(t_utc, rules))


def utc_from_local(local: datetime, rules: TzRules) -> int:
    """Inverse of to_local_time.

    Local times inside the spring-forward gap do not exist and raise;
    ambiguous fall-back times resolve to the earlier (daylight) instant.
    """
    if not rules.year_min <= local.year <= rules.year_max:
        raise TimeRangeError(
            f"local time {local.isoformat()} outside supported years "
            f"{rules.year_min}..{rules.year_max}"
        )
    starts, windows = _tz_tables(
        rules.std_offset_s, rules.dst_offset_s, rules.year_min, rules.year_max
    )
    local_s = int((local - _EPOCH).total_seconds())
    ws, we = windows[local.year - rules.year_min]
    gap_lo, gap_hi = ws + rules.std_offset_s, ws + rules.dst_offset_s
    if gap_lo <= local_s < gap_hi:
        raise TimeRangeError(
            f"local time {local.isoformat()} does not exist (spring-forward gap)"
        )
    if gap_hi <= local_s < we + rules.dst_offset_s:
        return local_s - rules.dst_offset_s
    return local_s - rules.std_offset_s


# ---------------------------------------------------------------------------
# Trajectories and the median-count filter
# ---------------------------------------------------------------------------


def build_trajectories(records: Iterable[TweetRecord]) -> list[Trajectory]:
    """Group records per user and sort each group by timestamp.

    The sort is stable, so duplicate (user, timestamp) records keep their
    input order. Output is ordered by user_id for reproducibility.
    """
    by_user: dict[str, list[TweetRecord]] = {}
    for rec in records:
        by_user.setdefault(rec.user_id, []).append(rec)
    return [
        Trajectory(uid, sorted(pts, key=lambda r: r.t_utc))
        for uid, pts in sorted(by_user.items())
    ]


@dataclass(frozen=True)
class MedianFilterReport:
    median: int
    total_users: int
    retained_count: int
    retained_fraction: float
    retained_mean: float
    retained_max: int


def median_filter(
    trajectories: list[Trajectory],
) -> tuple[list[Trajectory], MedianFilterReport]:
    """Keep users whose tweet count is >= the (lower) median count."""
    if not trajectories:
        raise InputError("median filter needs at least one trajectory")
    counts = sorted(len(t) for t in trajectories)
    median = counts[(len(counts) - 1) // 2]
    retained = [t for t in trajectories if len(t) >= median]
    kept = [len(t) for t in retained]
    report = MedianFilterReport(
        median=median,
        total_users=len(trajectories),
        retained_count=len(retained),
        retained_fraction=len(retained) / len(trajectories),
        retained_mean=sum(kept) / len(kept),
        retained_max=max(kept),
    )
    return retained, report


def year_filter(
    records: Iterable[TweetRecord], rules: TzRules
) -> Iterator[TweetRecord]:
    """Drop records whose local civil year is outside the rule range."""
    for rec in records:
        try:
            utc_offset_at(rec.t_utc, rules)
        except TimeRangeError:
            continue
        yield rec
