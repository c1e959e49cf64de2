"""Parsing of station/weather/holiday files, the partitioned snapshot store and
resampling onto the 15-minute grid."""

from __future__ import annotations

import csv
import datetime as dt
import json
import os
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
import pandas as pd

from .core import (
    QUARTER_HOUR,
    UTC,
    DataError,
    HolidayCalendar,
    StationSnapshot,
    WeatherRecord,
    as_utc,
    epoch_strings,
    from_epoch,
    parse_instant,
    to_epoch,
)

STATION_HEADER = "timestamp,station_id,lat,lon,elevation_m,status,bikes,free_slots"
WEATHER_HEADER = (
    "timestamp,issued_at,temperature_c,relative_humidity_pct,dew_point_c,wind_speed_kmh,is_forecast"
)
WEATHER_FIELDS = ("temperature_c", "relative_humidity_pct", "dew_point_c", "wind_speed_kmh")
STALENESS_S = 30 * 60


# ---------------------------------------------------------------- error ledger


@dataclass
class ErrorLedger:
    """Collects skipped malformed rows; serialized as NDJSON ``{file, line, reason}``."""

    entries: list[dict] = field(default_factory=list)

    def record(self, file: str | os.PathLike, line: int, reason: str) -> None:
        self.entries.append({"file": str(file), "line": int(line), "reason": reason})

    def __len__(self) -> int:
        return len(self.entries)

    def to_ndjson(self) -> str:
        return "".join(json.dumps(e, sort_keys=True) + "\n" for e in self.entries)

    def write(self, path: str | os.PathLike) -> None:
        Path(path).write_text(self.to_ndjson())


def _bad_row(path, lineno, reason, ledger: Optional[ErrorLedger], strict: bool) -> None:
    if strict:
        raise DataError(f"{path}:{lineno}: {reason}")
    if ledger is not None:
        ledger.record(path, lineno, reason)


def _check_header(path, line: str, expected: str) -> None:
    if line.rstrip("\r\n") != expected:
        raise DataError(f"{path}:1: expected header {expected!r}, got {line.rstrip()!r}")


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# ---------------------------------------------------------------- parsers


def parse_station_feed(
    path: str | os.PathLike, ledger: Optional[ErrorLedger] = None, strict: bool = False
) -> list[StationSnapshot]:
    """Parse a normalized station feed CSV, preserving row order.

    Malformed rows are recorded in ``ledger`` and skipped, or raise
    :class:`DataError` when ``strict``.
    """
    out: list[StationSnapshot] = []
    with open(path, newline="") as handle:
        header = handle.readline()
        _check_header(path, header, STATION_HEADER)
        for lineno, row in enumerate(csv.reader(handle), start=2):
            if not row:
                continue
            try:
                out.append(_snapshot_from_row(row))
            except (ValueError, TypeError) as exc:
                _bad_row(path, lineno, str(exc), ledger, strict)
    return out


def _snapshot_from_row(row: Sequence[str]) -> StationSnapshot:
    if len(row) != 8:
        raise ValueError(f"expected 8 fields, got {len(row)}")
    ts, sid, lat, lon, elev, status, bikes, slots = row
    if status not in ("OPN", "CLS"):
        raise ValueError(f"status must be OPN or CLS, got {status!r}")
    return StationSnapshot(
        station_id=int(sid),
        timestamp=parse_instant(ts),
        bikes=int(bikes),
        free_slots=int(slots),
        operational=status == "OPN",
        latitude=float(lat),
        longitude=float(lon),
        elevation_m=float(elev) if elev.strip() else None,
    )


def parse_weather(
    path: str | os.PathLike, ledger: Optional[ErrorLedger] = None, strict: bool = False
) -> list[WeatherRecord]:
    """Parse a weather CSV (history and forecasts); result sorted by timestamp."""
    out: list[WeatherRecord] = []
    with open(path, newline="") as handle:
        _check_header(path, handle.readline(), WEATHER_HEADER)
        for lineno, row in enumerate(csv.reader(handle), start=2):
            if not row:
                continue
            try:
                if len(row) != 7:
                    raise ValueError(f"expected 7 fields, got {len(row)}")
                out.append(
                    WeatherRecord(
                        timestamp=parse_instant(row[0]),
                        issued_at=parse_instant(row[1]),
                        temperature_c=float(row[2]),
                        relative_humidity_pct=float(row[3]),
                        dew_point_c=float(row[4]),
                        wind_speed_kmh=float(row[5]),
                        is_forecast=_parse_bool(row[6]),
                    )
                )
            except (ValueError, TypeError) as exc:
                _bad_row(path, lineno, str(exc), ledger, strict)
    out.sort(key=lambda r: (r.timestamp, r.issued_at, r.is_forecast))
    return out


def parse_holidays(path: str | os.PathLike) -> HolidayCalendar:
    """One ISO date per line; ``#`` starts a comment."""
    dates = set()
    with open(path) as handle:
        for lineno, line in enumerate(handle, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            try:
                dates.add(dt.date.fromisoformat(text))
            except ValueError:
                raise DataError(f"{path}:{lineno}: unparseable date {text!r}") from None
    return HolidayCalendar(frozenset(dates))


def write_holidays(calendar: HolidayCalendar, path: str | os.PathLike) -> None:
    Path(path).write_text("".join(f"{d.isoformat()}\n" for d in sorted(calendar.dates)))


# ---------------------------------------------------------------- weather table


@dataclass(frozen=True)
class WeatherTable:
    """Columnar weather records, sorted by (timestamp, issued_at)."""

    timestamps: np.ndarray  # int64 epoch seconds
    issued_at: np.ndarray
    values: np.ndarray  # (n, 4) in WEATHER_FIELDS order
    is_forecast: np.ndarray  # bool

    @classmethod
    def from_records(cls, records: Iterable[WeatherRecord]) -> "WeatherTable":
        records = list(records)
        ts = np.array([to_epoch(r.timestamp) for r in records], dtype=np.int64)
        issued = np.array([to_epoch(r.issued_at) for r in records], dtype=np.int64)
        values = np.array(
            [[getattr(r, f) for f in WEATHER_FIELDS] for r in records], dtype=float
        ).reshape(len(records), 4)
        flags = np.array([r.is_forecast for r in records], dtype=bool)
        return cls._sorted(ts, issued, values, flags)

    @classmethod
    def empty(cls) -> "WeatherTable":
        z = np.zeros(0, dtype=np.int64)
        return cls(z, z.copy(), np.zeros((0, 4)), np.zeros(0, dtype=bool))

    @classmethod
    def _sorted(cls, ts, issued, values, flags) -> "WeatherTable":
        order = np.lexsort((flags, issued, ts))
        return cls(ts[order], issued[order], values[order], flags[order])

    def __len__(self) -> int:
        return len(self.timestamps)

    def subset(self, mask: np.ndarray) -> "WeatherTable":
        return WeatherTable(
            self.timestamps[mask], self.issued_at[mask], self.values[mask], self.is_forecast[mask]
        )

    def history(self) -> "WeatherTable":
        return self.subset(~self.is_forecast)

    def forecasts(self) -> "WeatherTable":
        return self.subset(self.is_forecast)

    def visible_at(self, t_build: int) -> "WeatherTable":
        """Records knowable at ``t_build``: past observations and already-issued forecasts."""
        hist = ~self.is_forecast & (self.timestamps <= t_build)
        fc = self.is_forecast & (self.issued_at <= t_build)
        return self.subset(hist | fc)


def load_weather(path: str | os.PathLike, ledger=None, strict=False) -> WeatherTable:
    return WeatherTable.from_records(parse_weather(path, ledger, strict))


# ---------------------------------------------------------------- snapshot store


@dataclass(frozen=True)
class SnapshotArrays:
    """Columnar snapshots of one station, sorted by timestamp."""

    station_id: int
    timestamps: np.ndarray  # int64 epoch seconds
    bikes: np.ndarray
    free_slots: np.ndarray
    operational: np.ndarray

    def __len__(self) -> int:
        return len(self.timestamps)


def _month_key(epoch: int) -> str:
    d = from_epoch(epoch)
    return f"{d.year:04d}-{d.month:02d}"


def _month_bounds(key: str) -> tuple[int, int]:
    year, month = (int(x) for x in key.split("-"))
    start = dt.datetime(year, month, 1, tzinfo=UTC)
    end = dt.datetime(year + month // 12, month % 12 + 1, 1, tzinfo=UTC)
    return to_epoch(start), to_epoch(end)


def _format_float(value: Optional[float]) -> str:
    if value is None or (isinstance(value, float) and np.isnan(value)):
        return ""
    return repr(float(value))


@lru_cache(maxsize=64)
def _read_partition(path: str, mtime_ns: int, size: int) -> tuple:
    frame = pd.read_csv(
        path,
        usecols=["timestamp", "status", "bikes", "free_slots"],
        dtype={"status": str, "bikes": np.int64, "free_slots": np.int64},
    )
    stamps = pd.to_datetime(frame["timestamp"], format="%Y-%m-%dT%H:%M:%SZ", utc=True)
    ts = (stamps.to_numpy(dtype="datetime64[s]").astype(np.int64))
    arrays = (
        ts,
        frame["bikes"].to_numpy(),
        frame["free_slots"].to_numpy(),
        (frame["status"] == "OPN").to_numpy(),
    )
    for a in arrays:
        a.setflags(write=False)
    return arrays


class SnapshotStore:
    """Append-only store laid out as ``<root>/stations/<id>/<YYYY-MM>.csv``.

    Each partition holds one station's rows for one UTC calendar month in the
    station feed schema, strictly increasing in timestamp. Appending a row
    whose (station, timestamp) already exists is a no-op, so re-ingesting a
    file leaves the store byte-identical.
    """

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)

    def station_dir(self, station_id: int) -> Path:
        return self.root / "stations" / str(int(station_id))

    def stations(self) -> list[int]:
        base = self.root / "stations"
        if not base.is_dir():
            return []
        return sorted(int(p.name) for p in base.iterdir() if p.is_dir() and p.name.isdigit())

    def partitions(self, station_id: int) -> list[Path]:
        d = self.station_dir(station_id)
        return sorted(d.glob("*.csv")) if d.is_dir() else []

    # -- writing

    def append(self, snapshots: Iterable[StationSnapshot]) -> int:
        """Merge snapshots into their partitions; returns the number of new rows."""
        groups: dict[tuple[int, str], dict[int, str]] = {}
        for snap in snapshots:
            epoch = to_epoch(snap.timestamp)
            line = ",".join(
                (
                    f"{snap.timestamp:%Y-%m-%dT%H:%M:%SZ}",
                    str(snap.station_id),
                    _format_float(snap.latitude),
                    _format_float(snap.longitude),
                    _format_float(snap.elevation_m),
                    "OPN" if snap.operational else "CLS",
                    str(snap.bikes),
                    str(snap.free_slots),
                )
            )
            groups.setdefault((snap.station_id, _month_key(epoch)), {}).setdefault(epoch, line)
        added = 0
        for (sid, month), lines in sorted(groups.items()):
            added += self._merge_partition(sid, month, lines)
        return added

    def append_arrays(
        self,
        station_id: int,
        timestamps: np.ndarray,
        bikes: np.ndarray,
        free_slots: np.ndarray,
        operational: np.ndarray,
        latitude: float,
        longitude: float,
        elevation_m: Optional[float] = None,
    ) -> int:
        """Bulk append for one station (used by the synthetic generator)."""
        ts = np.asarray(timestamps, dtype=np.int64)
        prefix = f",{int(station_id)},{_format_float(latitude)},{_format_float(longitude)},{_format_float(elevation_m)},"
        stamps = epoch_strings(ts)
        status = np.where(np.asarray(operational, dtype=bool), "OPN", "CLS")
        added = 0
        if len(ts) == 0:
            return 0
        month_ids = ts.astype("datetime64[s]").astype("datetime64[M]")
        for m in np.unique(month_ids):
            sel = np.flatnonzero(month_ids == m)
            lines = {
                int(ts[i]): f"{stamps[i]}{prefix}{status[i]},{int(bikes[i])},{int(free_slots[i])}"
                for i in sel
            }
            key = str(m)  # 'YYYY-MM'
            added += self._merge_partition(int(station_id), key, lines)
        return added

    def _merge_partition(self, station_id: int, month: str, lines: dict[int, str]) -> int:
        path = self.station_dir(station_id) / f"{month}.csv"
        existing: dict[int, str] = {}
        if path.exists():
            with open(path) as handle:
                handle.readline()
                for raw in handle:
                    raw = raw.rstrip("\n")
                    if raw:
                        existing[to_epoch(parse_instant(raw.split(",", 1)[0]))] = raw
        new = {k: v for k, v in lines.items() if k not in existing}
        if not new and path.exists():
            return 0
        merged = {**existing, **new}
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".csv.tmp")
        with open(tmp, "w") as handle:
            handle.write(STATION_HEADER + "\n")
            handle.writelines(merged[k] + "\n" for k in sorted(merged))
        os.replace(tmp, path)
        return len(new)

    # -- reading

    def load(
        self, station_id: int, start: Optional[int] = None, end: Optional[int] = None
    ) -> SnapshotArrays:
        """Snapshots with ``start <= timestamp < end`` (epoch seconds; None = open)."""
        parts = self.partitions(station_id)
        if not parts:
            raise DataError(f"unknown station {station_id} in store {self.root}")
        chunks = []
        for path in parts:
            lo, hi = _month_bounds(path.stem)
            if (end is not None and lo >= end) or (start is not None and hi <= start):
                continue
            st = path.stat()
            chunks.append(_read_partition(str(path), st.st_mtime_ns, st.st_size))
        if chunks:
            ts, bikes, slots, ops = (np.concatenate(c) for c in zip(*chunks))
        else:
            ts = np.zeros(0, dtype=np.int64)
            bikes = slots = np.zeros(0, dtype=np.int64)
            ops = np.zeros(0, dtype=bool)
        lo_i = 0 if start is None else np.searchsorted(ts, start, "left")
        hi_i = len(ts) if end is None else np.searchsorted(ts, end, "left")
        sl = slice(lo_i, hi_i)
        return SnapshotArrays(int(station_id), ts[sl], bikes[sl], slots[sl], ops[sl])

    def verify(self) -> list[str]:
        """Check every partition; returns a list of problems (empty when sound)."""
        problems = []
        for sid in self.stations():
            for path in self.partitions(sid):
                problems.extend(self._verify_partition(sid, path))
        return problems

    def _verify_partition(self, sid: int, path: Path) -> list[str]:
        problems = []
        try:
            lo, hi = _month_bounds(path.stem)
        except ValueError:
            return [f"{path}: partition name is not YYYY-MM"]
        with open(path, newline="") as handle:
            header = handle.readline().rstrip("\r\n")
            if header != STATION_HEADER:
                return [f"{path}:1: bad header"]
            previous = None
            for lineno, row in enumerate(csv.reader(handle), start=2):
                try:
                    snap = _snapshot_from_row(row)
                except (ValueError, TypeError) as exc:
                    problems.append(f"{path}:{lineno}: {exc}")
                    continue
                epoch = to_epoch(snap.timestamp)
                if snap.station_id != sid:
                    problems.append(f"{path}:{lineno}: station {snap.station_id} in partition of {sid}")
                if not lo <= epoch < hi:
                    problems.append(f"{path}:{lineno}: timestamp outside partition month")
                if previous is not None and epoch <= previous:
                    problems.append(f"{path}:{lineno}: timestamps not strictly increasing")
                previous = epoch
        return problems

    def digest_files(self) -> list[Path]:
        return [p for sid in self.stations() for p in self.partitions(sid)]


def ingest_files(
    store: SnapshotStore,
    paths: Iterable[str | os.PathLike],
    ledger: Optional[ErrorLedger] = None,
    strict: bool = False,
) -> int:
    added = 0
    for path in paths:
        added += store.append(parse_station_feed(path, ledger, strict))
    return added


# ---------------------------------------------------------------- resampling


@dataclass(frozen=True)
class ResampledSeries:
    """One station on the 15-minute grid ``[grid_start, grid_end)``."""

    station_id: int
    grid_start: int  # epoch seconds
    grid_end: int
    bikes: np.ndarray
    free_slots: np.ndarray
    observed: np.ndarray

    def __len__(self) -> int:
        return len(self.observed)

    @property
    def times(self) -> np.ndarray:
        return self.grid_start + QUARTER_HOUR * np.arange(len(self), dtype=np.int64)

    @property
    def values(self) -> list[tuple[int, int, bool]]:
        return list(zip(self.bikes.tolist(), self.free_slots.tolist(), self.observed.tolist()))

    def slice(self, start: int, end: int) -> "ResampledSeries":
        """Sub-window; both bounds must be on this series' grid and inside it."""
        if start < self.grid_start or end > self.grid_end or start > end:
            raise ValueError("slice outside series")
        if (start - self.grid_start) % QUARTER_HOUR or (end - self.grid_start) % QUARTER_HOUR:
            raise ValueError("slice bounds off the 15-minute grid")
        i = (start - self.grid_start) // QUARTER_HOUR
        j = (end - self.grid_start) // QUARTER_HOUR
        return ResampledSeries(
            self.station_id, start, end, self.bikes[i:j], self.free_slots[i:j], self.observed[i:j]
        )


def _window_epochs(start, end) -> tuple[int, int]:
    s = start if isinstance(start, (int, np.integer)) else to_epoch(start)
    e = end if isinstance(end, (int, np.integer)) else to_epoch(end)
    if s % QUARTER_HOUR or e % QUARTER_HOUR:
        raise ValueError("window bounds must lie on 15-minute boundaries")
    if e < s:
        raise ValueError("window end before start")
    return int(s), int(e)


def resample_arrays(snaps: SnapshotArrays, start: int, end: int) -> ResampledSeries:
    """Last observation at or before each cell instant, if at most 30 min old.

    A non-operational latest snapshot makes the cell a gap.
    """
    cells = start + QUARTER_HOUR * np.arange((end - start) // QUARTER_HOUR, dtype=np.int64)
    idx = np.searchsorted(snaps.timestamps, cells, side="right") - 1
    have = idx >= 0
    safe = np.where(have, idx, 0)
    if len(snaps):
        fresh = have & (cells - snaps.timestamps[safe] <= STALENESS_S)
        observed = fresh & snaps.operational[safe]
        bikes = np.where(observed, snaps.bikes[safe], 0)
        slots = np.where(observed, snaps.free_slots[safe], 0)
    else:
        observed = np.zeros(len(cells), dtype=bool)
        bikes = slots = np.zeros(len(cells), dtype=np.int64)
    return ResampledSeries(snaps.station_id, start, end, bikes, slots, observed)


def resample(
    store: SnapshotStore, station_id: int, start, end, *, until: Optional[int] = None
) -> ResampledSeries:
    """Resample a station onto ``[start, end)``.

    ``until`` optionally hides every snapshot timestamped at or after it,
    which is how callers enforce a no-lookahead boundary.
    """
    s, e = _window_epochs(start, end)
    hi = e if until is None else min(e, int(until))
    snaps = store.load(station_id, s - STALENESS_S, hi)
    return resample_arrays(snaps, s, e)
