"""Labeled predictor rows and the two-window training sampler."""

from __future__ import annotations

import enum
import io
import warnings
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Optional, Sequence

import numpy as np

from .core import (
    MAX_HORIZON_S,
    QUARTER_HOUR,
    DataError,
    HolidayCalendar,
    OccupancyLevel,
    derive_rng,
    discretize_array,
    epoch_strings,
    from_epoch,
    local_fields,
)
from .ingest import WEATHER_FIELDS, ResampledSeries, SnapshotStore, WeatherTable, resample

WEEK = 7 * 86400
WEATHER_JOIN_TOLERANCE_S = 90 * 60
BASE_PREDICTORS = ("minute_of_day", "day_of_week")
EXTENDED_PREDICTORS = BASE_PREDICTORS + ("is_holiday",) + WEATHER_FIELDS
DUMP_HEADER = "station_id,timestamp," + ",".join(EXTENDED_PREDICTORS) + ",label"


class PredictorSet(str, enum.Enum):
    """``rf`` uses only what the bike feed itself implies; ``rf_extended`` adds
    holidays and weather."""

    RF = "rf"
    RF_EXTENDED = "rf_extended"

    @property
    def predictors(self) -> tuple[str, ...]:
        return BASE_PREDICTORS if self is PredictorSet.RF else EXTENDED_PREDICTORS

    @property
    def uses_weather(self) -> bool:
        return self is PredictorSet.RF_EXTENDED


@dataclass(frozen=True)
class FeatureRow:
    station_id: int
    timestamp: int  # epoch seconds
    minute_of_day: int
    day_of_week: int
    is_holiday: bool
    temperature_c: Optional[float] = None
    relative_humidity_pct: Optional[float] = None
    dew_point_c: Optional[float] = None
    wind_speed_kmh: Optional[float] = None
    label: Optional[OccupancyLevel] = None

    def __post_init__(self) -> None:
        present = [getattr(self, f) is not None for f in WEATHER_FIELDS]
        if any(present) and not all(present):
            raise ValueError("weather block must be all-present or all-absent")

    @property
    def has_weather(self) -> bool:
        return self.temperature_c is not None

    def __getitem__(self, name: str) -> float:
        value = getattr(self, name)
        if value is None:
            raise KeyError(name)
        return float(value)


@dataclass(frozen=True)
class FeatureTable:
    """Columnar collection of :class:`FeatureRow` for one station."""

    station_id: int
    timestamps: np.ndarray
    minute_of_day: np.ndarray
    day_of_week: np.ndarray
    is_holiday: np.ndarray
    weather: Optional[np.ndarray] = None  # (n, 4) in WEATHER_FIELDS order
    labels: Optional[np.ndarray] = None  # int8 level codes
    dropped: int = 0  # cells lost for lack of weather

    def __len__(self) -> int:
        return len(self.timestamps)

    def row(self, i: int) -> FeatureRow:
        w = self.weather[i] if self.weather is not None else (None,) * 4
        return FeatureRow(
            station_id=self.station_id,
            timestamp=int(self.timestamps[i]),
            minute_of_day=int(self.minute_of_day[i]),
            day_of_week=int(self.day_of_week[i]),
            is_holiday=bool(self.is_holiday[i]),
            temperature_c=None if w[0] is None else float(w[0]),
            relative_humidity_pct=None if w[1] is None else float(w[1]),
            dew_point_c=None if w[2] is None else float(w[2]),
            wind_speed_kmh=None if w[3] is None else float(w[3]),
            label=None if self.labels is None else OccupancyLevel(int(self.labels[i])),
        )

    def __iter__(self) -> Iterator[FeatureRow]:
        return (self.row(i) for i in range(len(self)))

    def take(self, index: np.ndarray) -> "FeatureTable":
        index = np.asarray(index, dtype=np.int64)
        return FeatureTable(
            self.station_id,
            self.timestamps[index],
            self.minute_of_day[index],
            self.day_of_week[index],
            self.is_holiday[index],
            None if self.weather is None else self.weather[index],
            None if self.labels is None else self.labels[index],
            self.dropped,
        )

    def within(self, start: int, end: int) -> "FeatureTable":
        return self.take(np.flatnonzero((self.timestamps >= start) & (self.timestamps < end)))

    def column(self, name: str) -> np.ndarray:
        if name in WEATHER_FIELDS:
            if self.weather is None:
                raise KeyError(f"predictor {name!r} not present (rows built without weather)")
            return self.weather[:, WEATHER_FIELDS.index(name)]
        if name in ("minute_of_day", "day_of_week", "is_holiday"):
            return getattr(self, name)
        raise KeyError(f"unknown predictor {name!r}")

    def matrix(self, predictors: Sequence[str]) -> np.ndarray:
        cols = [np.asarray(self.column(p), dtype=float) for p in predictors]
        return np.column_stack(cols) if cols else np.zeros((len(self), 0))

    @staticmethod
    def concat(tables: Sequence["FeatureTable"]) -> "FeatureTable":
        if not tables:
            raise ValueError("nothing to concatenate")
        first = tables[0]
        has_w = first.weather is not None
        has_l = first.labels is not None
        if any((t.weather is not None) != has_w or (t.labels is not None) != has_l for t in tables):
            raise ValueError("tables disagree on weather/label presence")
        cat = lambda name: np.concatenate([getattr(t, name) for t in tables])  # noqa: E731
        return FeatureTable(
            first.station_id,
            cat("timestamps"),
            cat("minute_of_day"),
            cat("day_of_week"),
            cat("is_holiday"),
            cat("weather") if has_w else None,
            cat("labels") if has_l else None,
            sum(t.dropped for t in tables),
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(DUMP_HEADER + "\n")
        stamps = epoch_strings(self.timestamps)
        for i in range(len(self)):
            weather = (
                ",".join(f"{v:.2f}" for v in self.weather[i]) if self.weather is not None else ",,,"
            )
            label = "" if self.labels is None else OccupancyLevel(int(self.labels[i])).label
            buf.write(
                f"{self.station_id},{stamps[i]},{self.minute_of_day[i]},{self.day_of_week[i]},"
                f"{int(self.is_holiday[i])},{weather},{label}\n"
            )
        return buf.getvalue()


# ---------------------------------------------------------------- joins


def nearest_join(targets: np.ndarray, source: np.ndarray, tolerance: int) -> np.ndarray:
    """Index into sorted ``source`` of the nearest instant within ``tolerance``; -1 if none.

    Equidistant neighbours resolve to the earlier one.
    """
    targets = np.asarray(targets, dtype=np.int64)
    if len(source) == 0:
        return np.full(len(targets), -1, dtype=np.int64)
    right = np.searchsorted(source, targets, side="left")
    left = right - 1
    right_c = np.clip(right, 0, len(source) - 1)
    left_c = np.clip(left, 0, len(source) - 1)
    d_right = np.where(right < len(source), source[right_c] - targets, np.iinfo(np.int64).max)
    d_left = np.where(left >= 0, targets - source[left_c], np.iinfo(np.int64).max)
    best = np.where(d_left <= d_right, left_c, right_c)
    dist = np.minimum(d_left, d_right)
    return np.where(dist <= tolerance, best, -1)


def _holiday_mask(ordinals: np.ndarray, holidays: HolidayCalendar) -> np.ndarray:
    return np.isin(ordinals, holidays.ordinals())


def rows_from_series(
    series: ResampledSeries,
    weather: Optional[WeatherTable],
    holidays: HolidayCalendar,
    predictor_set: PredictorSet | str,
    tz: str = "UTC",
) -> FeatureTable:
    """One labeled row per observed cell with non-zero capacity."""
    predictor_set = PredictorSet(predictor_set)
    keep = series.observed & (series.bikes + series.free_slots > 0)
    times = series.times[keep]
    labels = discretize_array(series.bikes[keep], series.free_slots[keep])
    minute, dow, ordinal = local_fields(times, tz)
    holiday = _holiday_mask(ordinal, holidays)
    table = FeatureTable(series.station_id, times, minute, dow, holiday, None, labels)
    if not predictor_set.uses_weather:
        return table
    hist = weather.history() if weather is not None else WeatherTable.empty()
    idx = nearest_join(times, hist.timestamps, WEATHER_JOIN_TOLERANCE_S)
    ok = idx >= 0
    joined = table.take(np.flatnonzero(ok))
    return FeatureTable(
        joined.station_id, joined.timestamps, joined.minute_of_day, joined.day_of_week,
        joined.is_holiday, hist.values[idx[ok]], joined.labels, int((~ok).sum()),
    )


def build_rows(
    store: SnapshotStore,
    weather: Optional[WeatherTable],
    holidays: HolidayCalendar,
    station_id: int,
    window: tuple[int, int],
    predictor_set: PredictorSet | str,
    tz: str = "UTC",
) -> FeatureTable:
    series = resample(store, station_id, window[0], window[1])
    return rows_from_series(series, weather, holidays, predictor_set, tz)


def build_prediction_rows(
    t_build: int,
    horizon_hours: float,
    weather: Optional[WeatherTable],
    holidays: HolidayCalendar,
    predictor_set: PredictorSet | str,
    tz: str = "UTC",
    station_id: int = 0,
) -> FeatureTable:
    """Unlabeled rows for every 15-minute instant in ``(t_build, t_build + horizon]``.

    Extended rows take weather from forecasts issued at or before ``t_build``;
    where several issues cover an instant the most recent one wins.
    """
    predictor_set = PredictorSet(predictor_set)
    horizon_s = int(round(horizon_hours * 3600))
    if horizon_s % QUARTER_HOUR or not 0 < horizon_s <= MAX_HORIZON_S:
        raise ValueError("horizon must be a positive multiple of 15 minutes, at most 72 h")
    if t_build % QUARTER_HOUR:
        raise ValueError("t_build must lie on the 15-minute grid")
    targets = t_build + QUARTER_HOUR * np.arange(1, horizon_s // QUARTER_HOUR + 1, dtype=np.int64)
    minute, dow, ordinal = local_fields(targets, tz)
    table = FeatureTable(station_id, targets, minute, dow, _holiday_mask(ordinal, holidays))
    if not predictor_set.uses_weather:
        return table
    fc = weather.forecasts() if weather is not None else WeatherTable.empty()
    fc = fc.subset(fc.issued_at <= t_build)
    if len(fc):
        # per timestamp keep the latest issue (table is sorted by timestamp, issued_at)
        last_of_run = np.r_[fc.timestamps[1:] != fc.timestamps[:-1], True]
        fc = fc.subset(last_of_run)
    idx = nearest_join(targets, fc.timestamps, WEATHER_JOIN_TOLERANCE_S)
    if np.any(idx < 0):
        missing = [from_epoch(t).isoformat() for t in targets[idx < 0][:5]]
        raise DataError(
            f"no forecast coverage for {int((idx < 0).sum())} instants, e.g. {', '.join(missing)}"
        )
    return FeatureTable(
        station_id, targets, minute, dow, table.is_holiday, fc.values[idx], None
    )


# ---------------------------------------------------------------- sampler


@dataclass(frozen=True)
class SamplerSpec:
    """Training windows relative to the build instant.

    ``yearago`` spans [t_build - 54 weeks, t_build - 50 weeks) and ``recent``
    spans [t_build - 13 weeks, t_build).
    """

    t_build: int
    n_yearago: int = 1000
    n_recent: int = 2000
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_yearago <= 0 or self.n_recent <= 0:
            raise ValueError("sample counts must be positive")

    @property
    def yearago_window(self) -> tuple[int, int]:
        return self.t_build - 54 * WEEK, self.t_build - 50 * WEEK

    @property
    def recent_window(self) -> tuple[int, int]:
        return self.t_build - 13 * WEEK, self.t_build

    def windows(self) -> dict[str, tuple[tuple[int, int], int]]:
        return {
            "yearago": (self.yearago_window, self.n_yearago),
            "recent": (self.recent_window, self.n_recent),
        }


class SamplerShortfallWarning(UserWarning):
    pass


@dataclass(frozen=True)
class TrainingSample:
    rows: FeatureTable
    shortfall: dict[str, int] = field(default_factory=dict)  # window -> rows missing


def sample_training_set(
    rows_by_window: Mapping[str, FeatureTable], spec: SamplerSpec
) -> TrainingSample:
    """Uniform sample without replacement from each window; year-ago block first.

    Selected rows keep their chronological order within a block.
    """
    blocks = []
    shortfall = {}
    for k, (name, ((start, end), wanted)) in enumerate(spec.windows().items()):
        if name not in rows_by_window:
            raise DataError(f"no rows supplied for window {name!r}")
        table = rows_by_window[name].within(start, end)
        if len(table) == 0:
            raise DataError(f"training window {name!r} is empty")
        if len(table) <= wanted:
            if len(table) < wanted:
                shortfall[name] = wanted - len(table)
                warnings.warn(
                    f"window {name!r}: {len(table)} rows available, {wanted} requested",
                    SamplerShortfallWarning,
                    stacklevel=2,
                )
            blocks.append(table)
            continue
        rng = derive_rng(spec.seed, k)
        chosen = np.sort(rng.choice(len(table), size=wanted, replace=False))
        blocks.append(table.take(chosen))
    return TrainingSample(FeatureTable.concat(blocks), shortfall)


def training_rows(
    series: ResampledSeries,
    weather: Optional[WeatherTable],
    holidays: HolidayCalendar,
    spec: SamplerSpec,
    predictor_set: PredictorSet | str,
    tz: str = "UTC",
) -> TrainingSample:
    """Sampler applied to a resampled series covering both windows."""
    by_window = {}
    for name, ((start, end), _) in spec.windows().items():
        lo = min(max(start, series.grid_start), series.grid_end)
        hi = max(min(end, series.grid_end), lo)
        part = series.slice(lo, hi)
        by_window[name] = rows_from_series(part, weather, holidays, predictor_set, tz)
    return sample_training_set(by_window, spec)
