"""Domain types shared across the package and the occupancy discretization."""

from __future__ import annotations

import datetime as dt
import enum
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

UTC = dt.timezone.utc
QUARTER_HOUR = 900  # seconds
MAX_HORIZON_S = 72 * 3600
ALMOST_THRESHOLD = 5  # "between 1 and 5" bikes or slots


class DataError(Exception):
    """Input data violates a documented contract (bad file, missing coverage...)."""


class OccupancyLevel(enum.IntEnum):
    """Five station states, ordered Empty < AlmostEmpty < Available < AlmostFull < Full."""

    EMPTY = 0
    ALMOST_EMPTY = 1
    AVAILABLE = 2
    ALMOST_FULL = 3
    FULL = 4

    @property
    def label(self) -> str:
        return _LABELS[self]

    @classmethod
    def from_label(cls, text: str) -> "OccupancyLevel":
        try:
            return _FROM_LABEL[text.strip()]
        except KeyError:
            raise ValueError(f"unknown occupancy level {text!r}") from None

    def __str__(self) -> str:
        return self.label


_LABELS = {
    OccupancyLevel.EMPTY: "empty",
    OccupancyLevel.ALMOST_EMPTY: "almost_empty",
    OccupancyLevel.AVAILABLE: "available",
    OccupancyLevel.ALMOST_FULL: "almost_full",
    OccupancyLevel.FULL: "full",
}
_FROM_LABEL = {v: k for k, v in _LABELS.items()}
N_LEVELS = len(OccupancyLevel)


class Criterion(str, enum.Enum):
    STRICT = "strict"
    FLEXIBLE = "flexible"


class Method(str, enum.Enum):
    ARIMA = "arima"
    RF = "rf"
    RF_EXTENDED = "rf_extended"


def discretize(bikes: int, free_slots: int) -> OccupancyLevel:
    """Map a (bikes, free slots) pair to its occupancy level.

    Overlapping rows of the level table are resolved with the precedence
    Empty > Full > AlmostEmpty > AlmostFull > Available, so a 3/3 station is
    AlmostEmpty.
    """
    bikes = int(bikes)
    free_slots = int(free_slots)
    if bikes < 0 or free_slots < 0:
        raise ValueError(f"negative count: bikes={bikes}, free_slots={free_slots}")
    if bikes + free_slots == 0:
        raise ValueError("station reports zero capacity (bikes + free_slots == 0)")
    if bikes == 0:
        return OccupancyLevel.EMPTY
    if free_slots == 0:
        return OccupancyLevel.FULL
    if bikes <= ALMOST_THRESHOLD:
        return OccupancyLevel.ALMOST_EMPTY
    if free_slots <= ALMOST_THRESHOLD:
        return OccupancyLevel.ALMOST_FULL
    return OccupancyLevel.AVAILABLE


def discretize_array(bikes: np.ndarray, free_slots: np.ndarray) -> np.ndarray:
    """Vectorized :func:`discretize`; returns int8 level codes."""
    bikes = np.asarray(bikes)
    free_slots = np.asarray(free_slots)
    if np.any(bikes < 0) or np.any(free_slots < 0):
        raise ValueError("negative counts")
    if np.any(bikes + free_slots == 0):
        raise ValueError("station reports zero capacity (bikes + free_slots == 0)")
    out = np.full(bikes.shape, OccupancyLevel.AVAILABLE, dtype=np.int8)
    # assigned lowest precedence first so later writes win
    out[free_slots <= ALMOST_THRESHOLD] = OccupancyLevel.ALMOST_FULL
    out[bikes <= ALMOST_THRESHOLD] = OccupancyLevel.ALMOST_EMPTY
    out[free_slots == 0] = OccupancyLevel.FULL
    out[bikes == 0] = OccupancyLevel.EMPTY
    return out


def classify_count(predicted_bikes: float, capacity: int) -> OccupancyLevel:
    """Classify a numeric bike forecast: round, clamp to [0, capacity], discretize."""
    capacity = int(capacity)
    if capacity < 1:
        raise ValueError(f"capacity must be >= 1, got {capacity}")
    # round half away from zero, not banker's rounding
    value = float(predicted_bikes)
    rounded = int(np.floor(abs(value) + 0.5)) * (1 if value >= 0 else -1)
    bikes = min(max(rounded, 0), capacity)
    return discretize(bikes, capacity - bikes)


_STRICT = frozenset({OccupancyLevel.FULL, OccupancyLevel.EMPTY})
_FLEXIBLE = frozenset(
    {
        OccupancyLevel.FULL,
        OccupancyLevel.ALMOST_FULL,
        OccupancyLevel.EMPTY,
        OccupancyLevel.ALMOST_EMPTY,
    }
)


def is_positive(level: OccupancyLevel, criterion: Criterion | str) -> bool:
    criterion = Criterion(criterion)
    if criterion is Criterion.STRICT:
        return level in _STRICT
    return level in _FLEXIBLE


def is_critical(level: OccupancyLevel) -> bool:
    return level in _STRICT


# ---------------------------------------------------------------- time helpers


def parse_instant(text: str) -> dt.datetime:
    """Parse an RFC 3339 timestamp into an aware UTC datetime."""
    text = text.strip()
    if text.endswith("Z") or text.endswith("z"):
        text = text[:-1] + "+00:00"
    value = dt.datetime.fromisoformat(text)
    if value.tzinfo is None:
        raise ValueError(f"timestamp without offset: {text!r}")
    return value.astimezone(UTC)


def format_instant(value: dt.datetime) -> str:
    return as_utc(value).strftime("%Y-%m-%dT%H:%M:%SZ")


def as_utc(value: dt.datetime) -> dt.datetime:
    if value.tzinfo is None:
        raise ValueError("naive datetime; pass an aware UTC instant")
    return value.astimezone(UTC).replace(microsecond=0)


def to_epoch(value: dt.datetime) -> int:
    return int(as_utc(value).timestamp())


def from_epoch(seconds: int) -> dt.datetime:
    return dt.datetime.fromtimestamp(int(seconds), tz=UTC)


def on_quarter_grid(value: dt.datetime) -> bool:
    return to_epoch(value) % QUARTER_HOUR == 0


def epoch_strings(seconds: np.ndarray) -> np.ndarray:
    """RFC 3339 strings for an array of epoch seconds."""
    stamps = np.asarray(seconds, dtype=np.int64).astype("datetime64[s]")
    return np.char.add(np.datetime_as_string(stamps, unit="s"), "Z")


# ---------------------------------------------------------------- domain types


@dataclass(frozen=True, slots=True)
class StationSnapshot:
    station_id: int
    timestamp: dt.datetime
    bikes: int
    free_slots: int
    operational: bool
    latitude: float
    longitude: float
    elevation_m: Optional[float] = None

    def __post_init__(self) -> None:
        if self.bikes < 0 or self.free_slots < 0:
            raise ValueError("bikes and free_slots must be non-negative")
        object.__setattr__(self, "timestamp", as_utc(self.timestamp))

    @property
    def capacity(self) -> int:
        return self.bikes + self.free_slots

    @property
    def level(self) -> OccupancyLevel:
        return discretize(self.bikes, self.free_slots)


@dataclass(frozen=True, slots=True)
class WeatherRecord:
    timestamp: dt.datetime
    temperature_c: float
    relative_humidity_pct: float
    dew_point_c: float
    wind_speed_kmh: float
    is_forecast: bool
    issued_at: dt.datetime

    def __post_init__(self) -> None:
        object.__setattr__(self, "timestamp", as_utc(self.timestamp))
        object.__setattr__(self, "issued_at", as_utc(self.issued_at))
        if not 0.0 <= self.relative_humidity_pct <= 100.0:
            raise ValueError(f"relative humidity {self.relative_humidity_pct} outside [0, 100]")
        if self.wind_speed_kmh < 0:
            raise ValueError(f"negative wind speed {self.wind_speed_kmh}")
        lead = (self.timestamp - self.issued_at).total_seconds()
        if self.is_forecast:
            if not 0 <= lead <= MAX_HORIZON_S:
                raise ValueError(f"forecast lead time {lead / 3600:.2f} h outside [0, 72] h")
        elif lead != 0:
            raise ValueError("historical record must have issued_at == timestamp")


@dataclass(frozen=True)
class HolidayCalendar:
    """Set of city-local civil dates that are holidays. Lookup is total."""

    dates: frozenset[dt.date] = frozenset()

    @classmethod
    def of(cls, dates: Iterable[dt.date]) -> "HolidayCalendar":
        return cls(frozenset(dates))

    def is_holiday(self, day: dt.date) -> bool:
        return day in self.dates

    __contains__ = is_holiday

    def __len__(self) -> int:
        return len(self.dates)

    def ordinals(self) -> np.ndarray:
        """Proleptic ordinals of the holiday dates, sorted (for vectorized lookup)."""
        return np.array(sorted(d.toordinal() for d in self.dates), dtype=np.int64)


@dataclass(frozen=True, slots=True)
class PredictionRecord:
    station_id: int
    made_at: dt.datetime
    target_time: dt.datetime
    predicted: OccupancyLevel
    method: Method

    def __post_init__(self) -> None:
        object.__setattr__(self, "made_at", as_utc(self.made_at))
        object.__setattr__(self, "target_time", as_utc(self.target_time))
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "predicted", OccupancyLevel(self.predicted))
        lead = (self.target_time - self.made_at).total_seconds()
        if not 0 <= lead <= MAX_HORIZON_S:
            raise ValueError(f"prediction lead {lead / 3600:.2f} h outside [0, 72] h")
        if to_epoch(self.target_time) % QUARTER_HOUR:
            raise ValueError("target_time must lie on the 15-minute grid")

    @property
    def age_hours(self) -> float:
        return (self.target_time - self.made_at).total_seconds() / 3600.0


# ---------------------------------------------------------------- randomness


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    """Independent PCG64 stream for ``(seed, *keys)``.

    Streams come from ``SeedSequence(seed, spawn_key=keys)``, so e.g. tree ``i``
    of a forest gets the same stream whether trees are built serially or in
    parallel.
    """
    if seed < 0 or any(k < 0 for k in keys):
        raise ValueError("seed and stream keys must be non-negative")
    sequence = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(sequence))


# ---------------------------------------------------------------- local calendar

_EPOCH_ORDINAL = dt.date(1970, 1, 1).toordinal()


def local_fields(epochs: np.ndarray, tz: str = "UTC") -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(minute_of_day, day_of_week with Monday=0, local date ordinal) per instant."""
    t = np.asarray(epochs, dtype=np.int64)
    if tz in ("UTC", "Etc/UTC"):
        days = np.floor_divide(t, 86400)
        minute = np.floor_divide(t - days * 86400, 60)
        return minute, (days + 3) % 7, days + _EPOCH_ORDINAL
    import pandas as pd

    local = pd.to_datetime(t, unit="s", utc=True).tz_convert(tz).tz_localize(None)
    naive = local.to_numpy(dtype="datetime64[s]").astype(np.int64)
    days = np.floor_divide(naive, 86400)
    minute = np.floor_divide(naive - days * 86400, 60)
    return minute, (days + 3) % 7, days + _EPOCH_ORDINAL


def local_midnight(day: dt.date, tz: str = "UTC") -> int:
    """Epoch seconds of 00:00 city-local time on ``day``."""
    from zoneinfo import ZoneInfo

    return to_epoch(dt.datetime(day.year, day.month, day.day, tzinfo=ZoneInfo(tz)))
