"""Synthetic multi-station corpora with planted structure.

Bikes at minute ``t`` follow

    clamp(round(curve[slot(t)] * day_scale(t) * holiday_scale(t)
                + sum_v coeff_v * (weather_v(t) - reference_v) + eps), 0, capacity)

with ``eps ~ N(0, noise_sd)``. Weather variables are piecewise-linear: a
periodic diurnal profile, plus a seeded random spline, plus explicit
rectangular spikes. Dew point is derived from temperature and humidity.
Forecasts are issued daily at local midnight for leads 0..72 h and carry
Gaussian error whose standard deviation grows linearly with the lead.

Scenario config keys (flat ``key = value``)::

    start = 2014-01-06             local date the corpus starts (00:00)
    weeks = 60                     corpus length
    cadence_minutes = 1
    timezone = UTC
    seed = 7                       optional; the CLI --seed overrides it
    holidays = 2014-01-01, 2014-01-06
    stations = 50, 124
    feed_outages = 2014-03-01T10:00:00Z/2 ; ...          instant/hours, no rows at all
    station.<id>.capacity = 24
    station.<id>.curve = 00:00=0.9, 07:00=0.9, 09:00=0.0  fraction of capacity, periodic
    station.<id>.weekday_scale / weekend_scale / holiday_scale
    station.<id>.humidity_coeff / temperature_coeff / wind_coeff
    station.<id>.noise_sd
    station.<id>.lat / lon / elevation_m
    station.<id>.closures = 2014-05-02T08:00:00Z/6        rows flagged CLS
    weather.<var>.diurnal = 00:00=8, 14:00=16            var in temperature_c,
    weather.<var>.reference = 12                          relative_humidity_pct,
    weather.<var>.random_sd = 3                           wind_speed_kmh
    weather.<var>.knot_hours = 12
    weather.<var>.spikes = 2015-02-07T06:00:00Z/12/+35 ; ...   instant/hours/delta
    weather.<var>.forecast_error_sd_per_day = 4
"""

from __future__ import annotations

import datetime as dt
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .config import parse_flat, read_flat, split_list
from .core import (
    MAX_HORIZON_S,
    DataError,
    HolidayCalendar,
    derive_rng,
    epoch_strings,
    local_fields,
    local_midnight,
    parse_instant,
    to_epoch,
)
from .ingest import WEATHER_HEADER, SnapshotStore, write_holidays

SLOTS_PER_DAY = 96
WEATHER_VARS = ("temperature_c", "relative_humidity_pct", "wind_speed_kmh")
_WEATHER_STREAM = 1 << 20  # keeps weather streams apart from station ids


@dataclass(frozen=True)
class StationProfile:
    station_id: int
    capacity: int
    base_curve: tuple[float, ...]
    weekday_scale: float = 1.0
    weekend_scale: float = 1.0
    humidity_coeff: float = 0.0
    temperature_coeff: float = 0.0
    wind_coeff: float = 0.0
    holiday_scale: float = 1.0
    noise_sd: float = 0.0
    seed: int = 0
    latitude: float = 41.3851
    longitude: float = 2.1734
    elevation_m: Optional[float] = None
    closures: tuple[tuple[int, int], ...] = ()

    def validate(self) -> None:
        if self.capacity < 1:
            raise ValueError(f"station {self.station_id}: capacity must be >= 1")
        if len(self.base_curve) != SLOTS_PER_DAY:
            raise ValueError(f"station {self.station_id}: base_curve needs {SLOTS_PER_DAY} values")
        curve = np.asarray(self.base_curve, dtype=float)
        if np.any(curve < 0) or np.any(curve > self.capacity):
            raise ValueError(f"station {self.station_id}: base_curve outside [0, capacity]")
        if self.noise_sd < 0:
            raise ValueError(f"station {self.station_id}: noise_sd must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"station {self.station_id}: seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class WeatherVariable:
    diurnal: tuple[tuple[float, float], ...] = ((0.0, 0.0),)  # (hour of day, value)
    reference: float = 0.0
    random_sd: float = 0.0
    knot_hours: float = 12.0
    spikes: tuple[tuple[int, int, float], ...] = ()  # (start epoch, duration s, delta)
    forecast_error_sd_per_day: float = 0.0


@dataclass(frozen=True)
class WeatherScenario:
    variables: Mapping[str, WeatherVariable] = field(default_factory=dict)
    seed: int = 0
    timezone: str = "UTC"

    def variable(self, name: str) -> WeatherVariable:
        default = {"relative_humidity_pct": 60.0, "temperature_c": 12.0, "wind_speed_kmh": 10.0}
        return self.variables.get(name, WeatherVariable(diurnal=((0.0, default[name]),)))


@dataclass(frozen=True)
class Scenario:
    profiles: tuple[StationProfile, ...]
    weather: WeatherScenario
    holidays: HolidayCalendar
    start: int
    end: int
    cadence_minutes: int = 1
    timezone: str = "UTC"
    feed_outages: tuple[tuple[int, int], ...] = ()


@dataclass(frozen=True)
class GeneratedCorpus:
    root: Path

    @property
    def store(self) -> SnapshotStore:
        return SnapshotStore(self.root)

    @property
    def weather_path(self) -> Path:
        return self.root / "weather.csv"

    @property
    def holidays_path(self) -> Path:
        return self.root / "holidays.txt"


# ---------------------------------------------------------------- curves


def _parse_knots(text: str) -> list[tuple[float, float]]:
    knots = []
    for item in split_list(text):
        at, value = item.split("=")
        hh, _, mm = at.strip().partition(":")
        knots.append((int(hh) + int(mm or 0) / 60.0, float(value)))
    if not knots:
        raise ValueError("empty knot list")
    return sorted(knots)


def periodic_interp(hours: np.ndarray, knots: Sequence[tuple[float, float]]) -> np.ndarray:
    """Piecewise-linear, 24 h periodic interpolation through (hour, value) knots."""
    xs = np.array([k[0] for k in knots], dtype=float)
    ys = np.array([k[1] for k in knots], dtype=float)
    return np.interp(np.mod(hours, 24.0), xs, ys, period=24.0)


def curve_from_knots(knots: Sequence[tuple[float, float]], capacity: int) -> tuple[float, ...]:
    """96-slot mean-bike curve from capacity fractions at (hour, fraction) knots."""
    hours = np.arange(SLOTS_PER_DAY) / 4.0
    fractions = np.clip(periodic_interp(hours, knots), 0.0, 1.0)
    return tuple(float(v) for v in fractions * capacity)


# ---------------------------------------------------------------- weather


def _dew_point(temp_c: np.ndarray, rh_pct: np.ndarray) -> np.ndarray:
    a, b = 17.62, 243.12  # Magnus coefficients over water
    gamma = np.log(np.maximum(rh_pct, 1e-3) / 100.0) + a * temp_c / (b + temp_c)
    return b * gamma / (a - gamma)


def _clip_weather(name: str, values: np.ndarray) -> np.ndarray:
    if name == "relative_humidity_pct":
        return np.clip(values, 0.0, 100.0)
    if name == "wind_speed_kmh":
        return np.maximum(values, 0.0)
    return values


class WeatherTruth:
    """Evaluates the true weather of a scenario at arbitrary instants."""

    def __init__(self, scenario: WeatherScenario, start: int, end: int):
        self.scenario = scenario
        self.start = start
        self._random: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        horizon_end = end + MAX_HORIZON_S
        for k, name in enumerate(WEATHER_VARS):
            var = scenario.variable(name)
            step = max(1, int(var.knot_hours * 3600))
            knots_t = np.arange(start - step, horizon_end + 2 * step, step, dtype=np.int64)
            rng = derive_rng(scenario.seed, _WEATHER_STREAM, k)
            knots_v = rng.normal(0.0, 1.0, len(knots_t)) * var.random_sd
            self._random[name] = (knots_t, knots_v)

    def raw(self, name: str, epochs: np.ndarray) -> np.ndarray:
        var = self.scenario.variable(name)
        t = np.asarray(epochs, dtype=np.int64)
        minute, _, _ = local_fields(t, self.scenario.timezone)
        values = periodic_interp(minute / 60.0, var.diurnal)
        knots_t, knots_v = self._random[name]
        values = values + np.interp(t, knots_t, knots_v)
        for s, dur, delta in var.spikes:
            values = values + np.where((t >= s) & (t < s + dur), delta, 0.0)
        return _clip_weather(name, values)

    def all(self, epochs: np.ndarray) -> dict[str, np.ndarray]:
        out = {name: self.raw(name, epochs) for name in WEATHER_VARS}
        out["dew_point_c"] = _dew_point(out["temperature_c"], out["relative_humidity_pct"])
        return out


def _weather_lines(ts: np.ndarray, issued: np.ndarray, values: dict, is_forecast: bool) -> list[str]:
    t_s = epoch_strings(ts)
    i_s = epoch_strings(issued)
    flag = "true" if is_forecast else "false"
    cols = [values[n] for n in ("temperature_c", "relative_humidity_pct", "dew_point_c", "wind_speed_kmh")]
    return [
        f"{t_s[i]},{i_s[i]},{cols[0][i]:.2f},{cols[1][i]:.2f},{cols[2][i]:.2f},{cols[3][i]:.2f},{flag}"
        for i in range(len(ts))
    ]


def generate_weather(scenario: WeatherScenario, start: int, end: int, path: Path) -> None:
    truth = WeatherTruth(scenario, start, end)
    first_hour = -(-start // 3600) * 3600
    hist_t = np.arange(first_hour, end, 3600, dtype=np.int64)
    hist = truth.all(hist_t)
    rows = list(zip(hist_t.tolist(), hist_t.tolist(), _weather_lines(hist_t, hist_t, hist, False)))

    rng = derive_rng(scenario.seed, _WEATHER_STREAM, len(WEATHER_VARS))
    leads = np.arange(0, MAX_HORIZON_S + 1, 3600, dtype=np.int64)
    day = dt.datetime.fromtimestamp(start, dt.timezone.utc).date() - dt.timedelta(days=1)
    while True:
        issue = local_midnight(day, scenario.timezone)
        day += dt.timedelta(days=1)
        if issue >= end:
            break
        if issue < start:
            continue
        ts = issue + leads
        fc = {}
        for name in WEATHER_VARS:
            sd = scenario.variable(name).forecast_error_sd_per_day * leads / 86400.0
            fc[name] = _clip_weather(name, truth.raw(name, ts) + rng.normal(0.0, 1.0, len(ts)) * sd)
        fc["dew_point_c"] = _dew_point(fc["temperature_c"], fc["relative_humidity_pct"])
        issued = np.full(len(ts), issue, dtype=np.int64)
        rows.extend(zip(ts.tolist(), issued.tolist(), _weather_lines(ts, issued, fc, True)))
    rows.sort(key=lambda r: (r[0], r[1], r[2].endswith("true")))
    with open(path, "w") as handle:
        handle.write(WEATHER_HEADER + "\n")
        handle.writelines(r[2] + "\n" for r in rows)


# ---------------------------------------------------------------- snapshots


def station_series(
    profile: StationProfile, scenario: Scenario, truth: WeatherTruth
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(timestamps, bikes, operational) for one station over the scenario window."""
    step = scenario.cadence_minutes * 60
    ts = np.arange(scenario.start, scenario.end, step, dtype=np.int64)
    keep = np.ones(len(ts), dtype=bool)
    for s, dur in scenario.feed_outages:
        keep &= ~((ts >= s) & (ts < s + dur))
    ts = ts[keep]
    minute, dow, ordinal = local_fields(ts, scenario.timezone)
    curve = np.asarray(profile.base_curve, dtype=float)
    mean = curve[minute // 15]
    mean = mean * np.where(dow >= 5, profile.weekend_scale, profile.weekday_scale)
    holiday = np.isin(ordinal, scenario.holidays.ordinals())
    mean = mean * np.where(holiday, profile.holiday_scale, 1.0)
    for name, coeff in (
        ("relative_humidity_pct", profile.humidity_coeff),
        ("temperature_c", profile.temperature_coeff),
        ("wind_speed_kmh", profile.wind_coeff),
    ):
        if coeff:
            ref = scenario.weather.variable(name).reference
            mean = mean + coeff * (truth.raw(name, ts) - ref)
    rng = derive_rng(profile.seed, profile.station_id)
    noise = rng.normal(0.0, 1.0, len(ts)) * profile.noise_sd
    bikes = np.clip(np.floor(mean + noise + 0.5), 0, profile.capacity).astype(np.int64)
    operational = np.ones(len(ts), dtype=bool)
    for s, dur in profile.closures:
        operational &= ~((ts >= s) & (ts < s + dur))
    return ts, bikes, operational


def generate(
    profiles: Sequence[StationProfile],
    weather_scenario: WeatherScenario,
    holidays: HolidayCalendar,
    window: tuple[int, int],
    out_dir: str | os.PathLike,
    *,
    cadence_minutes: int = 1,
    timezone: str = "UTC",
    feed_outages: Sequence[tuple[int, int]] = (),
) -> GeneratedCorpus:
    """Write station partitions, ``weather.csv`` and ``holidays.txt`` under ``out_dir``.

    Every profile is validated before anything is written.
    """
    for profile in profiles:
        profile.validate()
    ids = [p.station_id for p in profiles]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate station ids in profiles")
    start, end = (int(w) for w in window)
    if end <= start:
        raise ValueError("empty window")
    if cadence_minutes < 1:
        raise ValueError("cadence_minutes must be >= 1")
    scenario = Scenario(
        tuple(profiles), weather_scenario, holidays, start, end,
        cadence_minutes, timezone, tuple(feed_outages),
    )
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    truth = WeatherTruth(weather_scenario, start, end)
    store = SnapshotStore(root)
    for profile in profiles:
        ts, bikes, ops = station_series(profile, scenario, truth)
        store.append_arrays(
            profile.station_id, ts, bikes, profile.capacity - bikes, ops,
            profile.latitude, profile.longitude, profile.elevation_m,
        )
    generate_weather(weather_scenario, start, end, root / "weather.csv")
    write_holidays(holidays, root / "holidays.txt")
    return GeneratedCorpus(root)


def generate_scenario(scenario: Scenario, out_dir: str | os.PathLike) -> GeneratedCorpus:
    return generate(
        scenario.profiles, scenario.weather, scenario.holidays, (scenario.start, scenario.end),
        out_dir, cadence_minutes=scenario.cadence_minutes, timezone=scenario.timezone,
        feed_outages=scenario.feed_outages,
    )


# ---------------------------------------------------------------- config


def _intervals(text: str) -> tuple[tuple[int, int], ...]:
    out = []
    for item in split_list(text, ";"):
        at, hours = item.rsplit("/", 1)
        out.append((to_epoch(parse_instant(at)), int(round(float(hours) * 3600))))
    return tuple(out)


def _spikes(text: str) -> tuple[tuple[int, int, float], ...]:
    out = []
    for item in split_list(text, ";"):
        at, hours, delta = item.rsplit("/", 2)
        out.append((to_epoch(parse_instant(at)), int(round(float(hours) * 3600)), float(delta)))
    return tuple(out)


def scenario_from_config(values: Mapping[str, str], seed: Optional[int] = None) -> Scenario:
    """Build a :class:`Scenario` from parsed config keys (see module docstring)."""
    known_top = {"start", "weeks", "cadence_minutes", "timezone", "seed", "holidays",
                 "stations", "feed_outages"}
    try:
        if seed is None:
            seed = int(values.get("seed", "0"))
        tz = values.get("timezone", "UTC")
        start_day = dt.date.fromisoformat(values["start"])
        weeks = int(values.get("weeks", "60"))
        start = local_midnight(start_day, tz)
        end = local_midnight(start_day + dt.timedelta(weeks=weeks), tz)
        holidays = HolidayCalendar.of(
            dt.date.fromisoformat(d) for d in split_list(values.get("holidays", ""))
        )
        station_ids = [int(s) for s in split_list(values["stations"])]
        profiles = []
        for sid in station_ids:
            pre = f"station.{sid}."
            get = lambda k, d=None: values.get(pre + k, d)  # noqa: E731
            capacity = int(get("capacity"))
            profiles.append(
                StationProfile(
                    station_id=sid,
                    capacity=capacity,
                    base_curve=curve_from_knots(_parse_knots(get("curve", "00:00=0.5")), capacity),
                    weekday_scale=float(get("weekday_scale", 1.0)),
                    weekend_scale=float(get("weekend_scale", 1.0)),
                    humidity_coeff=float(get("humidity_coeff", 0.0)),
                    temperature_coeff=float(get("temperature_coeff", 0.0)),
                    wind_coeff=float(get("wind_coeff", 0.0)),
                    holiday_scale=float(get("holiday_scale", 1.0)),
                    noise_sd=float(get("noise_sd", 0.0)),
                    seed=seed,
                    latitude=float(get("lat", 41.3851)),
                    longitude=float(get("lon", 2.1734)),
                    elevation_m=float(get("elevation_m")) if get("elevation_m") else None,
                    closures=_intervals(get("closures", "")),
                )
            )
        variables = {}
        for name in WEATHER_VARS:
            pre = f"weather.{name}."
            if not any(k.startswith(pre) for k in values):
                continue
            default = WeatherScenario().variable(name)
            variables[name] = WeatherVariable(
                diurnal=tuple(_parse_knots(values[pre + "diurnal"])) if pre + "diurnal" in values else default.diurnal,
                reference=float(values.get(pre + "reference", 0.0)),
                random_sd=float(values.get(pre + "random_sd", 0.0)),
                knot_hours=float(values.get(pre + "knot_hours", 12.0)),
                spikes=_spikes(values.get(pre + "spikes", "")),
                forecast_error_sd_per_day=float(values.get(pre + "forecast_error_sd_per_day", 0.0)),
            )
        for key in values:
            head = key.split(".", 1)[0]
            if head not in ("station", "weather") and key not in known_top:
                raise DataError(f"unknown scenario key {key!r}")
        return Scenario(
            profiles=tuple(profiles),
            weather=WeatherScenario(variables, seed=seed, timezone=tz),
            holidays=holidays,
            start=start,
            end=end,
            cadence_minutes=int(values.get("cadence_minutes", "1")),
            timezone=tz,
            feed_outages=_intervals(values.get("feed_outages", "")),
        )
    except KeyError as exc:
        raise DataError(f"missing scenario key {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise DataError(f"bad scenario value: {exc}") from None


def load_scenario(path: str | os.PathLike, seed: Optional[int] = None) -> Scenario:
    return scenario_from_config(read_flat(path), seed)


def scenario_from_text(text: str, seed: Optional[int] = None) -> Scenario:
    return scenario_from_config(parse_flat(text), seed)


def bundled_scenario(name: str) -> str:
    """Text of a scenario shipped with the package (e.g. ``"four_stations"``)."""
    from importlib import resources

    return resources.files("occforecast.scenarios").joinpath(f"{name}.cfg").read_text()
