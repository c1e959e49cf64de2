import datetime as dt
import math

import pytest

from occforecast.core import DataError, HolidayCalendar, OccupancyLevel, discretize_array, to_epoch
from occforecast.ingest import SnapshotStore, load_weather, resample
from occforecast.synth import (
    StationProfile,
    WeatherScenario,
    WeatherVariable,
    bundled_scenario,
    generate,
    generate_scenario,
    scenario_from_text,
)

START = to_epoch(dt.datetime(2015, 2, 2, tzinfo=dt.timezone.utc))
DAY = 86400


def expected_count(mean: float, sd: float, capacity: int) -> float:
    """E[clamp(round(mean + N(0, sd)), 0, capacity)] by summing over outcomes."""
    cdf = lambda x: 0.5 * (1 + math.erf((x - mean) / (sd * math.sqrt(2))))  # noqa: E731
    total = 0.0
    for k in range(capacity + 1):
        lo = -math.inf if k == 0 else k - 0.5
        hi = math.inf if k == capacity else k + 0.5
        p_lo = 0.0 if lo == -math.inf else cdf(lo)
        p_hi = 1.0 if hi == math.inf else cdf(hi)
        total += k * (p_hi - p_lo)
    return total


def test_constant_profile_is_available_everywhere(tmp_path):
    profile = StationProfile(1, 24, (12.0,) * 96, seed=1)
    generate([profile], WeatherScenario(), HolidayCalendar(), (START, START + 2 * DAY), tmp_path)
    snaps = SnapshotStore(tmp_path).load(1)
    assert len(snaps) == 2 * 1440
    assert set(snaps.bikes.tolist()) == {12}
    assert set(discretize_array(snaps.bikes, snaps.free_slots).tolist()) == {OccupancyLevel.AVAILABLE}


def test_humidity_spike_dips_bikes(tmp_path):
    spike_start, hours, delta, coeff, sd = START + DAY + 6 * 3600, 12, 20.0, -0.3, 2.0
    weather = WeatherScenario(
        {
            "relative_humidity_pct": WeatherVariable(
                diurnal=((0.0, 60.0),), reference=60.0, spikes=((spike_start, hours * 3600, delta),)
            )
        },
        seed=5,
    )
    profile = StationProfile(1, 24, (15.0,) * 96, humidity_coeff=coeff, noise_sd=sd, seed=5)
    generate([profile], weather, HolidayCalendar(), (START, START + 3 * DAY), tmp_path)
    snaps = SnapshotStore(tmp_path).load(1)
    inside = (snaps.timestamps >= spike_start) & (snaps.timestamps < spike_start + hours * 3600)
    n = int(inside.sum())
    assert n == hours * 60
    expected = expected_count(15.0 + coeff * delta, sd, 24)
    assert abs(snaps.bikes[inside].mean() - expected) <= 3 * sd / math.sqrt(n)
    outside = expected_count(15.0, sd, 24)
    assert abs(snaps.bikes[~inside].mean() - outside) <= 3 * sd / math.sqrt(int((~inside).sum()))


def test_same_seed_byte_identical(tmp_path):
    text = bundled_scenario("four_stations").replace("weeks = 60", "weeks = 2")
    generate_scenario(scenario_from_text(text, seed=11), tmp_path / "a")
    generate_scenario(scenario_from_text(text, seed=11), tmp_path / "b")
    generate_scenario(scenario_from_text(text, seed=12), tmp_path / "c")
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*.csv"))
    assert files
    for rel in files + [p.relative_to(tmp_path / "a") for p in (tmp_path / "a").glob("*.txt")]:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()
    assert (tmp_path / "a/weather.csv").read_bytes() != (tmp_path / "c/weather.csv").read_bytes()


def test_output_passes_verify_and_parses(small_corpus):
    assert small_corpus.store.verify() == []
    assert small_corpus.store.stations() == [7, 8]
    forecasts = small_corpus.weather.forecasts()
    lead = forecasts.timestamps - forecasts.issued_at
    assert lead.min() == 0 and lead.max() == 72 * 3600
    assert len(small_corpus.holidays) == 2


def test_invalid_profile_rejected_before_writing(tmp_path):
    bad = StationProfile(1, 10, (11.0,) * 96)
    good = StationProfile(2, 10, (5.0,) * 96)
    out = tmp_path / "out"
    with pytest.raises(ValueError):
        generate([good, bad], WeatherScenario(), HolidayCalendar(), (START, START + DAY), out)
    assert not out.exists()
    with pytest.raises(ValueError):
        StationProfile(1, 10, (5.0,) * 96, noise_sd=-1).validate()


def test_config_errors():
    with pytest.raises(DataError):
        scenario_from_text("start = 2015-01-01\nstations = 1\nstation.1.capacity = 10\nbogus = 1\n")
    with pytest.raises(DataError):
        scenario_from_text("stations = 1\n")


def test_feed_outages_and_closures(tmp_path):
    text = (
        "start = 2015-02-02\nweeks = 1\nstations = 3\nstation.3.capacity = 10\n"
        "feed_outages = 2015-02-03T10:00:00Z/2\n"
        "station.3.closures = 2015-02-04T10:00:00Z/1\n"
    )
    generate_scenario(scenario_from_text(text, seed=1), tmp_path)
    store = SnapshotStore(tmp_path)
    day2 = START + DAY
    series = resample(store, 3, day2 + 9 * 3600, day2 + 13 * 3600)
    assert (~series.observed).sum() == 6
    closed = resample(store, 3, day2 + DAY + 10 * 3600, day2 + DAY + 11 * 3600)
    assert not closed.observed.any()
    weather = load_weather(tmp_path / "weather.csv")
    assert len(weather.history()) == 7 * 24
