import datetime as dt
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from occforecast.ingest import load_weather, parse_holidays  # noqa: E402
from occforecast.synth import bundled_scenario, generate_scenario, scenario_from_text  # noqa: E402

SMALL_SCENARIO = """
start = 2014-01-06
weeks = 56
cadence_minutes = 15
timezone = UTC
holidays = 2014-01-06, 2015-01-06
stations = 7, 8

station.7.capacity = 20
station.7.curve = 00:00=1.0, 07:00=1.0, 09:00=0.0, 17:00=0.0, 20:00=1.0
station.7.noise_sd = 1.0

station.8.capacity = 24
station.8.curve = 00:00=0.5
station.8.humidity_coeff = 0.5
station.8.noise_sd = 1.0

weather.relative_humidity_pct.diurnal = 00:00=60
weather.relative_humidity_pct.reference = 60
weather.relative_humidity_pct.random_sd = 12
weather.relative_humidity_pct.knot_hours = 3
weather.relative_humidity_pct.forecast_error_sd_per_day = 3
"""

# build days of the small corpus: the year-ago window is covered from 2015-01-20
SMALL_DAYS = (dt.date(2015, 1, 26), dt.date(2015, 1, 27))


class Corpus:
    def __init__(self, root: Path):
        self.root = root
        from occforecast.ingest import SnapshotStore

        self.store = SnapshotStore(root)
        self.weather = load_weather(root / "weather.csv")
        self.holidays = parse_holidays(root / "holidays.txt")


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory) -> Corpus:
    root = tmp_path_factory.mktemp("small")
    generate_scenario(scenario_from_text(SMALL_SCENARIO, seed=3), root)
    return Corpus(root)


@pytest.fixture(scope="session")
def city_corpus(tmp_path_factory) -> Corpus:
    """The bundled four-station scenario at seed 7."""
    root = tmp_path_factory.mktemp("city")
    generate_scenario(scenario_from_text(bundled_scenario("four_stations"), seed=7), root)
    return Corpus(root)


# acceptance verdicts, filled by test_acceptance and echoed after the run
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def record(criterion: str, passed: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (passed, detail)
    print(f"{criterion} {'PASS' if passed else 'FAIL'} {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"{name} {'PASS' if passed else 'FAIL'} {detail}")
