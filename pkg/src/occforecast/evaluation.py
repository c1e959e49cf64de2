"""Rolling daily-build protocol and its scoring.

Each build day ``D`` fixes ``t_build`` at local midnight. Every requested
method is trained on data visible at ``t_build`` only and predicts the 288
quarter-hour instants in ``(t_build, t_build + 72 h]``.

Scoring puts every (prediction, observed truth) pair into exactly one of
tp/fp/tn/fn. A pair is predicted-positive when its predicted level is
positive under the criterion (strict: Full/Empty; flexible: also the two
"almost" levels). Truth is positive when it is Full or Empty. A
predicted-positive pair is a tp only if the truth is critical and on the
same side; with ``any_side`` any critical truth will do. Rates are

    sensitivity_literal  = tp / (tp + fp)     (predicted positives)
    specificity_literal  = tn / (tn + fn)     (predicted negatives)
    standard_recall      = tp / (tp + fn)
    standard_specificity = tn / (tn + fp)

and a zero denominator yields ``None`` (written as ``undefined``).
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import logging
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from . import arima as arima_mod
from . import forest as forest_mod
from .core import (
    N_LEVELS,
    QUARTER_HOUR,
    Criterion,
    DataError,
    HolidayCalendar,
    Method,
    OccupancyLevel,
    PredictionRecord,
    discretize_array,
    from_epoch,
    is_positive,
    local_midnight,
    parse_instant,
    to_epoch,
)
from .features import (
    PredictorSet,
    SamplerShortfallWarning,
    SamplerSpec,
    build_prediction_rows,
    rows_from_series,
    training_rows,
)
from .ingest import ResampledSeries, SnapshotStore, WeatherTable, resample

log = logging.getLogger(__name__)

HORIZON_STEPS = 288
DAY = 86400
AGE_BUCKETS: tuple[tuple[str, float, float], ...] = (
    ("0-24h", 0.0, 24.0),
    ("24-48h", 24.0, 48.0),
    ("48-72h", 48.0, 72.0),
)
ALL_BUCKET = "all"
REPORT_HEADER = "station,method,criterion,age_bucket,metric,value,n"
PREDICTIONS_HEADER = "station,made_at,target_time,method,predicted"
DURABILITY_HEADER = "age_bucket,method,metric,value"
METRICS = (
    "accuracy_critical",
    "accuracy_overall",
    "sensitivity_literal",
    "specificity_literal",
    "standard_recall",
    "standard_specificity",
)
_METHOD_ORDER = {m: i for i, m in enumerate(Method)}


# ---------------------------------------------------------------- confusion


def outcome_table(criterion: Criterion | str, any_side: bool = False) -> np.ndarray:
    """5x5 table of outcome codes indexed ``[truth, predicted]``.

    Codes: 0 tp, 1 fp, 2 tn, 3 fn.
    """
    criterion = Criterion(criterion)
    full_side = {OccupancyLevel.FULL, OccupancyLevel.ALMOST_FULL}
    table = np.empty((N_LEVELS, N_LEVELS), dtype=np.int8)
    for truth in OccupancyLevel:
        critical = truth in (OccupancyLevel.FULL, OccupancyLevel.EMPTY)
        for pred in OccupancyLevel:
            if is_positive(pred, criterion):
                same_side = (pred in full_side) == (truth is OccupancyLevel.FULL)
                hit = critical and (any_side or same_side)
                table[truth, pred] = 0 if hit else 1
            else:
                table[truth, pred] = 3 if critical else 2
    return table


@dataclass(frozen=True)
class Confusion:
    """Binary counts against one criterion plus the 5x5 ``[truth, predicted]`` matrix."""

    tp: int
    fp: int
    tn: int
    fn: int
    matrix: np.ndarray
    excluded: int = 0  # predictions whose truth cell was unobserved

    @classmethod
    def from_matrix(
        cls, matrix: np.ndarray, criterion: Criterion | str, any_side: bool = False, excluded: int = 0
    ) -> "Confusion":
        matrix = np.asarray(matrix, dtype=np.int64)
        codes = outcome_table(criterion, any_side)
        counts = [int(matrix[codes == k].sum()) for k in range(4)]
        return cls(*counts, matrix=matrix, excluded=int(excluded))

    @classmethod
    def of(
        cls,
        predicted: Sequence[int],
        truth: Sequence[int],
        criterion: Criterion | str,
        any_side: bool = False,
    ) -> "Confusion":
        p = np.asarray(predicted, dtype=np.int64)
        t = np.asarray(truth, dtype=np.int64)
        if p.shape != t.shape:
            raise ValueError("predicted and truth lengths differ")
        matrix = np.bincount(t * N_LEVELS + p, minlength=N_LEVELS * N_LEVELS)
        return cls.from_matrix(matrix.reshape(N_LEVELS, N_LEVELS), criterion, any_side)

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other: "Confusion") -> "Confusion":
        return Confusion(
            self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn,
            self.matrix + other.matrix, self.excluded + other.excluded,
        )

    def rates(self) -> dict[str, tuple[Optional[float], int]]:
        """metric -> (value or None when undefined, denominator)."""
        m = self.matrix
        critical = (int(OccupancyLevel.EMPTY), int(OccupancyLevel.FULL))
        crit_total = int(m[list(critical)].sum())
        crit_hit = int(sum(m[c, c] for c in critical))
        ratio = lambda a, b: (a / b if b else None, b)  # noqa: E731
        return {
            "accuracy_critical": ratio(crit_hit, crit_total),
            "accuracy_overall": ratio(int(np.trace(m)), int(m.sum())),
            "sensitivity_literal": ratio(self.tp, self.tp + self.fp),
            "specificity_literal": ratio(self.tn, self.tn + self.fn),
            "standard_recall": ratio(self.tp, self.tp + self.fn),
            "standard_specificity": ratio(self.tn, self.tn + self.fp),
        }


def _empty_confusion(criterion, any_side) -> Confusion:
    return Confusion.from_matrix(np.zeros((N_LEVELS, N_LEVELS), dtype=np.int64), criterion, any_side)


# ---------------------------------------------------------------- reports


ReportKey = tuple[int, str, str, str]  # station, method, criterion, age bucket


@dataclass
class EvalReport:
    cells: dict[ReportKey, Confusion] = field(default_factory=dict)

    def merge(self, other: "EvalReport") -> "EvalReport":
        out = dict(self.cells)
        for key, conf in other.cells.items():
            out[key] = out[key] + conf if key in out else conf
        return EvalReport(out)

    def get(self, station: int, method: str, criterion: str, bucket: str = ALL_BUCKET) -> Confusion:
        return self.cells[(station, Method(method).value, Criterion(criterion).value, bucket)]

    def metric(self, station, method, criterion, metric, bucket=ALL_BUCKET) -> Optional[float]:
        return self.get(station, method, criterion, bucket).rates()[metric][0]

    def pooled(self, method: str, criterion: str, bucket: str = ALL_BUCKET) -> Confusion:
        method, criterion = Method(method).value, Criterion(criterion).value
        parts = [c for (s, m, k, b), c in self.cells.items() if (m, k, b) == (method, criterion, bucket)]
        if not parts:
            raise KeyError((method, criterion, bucket))
        total = parts[0]
        for c in parts[1:]:
            total = total + c
        return total

    def stations(self) -> list[int]:
        return sorted({k[0] for k in self.cells})

    def methods(self) -> list[str]:
        return sorted({k[1] for k in self.cells}, key=lambda m: _METHOD_ORDER[Method(m)])

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write(REPORT_HEADER + "\n")
        buckets = [b[0] for b in AGE_BUCKETS] + [ALL_BUCKET]
        for key in sorted(
            self.cells,
            key=lambda k: (k[0], _METHOD_ORDER[Method(k[1])], k[2], buckets.index(k[3])),
        ):
            conf = self.cells[key]
            station, method, criterion, bucket = key
            rows = [(name, v, n) for name, (v, n) in conf.rates().items()]
            rows += [(name, getattr(conf, name), conf.n) for name in ("tp", "fp", "tn", "fn")]
            rows.append(("excluded", conf.excluded, conf.n + conf.excluded))
            for name, value, n in rows:
                out.write(f"{station},{method},{criterion},{bucket},{name},{_fmt(value)},{n}\n")
        return out.getvalue()


def _fmt(value) -> str:
    if value is None:
        return "undefined"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{value:.6f}"


# ---------------------------------------------------------------- scoring


@dataclass(frozen=True)
class PredictionBatch:
    """Columnar predictions: one entry per (station, made_at, target_time, method)."""

    station: np.ndarray
    made_at: np.ndarray
    target_time: np.ndarray
    method: np.ndarray  # index into Method
    predicted: np.ndarray  # level codes

    def __len__(self) -> int:
        return len(self.station)

    @classmethod
    def from_records(cls, records: Iterable[PredictionRecord]) -> "PredictionBatch":
        recs = list(records)
        methods = list(Method)
        return cls(
            np.array([r.station_id for r in recs], dtype=np.int64),
            np.array([to_epoch(r.made_at) for r in recs], dtype=np.int64),
            np.array([to_epoch(r.target_time) for r in recs], dtype=np.int64),
            np.array([methods.index(r.method) for r in recs], dtype=np.int64),
            np.array([int(r.predicted) for r in recs], dtype=np.int64),
        )

    @classmethod
    def concat(cls, batches: Sequence["PredictionBatch"]) -> "PredictionBatch":
        if not batches:
            return cls.empty()
        return cls(*(np.concatenate([getattr(b, f) for b in batches]) for f in cls._fields()))

    @classmethod
    def empty(cls) -> "PredictionBatch":
        z = np.zeros(0, dtype=np.int64)
        return cls(z, z, z, z, z)

    @staticmethod
    def _fields() -> tuple[str, ...]:
        return ("station", "made_at", "target_time", "method", "predicted")

    def records(self) -> list[PredictionRecord]:
        methods = list(Method)
        return [
            PredictionRecord(int(s), from_epoch(a), from_epoch(t), OccupancyLevel(int(p)), methods[m])
            for s, a, t, m, p in zip(
                self.station, self.made_at, self.target_time, self.method, self.predicted
            )
        ]

    def sorted(self) -> "PredictionBatch":
        order = np.lexsort((self.target_time, self.method, self.made_at, self.station))
        return PredictionBatch(*(getattr(self, f)[order] for f in self._fields()))

    def age_hours(self) -> np.ndarray:
        return (self.target_time - self.made_at) / 3600.0


def _as_batch(predictions) -> PredictionBatch:
    if isinstance(predictions, PredictionBatch):
        return predictions
    return PredictionBatch.from_records(predictions)


def bucket_of(age_hours: np.ndarray, buckets=AGE_BUCKETS) -> np.ndarray:
    """Index of the ``(lo, hi]`` bucket holding each age, -1 when none."""
    age = np.asarray(age_hours, dtype=float)
    out = np.full(age.shape, -1, dtype=np.int64)
    for i, (_, lo, hi) in enumerate(buckets):
        out[(age > lo) & (age <= hi)] = i
    return out


def truth_levels(
    truth: Mapping[int, ResampledSeries], station: np.ndarray, target: np.ndarray
) -> np.ndarray:
    """Level code of the truth cell per prediction, -1 where unobserved or absent."""
    out = np.full(len(station), -1, dtype=np.int64)
    for sid in np.unique(station):
        series = truth.get(int(sid))
        if series is None:
            continue
        mask = station == sid
        idx = (target[mask] - series.grid_start) // QUARTER_HOUR
        inside = (idx >= 0) & (idx < len(series)) & ((target[mask] - series.grid_start) % QUARTER_HOUR == 0)
        safe = np.where(inside, idx, 0)
        ok = inside & series.observed[safe]
        ok &= (series.bikes[safe] + series.free_slots[safe]) > 0
        codes = np.full(len(safe), -1, dtype=np.int64)
        if ok.any():
            codes[ok] = discretize_array(series.bikes[safe][ok], series.free_slots[safe][ok])
        out[mask] = codes
    return out


def score(
    predictions,
    truth: Mapping[int, ResampledSeries],
    criterion: Criterion | str,
    age_buckets=AGE_BUCKETS,
    *,
    any_side: bool = False,
) -> EvalReport:
    """Confusions per (station, method, criterion, age bucket), plus an ``all`` bucket.

    Predictions whose truth cell is unobserved are left out of every
    denominator and counted in ``excluded``.
    """
    criterion = Criterion(criterion)
    batch = _as_batch(predictions)
    truth_codes = truth_levels(truth, batch.station, batch.target_time)
    bucket = bucket_of(batch.age_hours(), age_buckets)
    methods = list(Method)
    report = EvalReport()
    for sid in np.unique(batch.station):
        for m in np.unique(batch.method[batch.station == sid]):
            sel = (batch.station == sid) & (batch.method == m)
            groups = [(name, sel & (bucket == i)) for i, (name, _, _) in enumerate(age_buckets)]
            groups.append((ALL_BUCKET, sel))
            for name, mask in groups:
                seen = mask & (truth_codes >= 0)
                conf = Confusion.of(batch.predicted[seen], truth_codes[seen], criterion, any_side)
                conf = replace(conf, excluded=int((mask & (truth_codes < 0)).sum()))
                report.cells[(int(sid), methods[m].value, criterion.value, name)] = conf
    return report


def score_all(
    predictions, truth: Mapping[int, ResampledSeries], *, any_side: bool = False
) -> EvalReport:
    batch = _as_batch(predictions)
    report = EvalReport()
    for criterion in Criterion:
        report = report.merge(score(batch, truth, criterion, any_side=any_side))
    return report


def durability_report(report: EvalReport, criterion: Criterion | str = Criterion.STRICT) -> str:
    """Per-bucket metrics pooled over stations, one row per (bucket, method, metric)."""
    criterion = Criterion(criterion).value
    out = io.StringIO()
    out.write(DURABILITY_HEADER + "\n")
    for name, _, _ in AGE_BUCKETS:
        for method in report.methods():
            try:
                conf = report.pooled(method, criterion, name)
            except KeyError:
                continue
            for metric, (value, _) in conf.rates().items():
                out.write(f"{name},{method},{metric},{_fmt(value)}\n")
    return out.getvalue()


# ---------------------------------------------------------------- prediction dumps


def predictions_csv(predictions) -> str:
    batch = _as_batch(predictions).sorted()
    methods = list(Method)
    out = io.StringIO()
    out.write(PREDICTIONS_HEADER + "\n")
    made = _iso(batch.made_at)
    target = _iso(batch.target_time)
    for s, a, t, m, p in zip(batch.station, made, target, batch.method, batch.predicted):
        out.write(f"{s},{a},{t},{methods[m].value},{OccupancyLevel(int(p)).label}\n")
    return out.getvalue()


def _iso(epochs: np.ndarray) -> list[str]:
    return [from_epoch(int(t)).strftime("%Y-%m-%dT%H:%M:%SZ") for t in epochs]


def write_predictions(predictions, path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as handle:
        handle.write(predictions_csv(predictions))


def read_predictions(path: str | os.PathLike) -> PredictionBatch:
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or ",".join(header) != PREDICTIONS_HEADER:
            raise DataError(f"{path}: expected header {PREDICTIONS_HEADER!r}")
        records = []
        for lineno, row in enumerate(reader, start=2):
            try:
                s, a, t, m, p = row
                records.append(
                    PredictionRecord(
                        int(s), parse_instant(a), parse_instant(t), OccupancyLevel.from_label(p), Method(m)
                    )
                )
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    return PredictionBatch.from_records(records)


# ---------------------------------------------------------------- protocol


@dataclass(frozen=True)
class ProtocolConfig:
    methods: tuple[Method, ...] = tuple(Method)
    seed: int = 0
    n_yearago: int = 1000
    n_recent: int = 2000
    forest: forest_mod.ForestConfig = forest_mod.ForestConfig()
    arima_grid: Optional[tuple[arima_mod.ArimaSpec, ...]] = None  # None = default grid
    arima_window_days: int = 7
    tz: str = "UTC"
    jobs: int = 1  # parallel (station, day) builds
    forest_jobs: int = 1  # parallel trees inside one forest

    def __post_init__(self) -> None:
        object.__setattr__(self, "methods", tuple(Method(m) for m in self.methods))
        if self.jobs < 1 or self.forest_jobs < 1:
            raise ValueError("jobs must be >= 1")


@dataclass(frozen=True)
class Skip:
    station: int
    day: dt.date
    method: str
    reason: str


@dataclass
class ProtocolResult:
    predictions: PredictionBatch
    skips: list[Skip] = field(default_factory=list)
    details: list[dict] = field(default_factory=list)  # per-build fit notes (spec, shortfall...)


def task_seed(seed: int, station: int, day: dt.date, method: Method) -> int:
    """Stable per-build seed for sampler and forest streams."""
    seq = np.random.SeedSequence(
        int(seed), spawn_key=(int(station), day.toordinal(), _METHOD_ORDER[method])
    )
    return int(seq.generate_state(1, np.uint32)[0])


def fit_arima_at(
    store: SnapshotStore, station: int, t_build: int, config: ProtocolConfig
) -> tuple[arima_mod.ArimaModel, int]:
    """AIC-selected model on the trailing window, and the capacity to classify with."""
    start = t_build - config.arima_window_days * DAY
    series = resample(store, station, start, t_build, until=t_build)
    values = arima_mod.series_for_fit(series)
    grid = config.arima_grid if config.arima_grid is not None else _default_grid()
    return arima_mod.select(values, grid), last_capacity(series)


def arima_codes(model: arima_mod.ArimaModel, capacity: int, steps: int = HORIZON_STEPS) -> np.ndarray:
    levels = arima_mod.forecast_levels(model, steps, capacity)
    return np.array([int(v) for v in levels], dtype=np.int64)


def forest_codes(
    model: forest_mod.ForestModel,
    weather: Optional[WeatherTable],
    holidays: HolidayCalendar,
    t_build: int,
    tz: str = "UTC",
    horizon_hours: float = 72,
) -> np.ndarray:
    """Forest predictions for every quarter hour in ``(t_build, t_build + horizon]``."""
    predictor_set = PredictorSet(model.train_meta.get("predictor_set", _set_of(model)))
    visible = weather.visible_at(t_build) if weather is not None else None
    rows = build_prediction_rows(
        t_build, horizon_hours, visible, holidays, predictor_set, tz,
        int(model.train_meta.get("station_id", 0)),
    )
    return forest_mod.predict_codes(model, rows.matrix(model.predictor_names)).astype(np.int64)


def _set_of(model: forest_mod.ForestModel) -> str:
    return "rf_extended" if len(model.predictor_names) > 2 else "rf"


_GRID_CACHE: list = []


def _default_grid():
    if not _GRID_CACHE:
        _GRID_CACHE.append(tuple(arima_mod.default_grid()))
    return _GRID_CACHE[0]


def last_capacity(series: ResampledSeries) -> int:
    obs = np.flatnonzero(series.observed & (series.bikes + series.free_slots > 0))
    if len(obs) == 0:
        raise DataError("no observed cell to take capacity from")
    i = obs[-1]
    return int(series.bikes[i] + series.free_slots[i])


IMPORTANCE_WINDOWS = ("sample", "year")
YEAR = 52 * 7 * DAY


def train_forest_at(
    store: SnapshotStore,
    weather: Optional[WeatherTable],
    holidays: HolidayCalendar,
    station: int,
    t_build: int,
    method: Method,
    config: ProtocolConfig,
    seed: int,
    window: str = "sample",
) -> tuple[forest_mod.ForestModel, dict]:
    """Forest for one station trained on data visible at ``t_build``.

    ``window="sample"`` uses the year-ago/recent sampler; ``"year"`` uses
    every row of the 52 weeks before ``t_build``.
    """
    method = Method(method)
    if window not in IMPORTANCE_WINDOWS:
        raise ValueError(f"window must be one of {IMPORTANCE_WINDOWS}")
    predictor_set = PredictorSet(method.value)
    spec = SamplerSpec(t_build, config.n_yearago, config.n_recent, seed)
    start = spec.yearago_window[0] if window == "sample" else t_build - YEAR
    series = resample(store, station, start, t_build, until=t_build)
    visible = weather.visible_at(t_build) if weather is not None else None
    if window == "sample":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SamplerShortfallWarning)
            sample = training_rows(series, visible, holidays, spec, predictor_set, config.tz)
        rows, shortfall = sample.rows, dict(sample.shortfall)
    else:
        rows = rows_from_series(series, visible, holidays, predictor_set, config.tz)
        shortfall = {}
        if len(rows) == 0:
            raise DataError("no observed rows in the year before the build instant")
    names = predictor_set.predictors
    forest_config = replace(config.forest, seed=seed)
    meta = {
        "station_id": station,
        "t_build": t_build,
        "predictor_set": predictor_set.value,
        "seed": seed,
        "window": window,
        "rows": len(rows),
        "shortfall": shortfall,
        "tz": config.tz,
    }
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        model = forest_mod.train_forest(
            rows.matrix(names), rows.labels, names, forest_config, meta, jobs=config.forest_jobs
        )
    return model, shortfall


def _build_task(args) -> tuple[PredictionBatch, list[Skip], list[dict]]:
    store_root, weather, holidays, station, day, config = args
    store = SnapshotStore(store_root)
    t_build = local_midnight(day, config.tz)
    targets = t_build + QUARTER_HOUR * np.arange(1, HORIZON_STEPS + 1, dtype=np.int64)
    batches, skips, details = [], [], []
    for method in config.methods:
        note = {"station": station, "day": day.isoformat(), "method": method.value}
        try:
            if method is Method.ARIMA:
                model, capacity = fit_arima_at(store, station, t_build, config)
                codes = arima_codes(model, capacity)
                note.update(spec=str(model.spec), aic=model.aic)
            else:
                seed = task_seed(config.seed, station, day, method)
                model, shortfall = train_forest_at(
                    store, weather, holidays, station, t_build, method, config, seed
                )
                codes = forest_codes(model, weather, holidays, t_build, config.tz)
                note.update(shortfall=shortfall)
        except (DataError, ValueError) as exc:
            log.warning("skip station %s on %s (%s): %s", station, day, method.value, exc)
            skips.append(Skip(station, day, method.value, str(exc)))
            continue
        details.append(note)
        n = len(targets)
        batches.append(
            PredictionBatch(
                np.full(n, station, dtype=np.int64),
                np.full(n, t_build, dtype=np.int64),
                targets.copy(),
                np.full(n, _METHOD_ORDER[method], dtype=np.int64),
                codes,
            )
        )
    return PredictionBatch.concat(batches), skips, details


def build_days(first: dt.date, last: dt.date) -> list[dt.date]:
    if last < first:
        raise ValueError("date range ends before it starts")
    return [first + dt.timedelta(days=i) for i in range((last - first).days + 1)]


def run_protocol(
    store: SnapshotStore,
    weather: Optional[WeatherTable],
    holidays: HolidayCalendar,
    stations: Sequence[int],
    date_range: tuple[dt.date, dt.date],
    methods: Sequence[Method | str] = tuple(Method),
    config: ProtocolConfig = ProtocolConfig(),
) -> ProtocolResult:
    """Daily builds for every (station, day) in range; the day range is inclusive.

    Work is split per (station, day) and results are gathered in that order,
    so the output does not depend on ``config.jobs``.
    """
    config = replace(config, methods=tuple(Method(m) for m in methods))
    holidays = holidays if holidays is not None else HolidayCalendar()
    tasks = [
        (str(store.root), weather, holidays, int(s), day, config)
        for s in stations
        for day in build_days(*date_range)
    ]
    if config.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(config.jobs) as pool:
            results = list(pool.map(_build_task, tasks))
    else:
        results = [_build_task(t) for t in tasks]
    batches = [r[0] for r in results]
    skips = [s for r in results for s in r[1]]
    details = [d for r in results for d in r[2]]
    return ProtocolResult(PredictionBatch.concat(batches).sorted(), skips, details)


def truth_for(
    store: SnapshotStore, predictions, extra_stations: Iterable[int] = ()
) -> dict[int, ResampledSeries]:
    """Resampled truth spanning every target instant of ``predictions``."""
    batch = _as_batch(predictions)
    out = {}
    for sid in sorted(set(np.unique(batch.station).tolist()) | set(extra_stations)):
        mask = batch.station == sid
        if not mask.any():
            continue
        lo = int(batch.target_time[mask].min())
        hi = int(batch.target_time[mask].max()) + QUARTER_HOUR
        out[int(sid)] = resample(store, int(sid), lo, hi)
    return out
