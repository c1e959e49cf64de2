"""``occ-forecast`` command line.

Exit codes: 0 success, 1 usage error, 2 data error. Logs go to stderr at the
level named by ``OCC_FORECAST_LOG`` (default ``WARNING``). Every subcommand
that writes artifacts also writes ``run-manifest.json`` next to them.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime as dt
import hashlib
import json
import logging
import os
import shutil
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

from . import __version__
from . import arima as arima_mod
from . import evaluation as ev
from . import forest as forest_mod
from . import synth
from .config import read_flat, split_list
from .core import Criterion, DataError, HolidayCalendar, Method, local_midnight
from .features import PredictorSet, build_rows
from .ingest import (
    ErrorLedger,
    SnapshotStore,
    WeatherTable,
    load_weather,
    parse_holidays,
    parse_station_feed,
)

log = logging.getLogger("occforecast")

MANIFEST = "run-manifest.json"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse exits 2 by default
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# ---------------------------------------------------------------- run config


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """Everything a run depends on; serialized into the run manifest."""

    command: str
    out: Optional[Path]
    store: Optional[Path] = None
    weather: Optional[Path] = None
    holidays: Optional[Path] = None
    stations: tuple[int, ...] = ()
    seed: Optional[int] = None
    methods: tuple[str, ...] = ()
    n_yearago: int = 1000
    n_recent: int = 2000
    n_trees: int = 200
    mtry: Optional[int] = None
    min_node_size: int = 5
    max_depth: Optional[int] = None
    max_p: int = 3
    max_q: int = 3
    max_d: int = 1
    seasonal: bool = True
    any_side: bool = False
    lenient: bool = False
    tz: str = "UTC"
    extra: tuple[tuple[str, Any], ...] = ()

    def forest(self) -> forest_mod.ForestConfig:
        return forest_mod.ForestConfig(
            n_trees=self.n_trees, mtry=self.mtry, min_node_size=self.min_node_size,
            max_depth=self.max_depth, seed=self.seed or 0,
        )

    def arima_grid(self) -> tuple[arima_mod.ArimaSpec, ...]:
        return tuple(
            arima_mod.default_grid(
                max_p=self.max_p, max_q=self.max_q, max_d=self.max_d, seasonal=self.seasonal
            )
        )

    def protocol(self, jobs: int = 1) -> ev.ProtocolConfig:
        return ev.ProtocolConfig(
            methods=tuple(Method(m) for m in self.methods) or tuple(Method),
            seed=self.seed or 0,
            n_yearago=self.n_yearago,
            n_recent=self.n_recent,
            forest=self.forest(),
            arima_grid=self.arima_grid(),
            tz=self.tz,
            jobs=jobs,
        )

    def to_json(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, Path):
                value = str(value)
            elif f.name == "extra":
                value = {k: v for k, v in value}
            elif isinstance(value, tuple):
                value = list(value)
            out[f.name] = value
        return out


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(config: RunConfig, inputs: Sequence[Path], outputs: Sequence[Path]) -> Path:
    """Config, seed, and sha256 digests of inputs and outputs; no wall-clock data."""
    assert config.out is not None
    doc = {
        "tool": "occ-forecast",
        "version": __version__,
        "config": config.to_json(),
        "seed": config.seed,
        "inputs": {str(p): _sha256(p) for p in sorted(set(inputs))},
        "outputs": {p.name: _sha256(p) for p in sorted(outputs)},
    }
    path = config.out / MANIFEST
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


# ---------------------------------------------------------------- argument helpers


def _date(text: str) -> dt.date:
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected YYYY-MM-DD, got {text!r}") from None


def _ids(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(s) for s in split_list(text))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated station ids, got {text!r}") from None


def _methods(text: str) -> tuple[str, ...]:
    try:
        return tuple(Method(m).value for m in split_list(text))
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"methods must be among {', '.join(m.value for m in Method)}"
        ) from None


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _add_data(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("data")
    g.add_argument("--data", type=Path, default=Path("."),
                   help="directory holding stations/, weather.csv, holidays.txt (default: .)")
    g.add_argument("--store", type=Path, help="snapshot store root (default: DATA)")
    g.add_argument("--weather", type=Path, help="weather CSV (default: DATA/weather.csv)")
    g.add_argument("--holidays", type=Path, help="holiday list (default: DATA/holidays.txt)")
    g.add_argument("--tz", default="UTC", help="city time zone (default: UTC)")


def _add_out(p: argparse.ArgumentParser, required: bool = False) -> None:
    p.add_argument("--out", type=Path, required=required, default=None if required else Path("out"),
                   help="output directory" + ("" if required else " (default: out)"))


def _add_forest(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("forest")
    g.add_argument("--n-trees", type=_positive, default=200)
    g.add_argument("--mtry", type=_positive)
    g.add_argument("--min-node-size", type=_positive, default=5)
    g.add_argument("--max-depth", type=_positive)
    g.add_argument("--n-yearago", type=_positive, default=1000)
    g.add_argument("--n-recent", type=_positive, default=2000)


def _add_arima(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("arima grid")
    g.add_argument("--max-p", type=int, choices=range(4), default=3)
    g.add_argument("--max-q", type=int, choices=range(4), default=3)
    g.add_argument("--max-d", type=int, choices=(0, 1), default=1)
    g.add_argument("--no-seasonal", action="store_true", help="drop P, D, Q from the grid")


def _add_run_config(p: argparse.ArgumentParser) -> None:
    p.add_argument("--run-config", type=Path,
                   help="flat key = value file whose keys set defaults for this command's flags")


def build_parser() -> _Parser:
    parser = _Parser(prog="occ-forecast", description="Bike-station occupancy forecasting.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("ingest", help="parse raw feeds into a store under --out")
    p.add_argument("--stations", type=Path, nargs="+", required=True, help="station feed CSVs")
    p.add_argument("--weather", type=Path, help="weather CSV to validate and copy")
    p.add_argument("--holidays", type=Path, help="holiday list to validate and copy")
    p.add_argument("--lenient", action="store_true", help="skip malformed rows instead of aborting")
    _add_out(p, required=True)
    _add_run_config(p)

    p = sub.add_parser("verify", help="check every store partition is sorted and well formed")
    p.add_argument("--data", type=Path, default=Path("."))
    p.add_argument("--store", type=Path)
    p.add_argument("--out", type=Path, help="optional directory for verify-report.txt")

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", type=Path, help="scenario file (flat key = value)")
    src.add_argument("--scenario", help="bundled scenario name, e.g. four_stations")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--weeks", type=_positive, help="override the scenario length")
    _add_out(p, required=True)

    p = sub.add_parser("features", help="feature tables")
    fsub = p.add_subparsers(dest="action", parser_class=_Parser, required=True)
    d = fsub.add_parser("dump", help="write labeled rows for one station as CSV")
    _add_data(d)
    d.add_argument("--station", type=int, required=True)
    d.add_argument("--from", dest="date_from", type=_date, required=True)
    d.add_argument("--to", dest="date_to", type=_date, required=True, help="inclusive")
    d.add_argument("--predictors", choices=[s.value for s in PredictorSet], default="rf_extended")
    _add_out(d)
    _add_run_config(d)

    p = sub.add_parser("train", help="fit one model for one station at one build instant")
    _add_data(p)
    p.add_argument("--station", type=int, required=True)
    p.add_argument("--method", type=lambda t: _methods(t)[0], required=True)
    p.add_argument("--at", type=_date, required=True, help="build day (local midnight)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--window", choices=ev.IMPORTANCE_WINDOWS, default="sample",
                   help="forest training rows: sampler (default) or the whole trailing year")
    p.add_argument("--jobs", type=_positive, default=1, help="parallel tree training")
    _add_forest(p)
    _add_arima(p)
    _add_out(p)
    _add_run_config(p)

    p = sub.add_parser("predict", help="72 h of quarter-hour predictions from a model file")
    _add_data(p)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--horizon", type=float, default=72.0, help="hours (default 72)")
    _add_out(p)
    _add_run_config(p)

    p = sub.add_parser("importance", help="mean decrease in Gini per predictor")
    _add_data(p)
    p.add_argument("--model", type=Path, help="forest model file; otherwise one is trained")
    p.add_argument("--station", type=int)
    p.add_argument("--at", type=_date)
    p.add_argument("--seed", type=int)
    p.add_argument("--predictors", choices=[s.value for s in PredictorSet], default="rf_extended")
    p.add_argument("--window", choices=ev.IMPORTANCE_WINDOWS, default="sample")
    p.add_argument("--jobs", type=_positive, default=1)
    _add_forest(p)
    _add_out(p)
    _add_run_config(p)

    p = sub.add_parser("evaluate", help="run the daily-build protocol and score it")
    _add_data(p)
    p.add_argument("--from", dest="date_from", type=_date, required=True)
    p.add_argument("--to", dest="date_to", type=_date, required=True, help="inclusive")
    p.add_argument("--stations", type=_ids, help="default: every station in the store")
    p.add_argument("--methods", type=_methods, default=tuple(m.value for m in Method))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=_positive, default=1, help="parallel (station, day) builds")
    p.add_argument("--flexible-any-side", action="store_true",
                   help="flexible tp accepts any critical truth, not only the predicted side")
    _add_forest(p)
    _add_arima(p)
    _add_out(p)
    _add_run_config(p)

    p = sub.add_parser("report", help="score a prediction dump against the store")
    _add_data(p)
    p.add_argument("--predictions", type=Path, required=True)
    p.add_argument("--flexible-any-side", action="store_true")
    _add_out(p)
    _add_run_config(p)
    return parser


def _subparser(parser: argparse.ArgumentParser, argv: Sequence[str]) -> argparse.ArgumentParser:
    chosen = parser
    for token in argv:
        actions = [a for a in chosen._actions if isinstance(a, argparse._SubParsersAction)]
        if not actions:
            break
        if token in actions[0].choices:
            chosen = actions[0].choices[token]
    return chosen


def parse_args(argv: Sequence[str]) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    path = getattr(args, "run_config", None)
    if path is None:
        return args
    # defaults from the file, then the command line again on top
    try:
        values = read_flat(path)
    except OSError as exc:
        raise DataError(f"cannot read run config: {exc}") from None
    target = _subparser(parser, argv)
    known = {a.dest: a for a in target._actions}
    defaults = {}
    for key, raw in values.items():
        dest = key.replace("-", "_")
        action = known.get(dest)
        if action is None or dest in ("run_config", "help"):
            raise UsageError(f"unknown run-config key {key!r}")
        if action.nargs == 0:
            defaults[dest] = raw.strip().lower() in ("1", "true", "yes")
        elif action.type is not None:
            try:
                defaults[dest] = action.type(raw)
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise UsageError(f"run-config {key}: {exc}") from None
        else:
            defaults[dest] = raw
        if action.required:
            action.required = False
    target.set_defaults(**defaults)
    return parser.parse_args(argv)


# ---------------------------------------------------------------- data access


@dataclasses.dataclass
class Inputs:
    store: SnapshotStore
    weather: Optional[WeatherTable]
    holidays: HolidayCalendar
    files: list[Path]


def _paths(args) -> tuple[Path, Optional[Path], Optional[Path]]:
    data = args.data.resolve()
    store = (args.store or data).resolve()
    weather = getattr(args, "weather", None) or data / "weather.csv"
    holidays = getattr(args, "holidays", None) or data / "holidays.txt"
    return store, weather.resolve(), holidays.resolve()


def _load_inputs(args, need_weather: bool, stations: Sequence[int] = ()) -> Inputs:
    store_root, weather_path, holidays_path = _paths(args)
    if not (store_root / "stations").is_dir():
        raise DataError(f"no snapshot store at {store_root}")
    store = SnapshotStore(store_root)
    files = []
    for sid in stations or store.stations():
        files.extend(store.partitions(sid))
    weather = None
    if weather_path.exists():
        weather = load_weather(weather_path)
        files.append(weather_path)
    elif need_weather:
        raise DataError(f"weather file not found: {weather_path}")
    holidays = HolidayCalendar()
    if holidays_path.exists():
        holidays = parse_holidays(holidays_path)
        files.append(holidays_path)
    return Inputs(store, weather, holidays, files)


def _base_config(args, command: str, **extra) -> RunConfig:
    store, weather, holidays = _paths(args) if hasattr(args, "data") else (None, None, None)
    fields = {}
    for name in ("n_yearago", "n_recent", "n_trees", "mtry", "min_node_size", "max_depth",
                 "max_p", "max_q", "max_d", "tz", "seed"):
        if hasattr(args, name):
            fields[name] = getattr(args, name)
    if hasattr(args, "no_seasonal"):
        fields["seasonal"] = not args.no_seasonal
    if hasattr(args, "flexible_any_side"):
        fields["any_side"] = args.flexible_any_side
    return RunConfig(
        command=command,
        out=args.out.resolve() if args.out is not None else None,
        store=store,
        weather=weather,
        holidays=holidays,
        extra=tuple(sorted(extra.items())),
        **fields,
    )


def _prepare_out(config: RunConfig) -> Path:
    assert config.out is not None
    config.out.mkdir(parents=True, exist_ok=True)
    return config.out


def _write(path: Path, text: str) -> Path:
    with open(path, "w", newline="") as handle:
        handle.write(text)
    return path


# ---------------------------------------------------------------- commands


def cmd_ingest(args) -> int:
    config = RunConfig(
        command="ingest", out=args.out.resolve(), lenient=args.lenient,
        extra=(("stations", [str(p.resolve()) for p in args.stations]),),
    )
    out = _prepare_out(config)
    ledger = ErrorLedger()
    store = SnapshotStore(out)
    inputs, outputs = [], []
    added = 0
    for path in args.stations:
        snaps = parse_station_feed(path, ledger, strict=not args.lenient)
        added += store.append(snaps)
        inputs.append(path.resolve())
    if args.weather:
        load_weather(args.weather, ledger, strict=not args.lenient)
        shutil.copyfile(args.weather, out / "weather.csv")
        inputs.append(args.weather.resolve())
        outputs.append(out / "weather.csv")
    if args.holidays:
        parse_holidays(args.holidays)
        shutil.copyfile(args.holidays, out / "holidays.txt")
        inputs.append(args.holidays.resolve())
        outputs.append(out / "holidays.txt")
    outputs.append(_write(out / "errors.ndjson", ledger.to_ndjson()))
    for sid in store.stations():
        outputs.extend(store.partitions(sid))
    log.info("ingested %d new snapshots, %d bad rows", added, len(ledger))
    print(f"ingested {added} snapshots; {len(ledger)} rows rejected")
    write_manifest(config, inputs, [o for o in outputs if o.parent == out])
    return 0


def cmd_verify(args) -> int:
    store_root = (args.store or args.data).resolve()
    if not (store_root / "stations").is_dir():
        raise DataError(f"no snapshot store at {store_root}")
    problems = SnapshotStore(store_root).verify()
    text = "".join(p + "\n" for p in problems) or "ok\n"
    sys.stdout.write(text)
    if args.out is not None:
        config = RunConfig(command="verify", out=args.out.resolve(), store=store_root)
        out = _prepare_out(config)
        report = _write(out / "verify-report.txt", text)
        store = SnapshotStore(store_root)
        inputs = [p for sid in store.stations() for p in store.partitions(sid)]
        write_manifest(config, inputs, [report])
    return 2 if problems else 0


def cmd_synth(args) -> int:
    if args.config is not None:
        try:
            values = read_flat(args.config)
        except OSError as exc:
            raise DataError(f"cannot read scenario: {exc}") from None
        source = args.config.resolve()
    else:
        try:
            from .config import parse_flat

            values = parse_flat(synth.bundled_scenario(args.scenario), args.scenario)
        except FileNotFoundError:
            raise UsageError(f"no bundled scenario named {args.scenario!r}") from None
        source = None
    if args.weeks is not None:
        values = dict(values, weeks=str(args.weeks))
    scenario = synth.scenario_from_config(values, seed=args.seed)
    config = RunConfig(
        command="synth", out=args.out.resolve(), seed=args.seed,
        extra=(("scenario", args.scenario or str(source)), ("weeks", args.weeks)),
    )
    out = _prepare_out(config)
    corpus = synth.generate_scenario(scenario, out)
    store = corpus.store
    outputs = [corpus.weather_path, corpus.holidays_path]
    print(f"wrote {len(store.stations())} stations to {out}")
    write_manifest(config, [source] if source else [], outputs)
    return 0


def _window_days(first: dt.date, last: dt.date, tz: str) -> tuple[int, int]:
    if last < first:
        raise UsageError("--to is before --from")
    return local_midnight(first, tz), local_midnight(last + dt.timedelta(days=1), tz)


def cmd_features(args) -> int:
    config = _base_config(args, "features dump", station=args.station,
                          date_from=args.date_from.isoformat(), date_to=args.date_to.isoformat(),
                          predictors=args.predictors)
    start, end = _window_days(args.date_from, args.date_to, args.tz)
    inputs = _load_inputs(args, PredictorSet(args.predictors).uses_weather, [args.station])
    table = build_rows(inputs.store, inputs.weather, inputs.holidays, args.station,
                       (start, end), args.predictors, args.tz)
    out = _prepare_out(config)
    path = _write(out / "features.csv", table.to_csv())
    if table.dropped:
        log.warning("%d rows dropped for missing weather", table.dropped)
    write_manifest(config, inputs.files, [path])
    return 0


def cmd_train(args) -> int:
    method = Method(args.method)
    config = dataclasses.replace(
        _base_config(args, "train", station=args.station, at=args.at.isoformat(),
                     window=args.window),
        methods=(method.value,),
    )
    t_build = local_midnight(args.at, args.tz)
    inputs = _load_inputs(args, method is Method.RF_EXTENDED, [args.station])
    proto = dataclasses.replace(config.protocol(), forest_jobs=args.jobs)
    out = _prepare_out(config)
    outputs = []
    if method is Method.ARIMA:
        model, capacity = ev.fit_arima_at(inputs.store, args.station, t_build, proto)
        meta = {"station_id": args.station, "t_build": t_build, "capacity": capacity, "tz": args.tz}
        outputs.append(_write(out / "model.json", arima_mod.model_to_json(model, meta)))
        outputs.append(_write(out / "model.txt", model.report()))
    else:
        model, shortfall = ev.train_forest_at(
            inputs.store, inputs.weather, inputs.holidays, args.station, t_build, method, proto,
            args.seed, window=args.window,
        )
        for window, missing in shortfall.items():
            log.warning("sampler window %s short by %d rows", window, missing)
        outputs.append(_write(out / "model.json", forest_mod.model_to_json(model)))
    write_manifest(config, inputs.files, outputs)
    return 0


def _load_any_model(path: Path):
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"cannot read model: {exc}") from None
    try:
        head = json.loads(text).get("format")
    except (json.JSONDecodeError, AttributeError):
        raise DataError(f"{path}: not a model file") from None
    if head == arima_mod.MODEL_FORMAT:
        return "arima", arima_mod.model_from_json(text)
    return "forest", forest_mod.model_from_json(text)


def cmd_predict(args) -> int:
    kind, loaded = _load_any_model(args.model)
    steps = int(round(args.horizon * 4))
    if not 0 < steps <= ev.HORIZON_STEPS or abs(args.horizon * 4 - steps) > 1e-9:
        raise UsageError("--horizon must be a positive multiple of 0.25 h, at most 72")
    config = _base_config(args, "predict", model=str(args.model.resolve()), horizon=args.horizon)
    inputs_files = [args.model.resolve()]
    if kind == "arima":
        model, meta = loaded
        station, t_build = int(meta["station_id"]), int(meta["t_build"])
        codes = ev.arima_codes(model, int(meta["capacity"]), steps)
        method = Method.ARIMA
    else:
        model = loaded
        meta = model.train_meta
        station, t_build = int(meta["station_id"]), int(meta["t_build"])
        set_name = meta.get("predictor_set", "rf")
        method = Method(set_name)
        inputs = _load_inputs(args, PredictorSet(set_name).uses_weather, [station])
        codes = ev.forest_codes(model, inputs.weather, inputs.holidays, t_build,
                                meta.get("tz", args.tz), args.horizon)
        inputs_files += [f for f in inputs.files if f.name in ("weather.csv", "holidays.txt")]
    import numpy as np

    n = len(codes)
    batch = ev.PredictionBatch(
        np.full(n, station, dtype=np.int64), np.full(n, t_build, dtype=np.int64),
        t_build + 900 * np.arange(1, n + 1, dtype=np.int64),
        np.full(n, list(Method).index(method), dtype=np.int64), codes,
    )
    out = _prepare_out(config)
    path = _write(out / "predictions.csv", ev.predictions_csv(batch))
    write_manifest(config, inputs_files, [path])
    return 0


def cmd_importance(args) -> int:
    if args.model is not None:
        kind, model = _load_any_model(args.model)
        if kind != "forest":
            raise UsageError("importance needs a forest model")
        files = [args.model.resolve()]
        config = _base_config(args, "importance", model=str(args.model.resolve()))
    else:
        missing = [f for f in ("station", "at", "seed") if getattr(args, f) is None]
        if missing:
            raise UsageError("without --model, importance needs " + ", ".join("--" + m for m in missing))
        config = _base_config(args, "importance", station=args.station, at=args.at.isoformat(),
                              predictors=args.predictors, window=args.window)
        inputs = _load_inputs(args, PredictorSet(args.predictors).uses_weather, [args.station])
        proto = dataclasses.replace(config.protocol(), forest_jobs=args.jobs)
        model, _ = ev.train_forest_at(
            inputs.store, inputs.weather, inputs.holidays, args.station,
            local_midnight(args.at, args.tz), Method(args.predictors), proto, args.seed,
            window=args.window,
        )
        files = inputs.files
    out = _prepare_out(config)
    path = _write(out / "importance.csv", forest_mod.importance_csv(model))
    write_manifest(config, files, [path])
    return 0


def _report_files(out: Path, batch, truth, any_side: bool) -> list[Path]:
    report = ev.score_all(batch, truth, any_side=any_side)
    return [
        _write(out / "report.csv", report.to_csv()),
        _write(out / "durability.csv", ev.durability_report(report)),
    ]


def cmd_evaluate(args) -> int:
    inputs = _load_inputs(args, "rf_extended" in args.methods, args.stations or ())
    stations = args.stations or tuple(inputs.store.stations())
    unknown = sorted(set(stations) - set(inputs.store.stations()))
    if unknown:
        raise DataError(f"stations not in store: {', '.join(map(str, unknown))}")
    config = dataclasses.replace(
        _base_config(args, "evaluate", date_from=args.date_from.isoformat(),
                     date_to=args.date_to.isoformat()),
        stations=tuple(stations), methods=tuple(args.methods),
    )
    if args.date_to < args.date_from:
        raise UsageError("--to is before --from")
    result = ev.run_protocol(
        inputs.store, inputs.weather, inputs.holidays, stations,
        (args.date_from, args.date_to), args.methods, config.protocol(jobs=args.jobs),
    )
    out = _prepare_out(config)
    outputs = [_write(out / "predictions.csv", ev.predictions_csv(result.predictions))]
    truth = ev.truth_for(inputs.store, result.predictions)
    outputs += _report_files(out, result.predictions, truth, args.flexible_any_side)
    skips = "station,day,method,reason\n" + "".join(
        f"{s.station},{s.day.isoformat()},{s.method},\"{s.reason}\"\n" for s in result.skips
    )
    outputs.append(_write(out / "skips.csv", skips))
    print(f"{len(result.predictions)} predictions, {len(result.skips)} skipped builds")
    write_manifest(config, inputs.files, outputs)
    return 0


def cmd_report(args) -> int:
    batch = ev.read_predictions(args.predictions)
    stations = sorted(set(batch.station.tolist()))
    inputs = _load_inputs(args, False, stations)
    config = dataclasses.replace(
        _base_config(args, "report", predictions=str(args.predictions.resolve())),
        stations=tuple(stations),
    )
    truth = ev.truth_for(inputs.store, batch)
    out = _prepare_out(config)
    outputs = _report_files(out, batch, truth, args.flexible_any_side)
    write_manifest(config, [args.predictions.resolve()] + inputs.files, outputs)
    return 0


COMMANDS = {
    "ingest": cmd_ingest,
    "verify": cmd_verify,
    "synth": cmd_synth,
    "features": cmd_features,
    "train": cmd_train,
    "predict": cmd_predict,
    "importance": cmd_importance,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


def _setup_logging() -> None:
    level = os.environ.get("OCC_FORECAST_LOG", "WARNING").upper()
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("level=%(levelname)s logger=%(name)s msg=%(message)s"))
    root = logging.getLogger("occforecast")
    root.handlers[:] = [handler]
    root.setLevel(getattr(logging, level, logging.WARNING))
    root.propagate = False


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except DataError as exc:
        log.error("%s", exc)
        print(f"occ-forecast: data error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"occ-forecast: data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
