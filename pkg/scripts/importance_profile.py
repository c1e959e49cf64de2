"""Print the Gini importance profile of each station's forest at one build day.

    python scripts/importance_profile.py --data runs/experiment/data --at 2015-02-05

The corpus comes from ``occ-forecast synth`` (or scripts/run_experiment.py).
"""

import argparse
import datetime as dt
from pathlib import Path

from occforecast.core import local_midnight
from occforecast.evaluation import ProtocolConfig, train_forest_at
from occforecast.forest import ForestConfig, importance
from occforecast.ingest import SnapshotStore, load_weather, parse_holidays


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data", type=Path, required=True)
    ap.add_argument("--at", type=dt.date.fromisoformat, required=True)
    ap.add_argument("--predictors", choices=["rf", "rf_extended"], default="rf_extended")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n-trees", type=int, default=200)
    ap.add_argument("--window", choices=["sample", "year"], default="sample",
                    help="sampled year-ago/recent rows, or every row of the past year")
    args = ap.parse_args()

    store = SnapshotStore(args.data)
    weather = load_weather(args.data / "weather.csv")
    holidays = parse_holidays(args.data / "holidays.txt")
    t_build = local_midnight(args.at)
    config = ProtocolConfig(forest=ForestConfig(n_trees=args.n_trees))
    for sid in store.stations():
        model, _ = train_forest_at(store, weather, holidays, sid, t_build, args.predictors,
                                   config, args.seed, args.window)
        profile = importance(model)
        total = sum(profile.values()) or 1.0
        print(f"station {sid}")
        for name, value in profile.items():
            print(f"  {name:<24} {value:.5f}  {value / total:6.1%}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
