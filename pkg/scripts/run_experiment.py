"""Generate the bundled four-station corpus and run the full evaluation on it.

    python scripts/run_experiment.py --seed 7 --out runs/seed7

Writes the corpus under OUT/data and the evaluation under OUT/eval, then
prints strict accuracy_critical per station and method.
"""

import argparse
import csv
from pathlib import Path

from occforecast.cli import main as cli


def parse_args():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--out", type=Path, default=Path("runs/experiment"))
    ap.add_argument("--from", dest="first", default="2015-02-05")
    ap.add_argument("--to", dest="last", default="2015-02-12")
    ap.add_argument("--jobs", type=int, default=1)
    return ap.parse_args()


def main() -> int:
    args = parse_args()
    data, result = args.out / "data", args.out / "eval"
    if cli(["synth", "--scenario", "four_stations", "--seed", str(args.seed), "--out", str(data)]):
        return 1
    code = cli(["evaluate", "--data", str(data), "--from", args.first, "--to", args.last,
                "--seed", str(args.seed), "--jobs", str(args.jobs), "--out", str(result)])
    if code:
        return code
    with open(result / "report.csv", newline="") as fh:
        rows = [r for r in csv.DictReader(fh)
                if r["criterion"] == "strict" and r["age_bucket"] == "all" and r["metric"] == "accuracy_critical"]
    print(f"{'station':>8} {'method':<12} accuracy_critical")
    for r in rows:
        print(f"{r['station']:>8} {r['method']:<12} {r['value']}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
