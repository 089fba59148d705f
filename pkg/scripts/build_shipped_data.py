"""Regenerate the datasets and networks shipped in ``barrier_reach/data``.

Runs gen-data and train through the CLI for each system, then copies the
results into the package. Takes roughly an hour on one core.

    python3 scripts/build_shipped_data.py --work /tmp/shipped
"""

import argparse
import logging
import shutil
import sys
from pathlib import Path

from barrier_reach import cli

log = logging.getLogger("build_shipped_data")

DATA = Path(__file__).resolve().parents[1] / "src" / "barrier_reach" / "data"

# sweep flags per system; the linear grids give 900 sets each, the car sweep 3000
LINEAR = ["--grid", "30", "--center-range", "2", "--eps-schedule", "0.8", "1.6"]
SWEEPS = {
    "lin-real": LINEAR,
    "lin-complex": LINEAR,
    "car": ["--count", "3000"],
}
TRAIN = ["--epochs", "20000", "--hidden", "64", "64"]


def run(argv) -> None:
    log.info("barrier-reach %s", " ".join(argv))
    code = cli.main(argv)
    if code != cli.EXIT_OK:
        sys.exit(f"barrier-reach {argv[0]} failed with exit code {code}")


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--work", type=Path, default=Path("shipped_work"))
    p.add_argument("--models", nargs="+", default=list(SWEEPS), choices=list(SWEEPS))
    p.add_argument("--skip-gen", action="store_true", help="reuse datasets already in --work")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    for name in args.models:
        gen_dir = args.work / name / "gen"
        train_dir = args.work / name / "train"
        if not args.skip_gen:
            run(["gen-data", "--model", name, *SWEEPS[name], "--out", str(gen_dir)])
        run(["train", "--dataset", str(gen_dir / "dataset.jsonl"), *TRAIN, "--out", str(train_dir)])
        stem = name.replace("-", "_")
        shutil.copy(gen_dir / "dataset.jsonl", DATA / f"{stem}_dataset.jsonl")
        shutil.copy(train_dir / "model.json", DATA / f"{stem}_metann.json")
        log.info("shipped %s", stem)


if __name__ == "__main__":
    main()
