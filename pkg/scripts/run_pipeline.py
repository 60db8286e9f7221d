#!/usr/bin/env python3
"""End-to-end experiment: corpus -> training -> evaluation -> simulation.

Produces the Table-1-style report, per-round curves, and closed-loop game
scores under artifacts/<run>/ using the command-line entry points, so the
whole chain is exercised exactly as a user would drive it.
"""

import argparse
import sys
from pathlib import Path

from flightpref.cli import main as cli


def run(argv) -> None:
    print("+ flightpref " + " ".join(argv))
    code = cli(argv)
    if code:
        sys.exit(code)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="artifacts/pipeline")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--games", type=int, default=500,
                        help="training corpus size (6-round games)")
    parser.add_argument("--eval-games", type=int, default=91)
    parser.add_argument("--sim-games", type=int, default=100)
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    corpus = out / "train_corpus.jsonl"
    models = out / "models"

    run(["--seed", str(args.seed), "datagen",
         "--games", str(args.games), "--out", str(corpus)])
    run(["--seed", str(args.seed), "train",
         "--corpus", str(corpus), "--out-dir", str(models)])
    run(["--seed", str(args.seed), "evaluate",
         "--artifacts", str(models),
         "--games", str(args.eval_games),
         "--report", str(out / "report.json"),
         "--table", str(out / "table.txt"),
         "--curves", str(out / "curves.csv")])
    run(["--seed", str(args.seed), "simulate",
         "--artifacts", str(models),
         "--games", str(args.sim_games),
         "--log-dir", str(out / "game_logs"),
         "--out", str(out / "games.jsonl")])
    print(f"\nall outputs under {out}/")


if __name__ == "__main__":
    main()
