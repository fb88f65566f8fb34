"""Run a methods x seeds sweep at smoke scale and collect per-run metrics CSVs.

Output layout (one directory per run, as the trainer writes it):

    <out>/<method>_<family>_s<seed>/metrics.csv

which is exactly what the plotting frontend consumes:

    node frontend/dist/cli.js <out>/*/metrics.csv --metric solve_rate --out curves.svg

Runs are sequential (the trainer is CPU-bound and single-process).
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from uedlab.config import smoke_config
from uedlab.orchestrator import Trainer


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--methods", nargs="+", default=["DR", "DEGen"],
                        help="methods to run (DR PLR ACCEL InitialGen DEGen SFL)")
    parser.add_argument("--family", default="key_minigrid",
                        choices=["minigrid", "key_minigrid", "sokoban"])
    parser.add_argument("--seeds", nargs="+", type=int, default=[0, 1, 2])
    parser.add_argument("--updates", type=int, default=300)
    parser.add_argument("--envs", type=int, default=32)
    parser.add_argument("--out", default="runs/matrix")
    args = parser.parse_args()

    out_root = Path(args.out)
    csvs: list[str] = []
    for method in args.methods:
        for seed in args.seeds:
            cfg = smoke_config(method, args.family, seed=seed,
                               num_updates=args.updates, num_envs=args.envs)
            run_dir = out_root / f"{method}_{args.family}_s{seed}"
            t0 = time.perf_counter()
            result = Trainer(cfg, run_dir).train()
            print(f"{run_dir}: {result['updates']} updates in "
                  f"{time.perf_counter() - t0:.1f}s", flush=True)
            csvs.append(result["metrics_csv"])
    print("\nmetrics CSVs:")
    for path in csvs:
        print(f"  {path}")
    print(f"\nplot: node frontend/dist/cli.js {' '.join(csvs)} "
          f"--metric solve_rate --out {out_root}/curves.svg")
    return 0


if __name__ == "__main__":
    sys.exit(main())
