"""Suboptimality gap for several delay bounds B, agents updating only when forced.

    python3 scripts/fig2_delay_sweep.py [--values 1,3,10,100] [--seeds 7]
"""

import argparse
import os

import numpy as np

from tvqp import recipes
from tvqp.config import load_config
from tvqp.engine import read_trace_csv

HERE = os.path.dirname(os.path.abspath(__file__))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=os.path.join(HERE, "..", "configs", "delay_sweep.ini"))
    ap.add_argument("--values", default="1,3,10,100")
    ap.add_argument("--seeds", default=None, help="comma separated; default is the config seed")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="results/fig2")
    args = ap.parse_args()
    base = load_config(args.config)
    values = args.values.split(",")
    seeds = [base.seed] if args.seeds is None else [int(s) for s in args.seeds.split(",")]

    print("seed  " + "  ".join(f"{'B=' + v:>12}" for v in values) + "  endpoint_monotone  mean_monotone")
    for seed in seeds:
        cfg = base.replace("output", dir=os.path.join(args.out, f"seed{seed}"))
        cfg.seed = seed
        files = recipes.sweep(cfg, "B", values, workers=args.workers)
        alphas = [read_trace_csv(files[v])["alpha"] for v in values]
        final = np.array([a[-1] for a in alphas])
        mean = np.array([a.mean() for a in alphas])
        print(
            f"{seed:>4}  "
            + "  ".join(f"{v:12.4g}" for v in final)
            + f"  {bool(np.all(np.diff(final) >= 0))!s:>17}  {bool(np.all(np.diff(mean) >= 0))!s:>13}"
        )


if __name__ == "__main__":
    main()
