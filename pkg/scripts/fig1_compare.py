"""Tracking error of async BCD, synchronous BCD and consensus on one instance.

    python3 scripts/fig1_compare.py [--config configs/compare_n2.ini] [--out results/fig1]
"""

import argparse
import os

from tvqp import recipes
from tvqp.config import load_config

HERE = os.path.dirname(os.path.abspath(__file__))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=os.path.join(HERE, "..", "configs", "compare_n2.ini"))
    ap.add_argument("--out", default="results/fig1")
    ap.add_argument("--seed", type=int)
    args = ap.parse_args()
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    files = recipes.compare(cfg, args.out)
    for path in files.values():
        print(path)


if __name__ == "__main__":
    main()
