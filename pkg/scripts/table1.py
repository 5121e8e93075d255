"""RMS and before-sample error of async BCD and the consensus baseline over several seeds.

    python3 scripts/table1.py --seeds 0,1,2,3,4,5,6,7,8,9
"""

import argparse
import os

from tvqp import recipes
from tvqp.config import load_config

HERE = os.path.dirname(os.path.abspath(__file__))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=os.path.join(HERE, "..", "configs", "compare_n2.ini"))
    ap.add_argument("--seeds", default=None, help="comma separated; default is the config seed")
    args = ap.parse_args()
    base = load_config(args.config).replace("output", svg=False)
    seeds = [base.seed] if args.seeds is None else [int(s) for s in args.seeds.split(",")]
    print(f"{'seed':>4} {'label':>10} {'rms':>10} {'before':>10} {'max':>10}")
    wins = [0, 0]
    for seed in seeds:
        base.seed = seed
        _, summaries = recipes.compare_traces(base)
        by = {s.label: s for s in summaries}
        for s in summaries:
            print(f"{seed:>4} {s.label:>10} {s.rms_error:10.4g} {s.avg_before_sample:10.4g} {s.max_error:10.4g}")
        wins[0] += by["async_bcd"].rms_error < by["consensus"].rms_error
        wins[1] += by["async_bcd"].avg_before_sample < by["consensus"].avg_before_sample
    print(f"async below consensus: rms {wins[0]}/{len(seeds)}, before-sample {wins[1]}/{len(seeds)}")


if __name__ == "__main__":
    main()
