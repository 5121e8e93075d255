"""Command line front end: ``tvqp {run,compare,sweep,bounds,nonconvexity,plot}``."""

from __future__ import annotations

import argparse
import sys

from . import recipes, report
from .config import load_config
from .errors import TvqpError


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tvqp", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="asynchronous run: trace, intervals and summary CSVs")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (default: [output] dir)")
    r.add_argument("--dump-schedule", action="store_true", help="also write the event schedule as CSV")

    c = sub.add_parser("compare", help="async BCD vs synchronous BCD vs consensus on shared samples")
    c.add_argument("config")
    c.add_argument("--out")

    s = sub.add_parser("sweep", help="one run per value of a parameter")
    s.add_argument("config")
    s.add_argument("--param", required=True, choices=sorted(recipes.SWEEP_PARAMS))
    s.add_argument("--values", required=True, help="comma separated values")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out")

    b = sub.add_parser("bounds", help="per-interval constants and tracking bounds")
    b.add_argument("config")
    b.add_argument("--out")

    sub.add_parser("nonconvexity", help="aggregate of strongly convex samples that is nonconvex")

    pl = sub.add_parser("plot", help="render trace CSV columns as an SVG line chart")
    pl.add_argument("csv")
    pl.add_argument("-o", "--output", required=True)
    pl.add_argument("--cols", default="k,alpha", help="x column then y columns, comma separated")
    return p


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "nonconvexity":
            print(recipes.nonconvexity_demo())
        elif args.command == "plot":
            report.plot_csv(args.csv, args.output, [c.strip() for c in args.cols.split(",") if c.strip()])
            print(args.output)
        else:
            cfg = load_config(args.config)
            if args.command == "run":
                files = recipes.run_experiment(cfg, args.out, args.dump_schedule)
            elif args.command == "compare":
                files = recipes.compare(cfg, args.out)
            elif args.command == "sweep":
                values = [v.strip() for v in args.values.split(",") if v.strip()]
                files = recipes.sweep(cfg, args.param, values, args.out, args.workers)
            else:
                path, table = recipes.bounds_report(cfg, args.out)
                print(table)
                files = {"bounds": path}
            for path in files.values():
                print(path)
    except TvqpError as exc:
        print(f"tvqp: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"tvqp: I/O error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
