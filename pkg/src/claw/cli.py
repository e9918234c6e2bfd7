"""Command line entry point: ``claw run | ablate | metrics``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .adaptive import ABLATIONS
from .config import parse_config
from .errors import ClawError, ConfigError
from .metrics import avg_accuracy_curve, retention_curve
from .runner import (AVG_FIELDS, RETENTION_FIELDS, SIGNIFICANCE_FIELDS, TRANSFER_FIELDS,
                     emit_csv, final_avg, grids_from_results, read_csv, run_experiment,
                     ttest_rows)

log = logging.getLogger("claw")

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG = 0, 1, 2


def _overrides(args) -> dict:
    kw = {}
    if args.seed is not None:
        kw["seeds"] = (args.seed,)
    if args.out_dir is not None:
        kw["out_dir"] = args.out_dir
    if args.subset is not None:
        kw["subset_per_task"] = args.subset
    if args.parallel is not None:
        kw["workers"] = args.parallel
    return kw


def cmd_run(args) -> int:
    cfg = parse_config(args.config).with_overrides(**_overrides(args))
    if getattr(args, "mode", None):
        cfg = cfg.with_overrides(method=("claw",), ablation=args.mode)
    out = run_experiment(cfg)
    log.info("wrote results to %s", out)
    return EXIT_OK


def cmd_metrics(args) -> int:
    src = Path(args.inp)
    if args.kind == "transfer":
        ft = src.parent / "forward_transfer.csv"
        if not ft.exists():
            raise ConfigError("--in", f"{ft} not found; run with forward_transfer: true")
        emit_csv(read_csv(ft), args.out, TRANSFER_FIELDS)
        return EXIT_OK
    grids = grids_from_results(read_csv(src))
    if args.kind in ("avg", "retention"):
        fn, col, fields = ((avg_accuracy_curve, "avg_accuracy", AVG_FIELDS) if args.kind == "avg"
                           else (retention_curve, "retention", RETENTION_FIELDS))
        rows = [{"method": m, "seed": s, "task_index": t + 1, col: v}
                for (m, s), g in sorted(grids.items()) for t, v in enumerate(fn(g))]
        emit_csv(rows, args.out, fields)
        return EXIT_OK
    rows = ttest_rows(final_avg(dict(sorted(grids.items()))))
    emit_csv(rows, args.out, SIGNIFICANCE_FIELDS)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="claw", description="Continual-learning experiment runner")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def run_args(sp):
        sp.add_argument("--config", required=True)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out-dir")
        sp.add_argument("--subset", type=int, help="training examples per task")
        sp.add_argument("--parallel", type=int, metavar="W", help="worker processes")

    run = sub.add_parser("run", help="train and evaluate the configured methods")
    run_args(run)
    run.set_defaults(func=cmd_run)

    ab = sub.add_parser("ablate", help="run CLAW with one ablation switched on")
    run_args(ab)
    ab.add_argument("--mode", required=True, choices=[a for a in ABLATIONS if a != "none"])
    ab.set_defaults(func=cmd_run)

    m = sub.add_parser("metrics", help="derive metric tables from a results.csv")
    m.add_argument("--in", dest="inp", required=True)
    m.add_argument("--kind", required=True, choices=["avg", "retention", "transfer", "ttest"])
    m.add_argument("--out", default="-", help="output path, '-' for stdout")
    m.set_defaults(func=cmd_metrics)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"claw: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ClawError, OSError, ValueError, LookupError) as exc:
        print(f"claw: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
