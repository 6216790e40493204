"""``simulate`` command line entry point."""
from __future__ import annotations

import argparse
import sys

from .config import Pattern, Scheme, SystemConfig, load_config
from .errors import BdrisError
from .harness import SWEEPS, ExperimentSpec, report, run, write_csv


def _csv_list(text: str) -> list[str]:
    return [item.strip() for item in text.split(",") if item.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="simulate",
        description="Ergodic sum-rate of RSMA/SDMA with a multi-sector BD-RIS under imperfect CSI.")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", help="key = value scenario file (defaults to the desk-scale scenario)")
    src.add_argument("--table1", action="store_true", help="full-scale scenario (M=20, A=50)")
    p.add_argument("--sweep", choices=sorted(SWEEPS), help="parameter to sweep")
    p.add_argument("--values", type=_csv_list, default=[], help="comma-separated sweep values")
    p.add_argument("--schemes", type=_csv_list, default=["rsma", "sdma"])
    p.add_argument("--patterns", type=_csv_list, default=["idealized"])
    p.add_argument("--realizations", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True, help="CSV output path")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config:
            base = load_config(args.config, base=SystemConfig.desk())
        else:
            base = SystemConfig.table1() if args.table1 else SystemConfig.desk()
        spec = ExperimentSpec(
            base=base, sweep=args.sweep, values=[float(v) for v in args.values],
            schemes=[Scheme(s.lower()) for s in args.schemes],
            patterns=[Pattern(p.lower()) for p in args.patterns],
            realizations=args.realizations, seed=args.seed, workers=args.workers)
        rows = run(spec)
        write_csv(rows, args.out)
    except (BdrisError, ValueError) as exc:
        print(f"simulate: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"simulate: I/O error: {exc}", file=sys.stderr)
        return 1
    print(report(rows))
    return 0


if __name__ == "__main__":
    sys.exit(main())
