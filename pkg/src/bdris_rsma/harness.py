"""Monte Carlo sum-rate experiments over parameter sweeps, written as flat CSV."""
from __future__ import annotations

import csv
import dataclasses
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .bcd_solver import evaluate, solve
from .channel import draw_sample_set, gen_realization
from .config import Pattern, Scheme, SystemConfig, validate
from .errors import InvalidConfig, QosInfeasible, SolverStall

CSV_COLUMNS = ("scheme", "pattern", "sweep_param", "sweep_value", "realization", "sum_rate_bps_hz",
               "iterations", "converged", "qos_retries", "status")

# sweep name -> SystemConfig field it overrides
SWEEPS = {"power": "P_dbm", "delta": "delta", "rth": "R_th", "m": "M", "n": "N"}


@dataclass(frozen=True)
class ExperimentSpec:
    """One experiment: every sweep value x pattern x scheme, ``realizations`` drops each.

    ``sweep`` is one of :data:`SWEEPS` or ``None`` for a single point.
    """

    base: SystemConfig
    sweep: Optional[str] = None
    values: Sequence[float] = ()
    schemes: Sequence[Scheme] = (Scheme.RSMA, Scheme.SDMA)
    patterns: Sequence[Pattern] = (Pattern.IDEALIZED,)
    realizations: int = 10
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.realizations < 1:
            raise InvalidConfig("realizations must be >= 1")
        if self.sweep is not None:
            if self.sweep not in SWEEPS:
                raise InvalidConfig(f"unknown sweep {self.sweep!r}; choose from {sorted(SWEEPS)}")
            if len(self.values) == 0:
                raise InvalidConfig(f"sweep {self.sweep!r} needs at least one value")
        if not self.schemes or not self.patterns:
            raise InvalidConfig("schemes and patterns must be non-empty")
        object.__setattr__(self, "schemes", tuple(Scheme(s) for s in self.schemes))
        object.__setattr__(self, "patterns", tuple(Pattern(p) for p in self.patterns))

    def points(self):
        """(sweep value or None, raw config) for each sweep point."""
        if self.sweep is None:
            return [(None, self.base)]
        out = []
        for value in self.values:
            field_name = SWEEPS[self.sweep]
            changes = {field_name: int(value) if field_name in ("M", "N") else float(value)}
            if field_name == "M":
                changes.update(M_x=None, M_y=None)
            out.append((value, dataclasses.replace(self.base, **changes)))
        return out


def realization_streams(seed: int, r: int):
    """Independent generators for channel, CSI error and initial point of drop ``r``.

    They depend only on ``(seed, r)``, so schemes, patterns and sweep values
    all see the same drop.
    """
    return [np.random.default_rng(s) for s in np.random.SeedSequence([seed, r]).spawn(3)]


def run_realization(raw: SystemConfig, scheme: Scheme, seed: int, r: int) -> dict:
    """Design and evaluate one drop; returns the row fields that depend on the outcome."""
    cfg = validate(dataclasses.replace(raw, bcd=dataclasses.replace(raw.bcd, scheme=scheme)))
    rng_ch, rng_csi, rng_init = realization_streams(seed, r)
    real = gen_realization(cfg, rng_ch)
    sample_set = draw_sample_set(real, cfg, rng_csi)
    try:
        res = solve(sample_set, cfg, rng_init)
    except QosInfeasible:
        return dict(sum_rate=math.nan, iterations=0, converged=False, qos_retries=cfg.bcd.qos_max_retries + 1,
                    status="qos_infeasible")
    except SolverStall:
        return dict(sum_rate=math.nan, iterations=0, converged=False, qos_retries=0, status="solver_stall")
    report = evaluate(res.ris, res.prec, sample_set.q_true, cfg)
    return dict(sum_rate=report.sum_rate, iterations=res.trace.iterations,
                converged=res.trace.converged, qos_retries=res.trace.qos_retries, status="ok")


def _task(args):
    return run_realization(*args)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, float):
        return repr(x)
    return str(x)


def run(spec: ExperimentSpec) -> list[dict]:
    """All detail and aggregate rows in deterministic order.

    Order is sweep value, then pattern, then scheme, then realization, with the
    aggregate row closing each group.  Failed drops keep their row (status
    column) and are left out of the mean.
    """
    groups, tasks = [], []
    for value, raw in spec.points():
        raw = dataclasses.replace(raw, seed=spec.seed)
        for pattern in spec.patterns:
            praw = dataclasses.replace(raw, pattern=pattern)
            validate(praw)          # fail early on a bad sweep point
            for scheme in spec.schemes:
                groups.append((value, pattern, scheme))
                tasks.extend((praw, scheme, spec.seed, r) for r in range(spec.realizations))

    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            results = list(pool.map(_task, tasks, chunksize=1))
    else:
        results = [_task(t) for t in tasks]

    rows = []
    R = spec.realizations
    for g, (value, pattern, scheme) in enumerate(groups):
        base = dict(scheme=scheme.value, pattern=pattern.value, sweep_param=spec.sweep or "none",
                    sweep_value=value)
        detail = results[g * R:(g + 1) * R]
        for r, res in enumerate(detail):
            rows.append(dict(base, realization=r, sum_rate_bps_hz=res["sum_rate"],
                             iterations=res["iterations"], converged=res["converged"],
                             qos_retries=res["qos_retries"], status=res["status"]))
        ok = [res for res in detail if res["status"] == "ok"]
        rows.append(dict(
            base, realization="mean",
            sum_rate_bps_hz=float(np.mean([res["sum_rate"] for res in ok])) if ok else math.nan,
            iterations=float(np.mean([res["iterations"] for res in ok])) if ok else math.nan,
            converged=float(np.mean([res["converged"] for res in ok])) if ok else math.nan,
            qos_retries=float(np.mean([res["qos_retries"] for res in detail])),
            status="aggregate"))
    return rows


def to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def write_csv(rows: list[dict], path: Union[str, Path]) -> None:
    Path(path).write_text(to_csv(rows))


def read_csv(path: Union[str, Path]) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def report(rows: list[dict]) -> str:
    """One summary line per aggregate row.

    Each line carries the ergodic sum-rate, mean iterations, convergence and
    infeasibility fractions, and for RSMA the gap to the matching SDMA row.
    """
    def key(row):
        return (row["pattern"], str(row["sweep_param"]), str(row["sweep_value"]))

    aggregates = [row for row in rows if row["status"] == "aggregate"]
    if not aggregates:
        raise ValueError("report needs at least one aggregate row")
    sdma = {key(row): float(row["sum_rate_bps_hz"]) for row in aggregates if row["scheme"] == "sdma"}
    lines = []
    for agg in aggregates:
        detail = [row for row in rows if row["status"] != "aggregate" and row["scheme"] == agg["scheme"]
                  and key(row) == key(agg)]
        n = len(detail)
        failed = sum(1 for row in detail if row["status"] != "ok")
        where = "" if agg["sweep_param"] in ("none", None) else f" {agg['sweep_param']}={agg['sweep_value']}"
        line = (f"{agg['scheme']:<4} {agg['pattern']:<9}{where}: ergodic sum-rate "
                f"{float(agg['sum_rate_bps_hz']):.4f} bps/Hz over {n - failed}/{n} drops, "
                f"mean iterations {float(agg['iterations']):.1f}, "
                f"converged {100 * float(agg['converged']):.0f}%, "
                f"infeasible {100 * failed / n if n else 0.0:.0f}%")
        if agg["scheme"] == "rsma" and key(agg) in sdma:
            line += f", RSMA-SDMA gap {float(agg['sum_rate_bps_hz']) - sdma[key(agg)]:+.4f} bps/Hz"
        lines.append(line)
    return "\n".join(lines)
