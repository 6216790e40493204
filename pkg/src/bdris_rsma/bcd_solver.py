"""Outer block-coordinate-descent loop over equalizers/weights, BD-RIS and precoders."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .bdris_block import assemble_phase_quadratics, sweep_cells
from .channel import CsiSampleSet
from .config import BcdParams, Scheme, ValidatedConfig
from .errors import Infeasible, QosInfeasible
from .precoder_block import (ROW_SLACK, assemble_socp_data, feasible_reference, socp_objective,
                             solve_precoder)
from .rsma_metrics import (BdRis, PrecoderSolution, RateReport, effective_channels, link_statistics,
                           rate_report, saa_average_rates, sinr_and_rates, sum_rate_metric,
                           wmmse_state)

log = logging.getLogger(__name__)


@dataclass
class SolveTrace:
    """Per-iteration record of one solve.

    ``rates[v-1]`` is the SAA metric after outer iteration ``v``;
    ``initial_rate`` is the metric at the starting point.  ``socp_reference``
    holds, for each iteration, the precoder-block objective of the previous
    precoder on the new block data (``nan`` when it violates a row there by
    more than the solver's row slack).
    """

    initial_rate: float = float("nan")
    rates: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    qos_retries: int = 0
    state_refreshes: int = 0
    relaxations: list = field(default_factory=list)      # (iteration, R_th actually used)
    socp_objectives: list = field(default_factory=list)
    socp_reference: list = field(default_factory=list)
    cell_norm_errors: list = field(default_factory=list)
    powers: list = field(default_factory=list)
    sweeps: list = field(default_factory=list)
    wall_time: float = 0.0


@dataclass
class BcdResult:
    ris: BdRis
    prec: PrecoderSolution
    trace: SolveTrace
    history: Optional[list] = None      # (ris, prec) after each iteration when requested


def initialize(samples: np.ndarray, cfg: ValidatedConfig, rng: np.random.Generator,
               scheme: Scheme = Scheme.RSMA):
    """Random-phase BD-RIS and matched-filter precoders.

    The common precoder follows the summed effective channels of all users
    with 70% of the budget; each private precoder follows its own user's
    summed channel with an equal share of the remaining 30%.  Without a
    common stream every private precoder gets ``P/K``.
    """
    ris = BdRis.random_phases(cfg.L, cfg.M, rng)
    b = effective_channels(samples, ris, cfg.sector_of_user)        # (K, A, N)
    K = cfg.K
    own = b.sum(axis=1).T                                            # (N, K)
    if Scheme(scheme) is Scheme.RSMA:
        p_c = _scaled(b.sum(axis=(0, 1)), 0.7 * cfg.P)
        share = 0.3 * cfg.P / K
    else:
        p_c = np.zeros(cfg.N, dtype=complex)
        share = cfg.P / K
    Pp = np.stack([_scaled(own[:, k], share) for k in range(K)], axis=1)
    return ris, PrecoderSolution(p_c, Pp, np.zeros(K))


def _scaled(direction: np.ndarray, power: float) -> np.ndarray:
    norm = np.linalg.norm(direction)
    if norm == 0:
        direction = np.ones_like(direction)
        norm = np.linalg.norm(direction)
    return direction * np.sqrt(power) / norm


def saa_metric(samples: np.ndarray, ris: BdRis, prec: PrecoderSolution, cfg: ValidatedConfig) -> float:
    r_c, r_p = saa_average_rates(samples, prec, ris, cfg.sigma2, cfg.sector_of_user)
    return sum_rate_metric(r_c, r_p)


def solve(sample_set: CsiSampleSet, cfg: ValidatedConfig, rng: Optional[np.random.Generator] = None,
          params: Optional[BcdParams] = None, init=None, keep_history: bool = False) -> BcdResult:
    """Alternate WMMSE updates, a BD-RIS sweep and a precoder solve until the metric settles.

    Parameters
    ----------
    sample_set : CsiSampleSet
    cfg : ValidatedConfig
    rng : numpy.random.Generator, optional
        Drives the random initial phases; needed unless ``init`` is given.
    params : BcdParams, optional
        Defaults to ``cfg.bcd``.
    init : (BdRis, PrecoderSolution), optional
    keep_history : bool
        Store every iterate in ``BcdResult.history``.

    Raises
    ------
    QosInfeasible
        The precoder block stayed infeasible after every QoS relaxation.
    SolverStall
        Propagated from the precoder block.
    """
    params = params or cfg.bcd
    common = params.scheme is Scheme.RSMA
    samples = sample_set.samples
    if init is None:
        if rng is None:
            raise ValueError("solve needs either rng or init")
        init = initialize(samples, cfg, rng, params.scheme)
    ris, prec = init[0].copy(), init[1].copy()

    trace = SolveTrace()
    history = [] if keep_history else None
    start = time.perf_counter()
    prev = saa_metric(samples, ris, prec, cfg)
    trace.initial_rate = prev
    for v in range(1, params.v_max + 1):
        state = wmmse_state(samples, ris, prec, cfg.sigma2, cfg.sector_of_user)
        pq = assemble_phase_quadratics(samples, prec, state, cfg.sigma2, cfg.sector_of_user,
                                       cfg.L, common=common)
        sw = sweep_cells(pq, ris, cfg.rcg, cfg.sweep.tol, cfg.sweep.max_sweeps)
        ris = sw.ris
        prec = _precoder_step(samples, ris, prec, state, cfg, params, common, v, trace)

        rate = saa_metric(samples, ris, prec, cfg)
        trace.rates.append(rate)
        trace.sweeps.append(sw.sweeps)
        trace.cell_norm_errors.append(ris.cell_norm_error())
        trace.powers.append(prec.power())
        trace.iterations = v
        if keep_history:
            history.append((ris.copy(), prec.copy()))
        if abs(rate - prev) <= params.rel_tol * abs(prev):
            trace.converged = True
            break
        prev = rate
    trace.wall_time = time.perf_counter() - start
    return BcdResult(ris=ris, prec=prec, trace=trace, history=history)


def _precoder_step(samples, ris, prec, state, cfg, params, common, v, trace):
    """Solve the precoder block, falling back when its QoS rows are infeasible.

    The first fallback recomputes equalizers and weights at the new BD-RIS
    (which makes the previous precoder feasible whenever its true rates meet
    the targets); after that the targets shrink geometrically.
    """
    r_th = cfg.R_th.copy()
    refreshed = False
    attempt = 0
    while True:
        data = assemble_socp_data(samples, ris, state, cfg.sigma2, cfg.sector_of_user, cfg.P,
                                  r_th, common=common)
        try:
            new = solve_precoder(data, reference=prec)
            break
        except Infeasible:
            if not refreshed:
                state = wmmse_state(samples, ris, prec, cfg.sigma2, cfg.sector_of_user)
                refreshed = True
                trace.state_refreshes += 1
                continue
            if attempt == params.qos_max_retries:
                raise QosInfeasible(f"precoder block infeasible at iteration {v} after "
                                    f"{attempt} QoS relaxations")
            attempt += 1
            r_th = r_th * params.qos_shrink
            trace.qos_retries += 1
    if attempt:
        trace.relaxations.append((v, r_th.copy()))
        log.info("iteration %d: QoS targets relaxed to %s", v, np.round(r_th, 4))
    previous = feasible_reference(data, prec, ROW_SLACK)
    ref = socp_objective(data, previous) if previous is not None else float("nan")
    trace.socp_objectives.append(socp_objective(data, new))
    trace.socp_reference.append(ref)
    return new


def evaluate(ris: BdRis, prec: PrecoderSolution, q_true: np.ndarray, cfg: ValidatedConfig) -> RateReport:
    """Rates on the perfect channel with the common split re-capped to the realized common rate."""
    stats = link_statistics(q_true, ris, prec, cfg.sigma2, cfg.sector_of_user)
    _, _, r_c, r_p = sinr_and_rates(stats)
    return rate_report(r_c, r_p, prec.c_bar, "perfect", cap=True)
