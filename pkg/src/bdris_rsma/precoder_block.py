"""Convex precoder / common-rate-split subproblem for fixed equalizers, weights and BD-RIS.

With ``Cg = -c_bar`` the block reads

    min   sum_k [ Cg_k + sum_j p_j^H Psi_p,k p_j - 2 Re{psi_p,k^H p_k} ]
    s.t.  ||p_c||^2 + sum_k ||p_k||^2 <= P
          p_c^H Psi_c,k p_c + sum_j p_j^H Psi_c,k p_j - 2 Re{psi_c,k^H p_c} <= sum(Cg) + xi_c,k
          Cg <= 0
          sum_j p_j^H Psi_p,k p_j - 2 Re{psi_p,k^H p_k} + Cg_k <= xi_p,k - R_th,k

and is handed to Clarabel as a real-valued SOCP.  Without a common stream
(SDMA) ``p_c`` and ``Cg`` are absent together with the common-rate rows.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import clarabel
import numpy as np
import scipy.sparse as sp

from .errors import Infeasible, SolverStall
from .rsma_metrics import EqualizerWeightState, PrecoderSolution, effective_channels, BdRis

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-6
NEGLIGIBLE_ROW = 1e-8
# Slack added to every rate row before solving.  Rows of nearly starved users
# otherwise leave a feasible set with empty interior, which interior-point
# methods handle poorly.
ROW_SLACK = 1e-7
LOOSE_TOL = 1e-7


@dataclass
class SocpData:
    """Sample-averaged coefficients of the precoder block (K users, N antennas)."""

    psi_c: np.ndarray      # (K, N)
    psi_p: np.ndarray      # (K, N)
    Psi_c: np.ndarray      # (K, N, N)
    Psi_p: np.ndarray      # (K, N, N)
    xi_c: np.ndarray       # (K,)
    xi_p: np.ndarray       # (K,)
    P_budget: float
    R_th: np.ndarray       # (K,)
    common: bool = True

    @property
    def K(self) -> int:
        return self.psi_p.shape[0]

    @property
    def N(self) -> int:
        return self.psi_p.shape[1]


def assemble_socp_data(samples: np.ndarray, ris: BdRis, state: EqualizerWeightState,
                       sigma2, sector_of_user, P_budget: float, R_th,
                       common: bool = True) -> SocpData:
    """Per-sample coefficients averaged over the A samples in ``samples`` (K, A, N, M)."""
    sigma2 = np.asarray(sigma2, dtype=float)[:, None]
    b = effective_channels(samples, ris, sector_of_user)            # (K, A, N)

    def block(lam, g):
        psi = (lam * g.conj())[..., None] * b
        Psi = np.einsum("ka,kan,kam->knm", lam * np.abs(g) ** 2, b, b.conj())
        xi = np.log2(lam) - lam * np.abs(g) ** 2 * sigma2 - lam + 1.0
        A = b.shape[1]
        return psi.mean(axis=1), Psi / A, xi.mean(axis=1)

    psi_c, Psi_c, xi_c = block(state.lambda_c, state.g_c)
    psi_p, Psi_p, xi_p = block(state.lambda_p, state.g_p)
    if not common:
        psi_c = np.zeros_like(psi_c)
        Psi_c = np.zeros_like(Psi_c)
        xi_c = np.zeros_like(xi_c)
    K = psi_p.shape[0]
    r_th = np.broadcast_to(np.asarray(R_th, dtype=float), (K,)).copy()
    return SocpData(psi_c=psi_c, psi_p=psi_p, Psi_c=_hermitize(Psi_c), Psi_p=_hermitize(Psi_p),
                    xi_c=xi_c, xi_p=xi_p, P_budget=float(P_budget), R_th=r_th, common=common)


def _hermitize(mats: np.ndarray) -> np.ndarray:
    return 0.5 * (mats + np.conj(np.swapaxes(mats, -1, -2)))


# ---------------------------------------------------------------------------
# objective / constraint evaluation on complex quantities

def _quad(Psi: np.ndarray, P: np.ndarray) -> float:
    """sum over columns p of P of p^H Psi p."""
    return float(np.real(np.einsum("nj,nm,mj->", P.conj(), Psi, P)))


def private_terms(data: SocpData, prec: PrecoderSolution) -> np.ndarray:
    """``sum_j p_j^H Psi_p,k p_j - 2 Re{psi_p,k^H p_k}`` for every k."""
    Pp = prec.p_private
    quad = np.real(np.einsum("nj,knm,mj->k", Pp.conj(), data.Psi_p, Pp))
    lin = 2.0 * np.real(np.einsum("kn,nk->k", data.psi_p.conj(), Pp))
    return quad - lin


def common_terms(data: SocpData, prec: PrecoderSolution) -> np.ndarray:
    """``p_c^H Psi_c,k p_c + sum_j p_j^H Psi_c,k p_j - 2 Re{psi_c,k^H p_c}`` for every k."""
    allp = np.column_stack([prec.p_common, prec.p_private])
    quad = np.real(np.einsum("nj,knm,mj->k", allp.conj(), data.Psi_c, allp))
    lin = 2.0 * np.real(data.psi_c.conj() @ prec.p_common)
    return quad - lin


def socp_objective(data: SocpData, prec: PrecoderSolution) -> float:
    return float(np.sum(private_terms(data, prec)) - np.sum(prec.c_bar))


def residuals(data: SocpData, prec: PrecoderSolution) -> dict:
    """Largest violation of each constraint family (<= 0 means satisfied)."""
    c_bar = np.asarray(prec.c_bar, dtype=float)
    out = {
        "power": prec.power() - data.P_budget,
        "c_nonneg": float(np.max(-c_bar)) if c_bar.size else 0.0,
        "qos": float(np.max(private_terms(data, prec) - c_bar - data.xi_p + data.R_th)),
    }
    if data.common:
        out["common"] = float(np.max(common_terms(data, prec) - data.xi_c + c_bar.sum()))
    else:
        out["common"] = float(np.max(np.abs(prec.p_common))) if prec.p_common.size else 0.0
    return out


def max_residual(data: SocpData, prec: PrecoderSolution) -> float:
    return max(residuals(data, prec).values())


def common_rate_bound(data: SocpData, prec: PrecoderSolution) -> np.ndarray:
    """Per-user upper bound on sum(c_bar) implied by the common-rate rows."""
    return data.xi_c - common_terms(data, prec)


def best_common_split(data: SocpData, p_common: np.ndarray, p_private: np.ndarray) -> Optional[np.ndarray]:
    """Objective-optimal ``c_bar`` for fixed precoders.

    Returns ``None`` when the QoS and common-rate rows leave no room for any
    split (beyond ``RESIDUAL_TOL``).  Without a common stream the split is
    zero and feasibility is left to :func:`max_residual`.
    """
    K = data.K
    if not data.common:
        return np.zeros(K)
    probe = PrecoderSolution(p_common, p_private, np.zeros(K))
    qos_room = data.xi_p - data.R_th - private_terms(data, probe)     # c_bar_k >= -qos_room_k
    lower = np.maximum(-qos_room, 0.0)
    room = float(np.min(common_rate_bound(data, probe)))             # sum(c_bar) <= room
    if lower.sum() > room + RESIDUAL_TOL:
        return None
    return lower + max(room - lower.sum(), 0.0) / K


# ---------------------------------------------------------------------------
# real-valued conic form

def _realify(F: np.ndarray) -> np.ndarray:
    return np.block([[F.real, -F.imag], [F.imag, F.real]])


def _psd_factor(Psi: np.ndarray) -> np.ndarray:
    """F with F^H F = Psi (eigen factorisation, negative round-off clipped)."""
    w, U = np.linalg.eigh(Psi)
    return np.sqrt(np.clip(w, 0.0, None))[:, None] * U.conj().T


def _cvec(z: np.ndarray) -> np.ndarray:
    return np.concatenate([z.real, z.imag])


class _Layout:
    def __init__(self, N: int, K: int, common: bool):
        self.N, self.K, self.common = N, K, common
        nb = 2 * N
        start = nb if common else 0
        self.pc = slice(0, nb) if common else None
        self.pp = [slice(start + nb * k, start + nb * (k + 1)) for k in range(K)]
        self.n_prec = start + nb * K
        self.cg = slice(self.n_prec, self.n_prec + K) if common else None
        self.n = self.n_prec + (K if common else 0)

    def unpack(self, x: np.ndarray):
        N = self.N

        def cplx(sl):
            v = x[sl]
            return v[:N] + 1j * v[N:]

        p_c = cplx(self.pc) if self.common else np.zeros(N, dtype=complex)
        Pp = np.column_stack([cplx(sl) for sl in self.pp])
        c_bar = -x[self.cg] if self.common else np.zeros(self.K)
        return p_c, Pp, c_bar


def _quad_cone(G: np.ndarray, e: np.ndarray, d: float, scale: float = 1.0):
    """Rows encoding ``||G x||^2 <= d - e.x`` as a second-order cone ``s = b - A x``.

    The inequality is first divided by ``scale`` (its typical magnitude) so the
    cone slack ``t = (d - e.x) / scale`` stays O(1); then
    (1 + t, 1 - t, 2 G x / sqrt(scale)) lies in the second-order cone.
    """
    e = e / scale
    d = d / scale
    A = np.vstack([e, -e, -2.0 * G / np.sqrt(scale)])
    b = np.concatenate([[1.0 + d, 1.0 - d], np.zeros(G.shape[0])])
    return A, b


def _build(data: SocpData):
    N, K = data.N, data.K
    lay = _Layout(N, K, data.common)
    n = lay.n
    P = np.zeros((n, n))
    q = np.zeros(n)
    H = 2.0 * _realify(data.Psi_p.sum(axis=0))
    for k, sl in enumerate(lay.pp):
        P[sl, sl] = H
        q[sl] = -2.0 * _cvec(data.psi_p[k])
    blocks_A, blocks_b, cones = [], [], []
    infeasible_rows: list = []

    A = np.zeros((1 + lay.n_prec, n))
    A[1:, :lay.n_prec] = -np.eye(lay.n_prec)
    b = np.zeros(1 + lay.n_prec)
    b[0] = np.sqrt(data.P_budget)
    blocks_A.append(A); blocks_b.append(b); cones.append(clarabel.SecondOrderConeT(A.shape[0]))

    if data.common:
        q[lay.cg] = 1.0
        A = np.zeros((K, n))
        A[:, lay.cg] = np.eye(K)
        blocks_A.append(A); blocks_b.append(np.zeros(K)); cones.append(clarabel.NonnegativeConeT(K))
        all_blocks = [lay.pc] + lay.pp
        for k in range(K):
            scale = _row_scale(data.Psi_c[k], data.psi_c[k], data.P_budget)
            if scale < NEGLIGIBLE_ROW:
                # user cannot decode the common stream: sum(c_bar) <= xi_c,k
                A = np.zeros((1, n))
                A[0, lay.cg] = -1.0
                blocks_A.append(A); blocks_b.append(np.array([data.xi_c[k] + ROW_SLACK]))
                cones.append(clarabel.NonnegativeConeT(1))
                continue
            R = _realify(_psd_factor(data.Psi_c[k]))
            G = np.zeros((2 * N * len(all_blocks), n))
            for j, sl in enumerate(all_blocks):
                G[2 * N * j:2 * N * (j + 1), sl] = R
            e = np.zeros(n)
            e[lay.pc] = -2.0 * _cvec(data.psi_c[k])
            e[lay.cg] = -1.0
            A, b = _quad_cone(G, e, data.xi_c[k] + ROW_SLACK, _norm(scale))
            blocks_A.append(A); blocks_b.append(b); cones.append(clarabel.SecondOrderConeT(A.shape[0]))

    for k in range(K):
        bound = data.xi_p[k] - data.R_th[k] + ROW_SLACK
        scale = _row_scale(data.Psi_p[k], data.psi_p[k], data.P_budget)
        if scale < NEGLIGIBLE_ROW:
            # starved user: the row no longer depends on the precoders
            if data.common:
                A = np.zeros((1, n))
                A[0, lay.cg.start + k] = 1.0
                blocks_A.append(A); blocks_b.append(np.array([bound]))
                cones.append(clarabel.NonnegativeConeT(1))
            elif bound < 0.0:
                infeasible_rows.append(k)
            continue
        R = _realify(_psd_factor(data.Psi_p[k]))
        G = np.zeros((2 * N * K, n))
        for j, sl in enumerate(lay.pp):
            G[2 * N * j:2 * N * (j + 1), sl] = R
        e = np.zeros(n)
        e[lay.pp[k]] = -2.0 * _cvec(data.psi_p[k])
        if data.common:
            e[lay.cg.start + k] = 1.0
        A, b = _quad_cone(G, e, bound, _norm(scale))
        blocks_A.append(A); blocks_b.append(b); cones.append(clarabel.SecondOrderConeT(A.shape[0]))

    A = sp.csc_matrix(np.vstack(blocks_A))
    b = np.concatenate(blocks_b)
    lay.infeasible_rows = infeasible_rows
    return lay, sp.csc_matrix(np.triu(P)), q, A, b, cones


NORM_FLOOR = 1e-2


def _norm(scale: float) -> float:
    return min(max(scale, NORM_FLOOR), 1.0)


def _row_scale(Psi: np.ndarray, psi: np.ndarray, P_budget: float) -> float:
    """Largest change of ``p^H Psi p - 2 Re{psi^H p}`` over the power ball."""
    return float(np.linalg.norm(Psi, 2) * P_budget + 2.0 * np.linalg.norm(psi) * np.sqrt(P_budget))


def _settings(tol: float, max_iter: int):
    s = clarabel.DefaultSettings()
    s.verbose = False
    s.max_iter = max_iter
    s.tol_gap_abs = tol
    s.tol_gap_rel = tol
    s.tol_feas = tol
    s.tol_ktratio = 1e-8
    return s


_INFEASIBLE = {"PrimalInfeasible", "AlmostPrimalInfeasible"}
_ACCEPTED = {"Solved", "AlmostSolved"}


def solve_precoder(data: SocpData, reference: Optional[PrecoderSolution] = None,
                   tol: float = 1e-9, max_iter: int = 200) -> PrecoderSolution:
    """Solve the precoder block.

    Parameters
    ----------
    data : SocpData
    reference : PrecoderSolution, optional
        Previous iterate.  When it is feasible for ``data`` (with its best
        common split) the returned objective is guaranteed not to exceed it.
    tol : float
        Clarabel gap and feasibility tolerance.

    Raises
    ------
    Infeasible
        The QoS rows admit no point.
    SolverStall
        No point satisfying every constraint to 1e-6 was reached.
    """
    lay, P, q, A, b, cones = _build(data)
    if lay.infeasible_rows:
        raise Infeasible(f"QoS rows {lay.infeasible_rows} cannot be met by any precoder "
                         f"(R_th={np.round(data.R_th, 4).tolist()})")
    for attempt_tol in (tol, max(tol, LOOSE_TOL)):
        # tight gaps occasionally drive the last iterates into numerical trouble
        sol = clarabel.DefaultSolver(P, q, A, b, cones, _settings(attempt_tol, max_iter)).solve()
        status = str(sol.status)
        if status in _ACCEPTED or status in _INFEASIBLE:
            break
    if status in _INFEASIBLE:
        ref = feasible_reference(data, reference)
        if ref is not None:
            # the certificate is within solver tolerance of a point we can verify directly
            log.warning("solver reported %s but the reference point is feasible; keeping it", status)
            return ref
        raise Infeasible(f"precoder block infeasible (R_th={np.round(data.R_th, 4).tolist()})")
    p_c, Pp, c_bar = lay.unpack(np.asarray(sol.x))
    prec = _polish(data, p_c, Pp, c_bar)
    worst = max_residual(data, prec) if np.all(np.isfinite(sol.x)) else np.inf
    if status not in _ACCEPTED or worst > RESIDUAL_TOL:
        ref = feasible_reference(data, reference)
        if ref is not None:
            log.warning("clarabel status %s (residual %.2e); keeping the reference point", status, worst)
            return ref
        raise SolverStall(f"clarabel status {status}, max residual {worst:.2e}")

    ref = feasible_reference(data, reference, ROW_SLACK)
    if ref is not None:
        obj, ref_obj = socp_objective(data, prec), socp_objective(data, ref)
        if obj > ref_obj + 1e-9 * (1.0 + abs(ref_obj)):
            log.warning("solver objective %.12g above reference %.12g; keeping reference", obj, ref_obj)
            return ref
    return prec


def feasible_reference(data: SocpData, reference: Optional[PrecoderSolution],
                        tol: float = RESIDUAL_TOL) -> Optional[PrecoderSolution]:
    """``reference`` with its best common split, or None when it violates a row by more than ``tol``."""
    if reference is None:
        return None
    p_c = reference.p_common if data.common else np.zeros_like(reference.p_common)
    split = best_common_split(data, p_c, reference.p_private)
    if split is None:
        return None
    ref = PrecoderSolution(p_c.copy(), reference.p_private.copy(), split)
    return ref if max_residual(data, ref) <= tol else None


def _polish(data: SocpData, p_c, Pp, c_bar) -> PrecoderSolution:
    """Remove solver round-off: exact power budget, non-negative split, capped common sum."""
    prec = PrecoderSolution(p_c, Pp, np.clip(c_bar, 0.0, None))
    power = prec.power()
    if power > data.P_budget:
        s = np.sqrt(data.P_budget / power)
        prec = PrecoderSolution(p_c * s, Pp * s, prec.c_bar)
    if not data.common:
        prec.p_common = np.zeros_like(p_c)
        prec.c_bar = np.zeros(data.K)
        return prec
    limit = float(np.min(common_rate_bound(data, prec)))
    total = prec.c_bar.sum()
    if total > limit and total > 0:
        prec.c_bar = prec.c_bar * max(limit, 0.0) / total
    return prec
