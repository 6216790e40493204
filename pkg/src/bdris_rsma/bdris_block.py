"""BD-RIS block: cell-wise Riemannian conjugate gradient on a LogSumExp-smoothed objective.

For fixed precoders, equalizers and weights the BD-RIS subproblem is

    min_Phi  max_k f_c,k(phi_l(k)) + sum_l ( phi_l^H Xbar_p,l phi_l - 2 Re{phi_l^H xbar_p,l} )
    s.t.     sum_l |phi_{l,m}|^2 = 1  for every cell m,

with ``f_c,k(phi) = phi^H X_c,k phi - 2 Re{phi^H x_c,k} - xi_c,k``.  Cells are
updated one at a time; each cell lives on the complex unit sphere in C^L and
the max over users is replaced by ``eps * log sum_k exp(f_c,k / eps)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .config import RcgParams
from .errors import DegenerateRetraction, DivisionDegenerate
from .rsma_metrics import BdRis, EqualizerWeightState, PrecoderSolution


@dataclass
class PhaseQuadratics:
    X_c: np.ndarray          # (K, M, M)
    Xbar_p: np.ndarray       # (L, M, M)
    x_c: np.ndarray          # (K, M)
    xbar_p: np.ndarray       # (L, M)
    xi_c: np.ndarray         # (K,)
    sector_of_user: np.ndarray
    common: bool = True

    @property
    def L(self) -> int:
        return self.Xbar_p.shape[0]


@dataclass
class CellAux:
    """Scalar coefficients of the single-cell problem for cell ``m``."""

    nu_c: np.ndarray         # (K,) real
    nu_p: np.ndarray         # (L,) real
    chi_c: np.ndarray        # (K,) complex
    chi_p: np.ndarray        # (L,) complex
    xi_km: np.ndarray        # (K,) real
    sector_of_user: np.ndarray
    common: bool = True
    onehot: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        L = self.nu_p.shape[0]
        self.onehot = (np.arange(L)[:, None] == np.asarray(self.sector_of_user)[None, :]).astype(float)

    @property
    def L(self) -> int:
        return self.nu_p.shape[0]


# ---------------------------------------------------------------------------
# assembly

def assemble_phase_quadratics(samples: np.ndarray, prec: PrecoderSolution,
                              state: EqualizerWeightState, sigma2, sector_of_user, L: int,
                              common: bool = True) -> PhaseQuadratics:
    """Sample-averaged quadratic coefficients of the BD-RIS subproblem.

    ``samples`` is (K, A, N, M); per sample ``v_c = Q^T conj(p_c)`` and
    ``v_p,j = Q^T conj(p_p,j)``.
    """
    K, A, N, M = samples.shape
    sigma2 = np.asarray(sigma2, dtype=float)[:, None]
    v_c = np.einsum("kanm,n->kam", samples, prec.p_common.conj())
    V_p = np.einsum("kanm,nj->kajm", samples, prec.p_private.conj())
    outer_p = np.einsum("kajm,kajn->kamn", V_p, V_p.conj())          # sum_j v v^H

    w_c = state.lambda_c * np.abs(state.g_c) ** 2
    w_p = state.lambda_p * np.abs(state.g_p) ** 2
    X_c = np.einsum("ka,kamn->kmn", w_c, outer_p + np.einsum("kam,kan->kamn", v_c, v_c.conj())) / A
    X_p = np.einsum("ka,kamn->kmn", w_p, outer_p) / A
    x_c = np.einsum("ka,kam->km", state.lambda_c * state.g_c.conj(), v_c) / A
    idx = np.arange(K)
    x_p = np.einsum("ka,kam->km", state.lambda_p * state.g_p.conj(), V_p[idx, :, idx, :]) / A
    xi_c = np.mean(np.log2(state.lambda_c) - w_c * sigma2 - state.lambda_c + 1.0, axis=1)

    sec = np.asarray(sector_of_user)
    Xbar_p = np.zeros((L, M, M), dtype=complex)
    xbar_p = np.zeros((L, M), dtype=complex)
    np.add.at(Xbar_p, sec, X_p)
    np.add.at(xbar_p, sec, x_p)
    if not common:
        X_c = np.zeros_like(X_c)
        x_c = np.zeros_like(x_c)
        xi_c = np.zeros_like(xi_c)
    return PhaseQuadratics(X_c=_herm(X_c), Xbar_p=_herm(Xbar_p), x_c=x_c, xbar_p=xbar_p,
                           xi_c=xi_c, sector_of_user=sec, common=common)


def _herm(mats):
    return 0.5 * (mats + np.conj(np.swapaxes(mats, -1, -2)))


def common_terms(pq: PhaseQuadratics, ris: BdRis) -> np.ndarray:
    """f_c,k for every user at the full BD-RIS ``ris``."""
    Phi = ris.phi[pq.sector_of_user]
    quad = np.real(np.einsum("km,kmn,kn->k", Phi.conj(), pq.X_c, Phi))
    return quad - 2.0 * np.real(np.einsum("km,km->k", Phi.conj(), pq.x_c)) - pq.xi_c


def private_term(pq: PhaseQuadratics, ris: BdRis) -> float:
    Phi = ris.phi
    quad = np.real(np.einsum("lm,lmn,ln->", Phi.conj(), pq.Xbar_p, Phi))
    return float(quad - 2.0 * np.real(np.vdot(Phi, pq.xbar_p)))


def lse(values: np.ndarray, epsilon: float) -> float:
    """``eps * log sum exp(values / eps)`` evaluated with a max shift."""
    top = float(np.max(values))
    return top + epsilon * math.log(float(np.sum(np.exp((values - top) / epsilon))))


def ris_objective(pq: PhaseQuadratics, ris: BdRis, epsilon: Optional[float] = None) -> float:
    """Whole-surface objective; exact max over users, or its LSE smoothing when ``epsilon`` is set."""
    value = private_term(pq, ris)
    if pq.common:
        fc = common_terms(pq, ris)
        value += float(np.max(fc)) if epsilon is None else lse(fc, epsilon)
    return value


def cell_aux(pq: PhaseQuadratics, ris: BdRis, m: int) -> CellAux:
    """Coefficients of the cell-``m`` problem with every other cell held at ``ris``."""
    sec = pq.sector_of_user
    Phi_k = ris.phi[sec].copy()
    Phi_k[:, m] = 0.0
    nu_c = np.real(pq.X_c[:, m, m]).copy()
    chi_c = pq.x_c[:, m] - np.einsum("kn,kn->k", pq.X_c[:, m, :], Phi_k)
    xi_km = (pq.xi_c
             - np.real(np.einsum("kn,knj,kj->k", Phi_k.conj(), pq.X_c, Phi_k))
             + 2.0 * np.real(np.einsum("kn,kn->k", Phi_k.conj(), pq.x_c)))
    Phi_l = ris.phi.copy()
    Phi_l[:, m] = 0.0
    nu_p = np.real(pq.Xbar_p[:, m, m]).copy()
    chi_p = pq.xbar_p[:, m] - np.einsum("ln,ln->l", pq.Xbar_p[:, m, :], Phi_l)
    return CellAux(nu_c=nu_c, nu_p=nu_p, chi_c=chi_c, chi_p=chi_p, xi_km=xi_km,
                   sector_of_user=sec, common=pq.common)


# ---------------------------------------------------------------------------
# smoothed single-cell objective

def cell_terms(aux: CellAux, cell: np.ndarray):
    """(f_c,k for every user, f_p,l for every sector) at the cell vector ``cell``."""
    z = cell[aux.sector_of_user]
    fc = aux.nu_c * (z.real ** 2 + z.imag ** 2) - 2.0 * np.real(z.conj() * aux.chi_c) - aux.xi_km
    fp = aux.nu_p * (cell.real ** 2 + cell.imag ** 2) - 2.0 * np.real(cell.conj() * aux.chi_p)
    return fc, fp


def smoothed_objective(aux: CellAux, cell: np.ndarray, epsilon: float) -> float:
    fc, fp = cell_terms(aux, cell)
    value = float(np.sum(fp))
    if aux.common:
        value += lse(fc, epsilon)
    return value


def _value_and_grad(aux: CellAux, cell: np.ndarray, epsilon: float):
    fc, fp = cell_terms(aux, cell)
    grad = 2.0 * aux.nu_p * cell - 2.0 * aux.chi_p
    value = float(np.sum(fp))
    if aux.common:
        top = float(np.max(fc))
        e = np.exp((fc - top) / epsilon)
        total = float(np.sum(e))
        value += top + epsilon * math.log(total)
        z = cell[aux.sector_of_user]
        grad = grad + aux.onehot @ ((e / total) * (2.0 * aux.nu_c * z - 2.0 * aux.chi_c))
    return value, grad


def euclidean_gradient(aux: CellAux, cell: np.ndarray, epsilon: float) -> np.ndarray:
    """Gradient w.r.t. (Re, Im) of each coefficient, packed as a complex vector.

    Component ``l`` is ``2 nu_p,l z_l - 2 chi_p,l`` plus the softmax-weighted
    sum of ``2 nu_c,k z_l - 2 chi_c,k`` over the users of sector ``l``.
    """
    return _value_and_grad(aux, cell, epsilon)[1]


# ---------------------------------------------------------------------------
# complex-sphere geometry

def inner(a: np.ndarray, b: np.ndarray) -> float:
    """Real inner product Re{a^H b}."""
    return float(np.real(np.vdot(a, b)))


def project_tangent(point: np.ndarray, ambient: np.ndarray) -> np.ndarray:
    return ambient - inner(point, ambient) * point


def retract(point: np.ndarray, direction: np.ndarray, step: float) -> np.ndarray:
    moved = point + step * direction
    norm = float(np.linalg.norm(moved))
    if norm < 1e-14:
        raise DegenerateRetraction(f"retraction target has norm {norm:.2e}")
    return moved / norm


def polak_ribiere(grad_now: np.ndarray, grad_prev_transported: np.ndarray,
                  grad_prev: Optional[np.ndarray] = None) -> float:
    """Riemannian Polak-Ribiere coefficient.

    ``grad_prev`` is the untransported previous gradient used in the
    denominator; it defaults to ``grad_prev_transported``.
    """
    if grad_prev is None:
        grad_prev = grad_prev_transported
    denom = inner(grad_prev, grad_prev)
    if denom < 1e-18:
        raise DivisionDegenerate(f"previous gradient norm^2 {denom:.2e}")
    return inner(grad_now, grad_now - grad_prev_transported) / denom


class RcgResult(NamedTuple):
    point: np.ndarray
    iterations: int
    converged: bool
    grad_norm: float
    values: list


def rcg_cell(aux: CellAux, start: np.ndarray, params: RcgParams = RcgParams()) -> RcgResult:
    """Minimise the smoothed cell objective over the unit sphere in C^L.

    Conjugate directions use the Polak-Ribiere rule (clipped at zero) and fall
    back to steepest descent whenever they stop being descent directions.
    Steps come from Armijo backtracking along the retraction.  ``converged``
    is False when the iteration cap or a failed line search ended the run.
    """
    eps = params.epsilon
    x = np.asarray(start, dtype=complex)
    x = x / np.linalg.norm(x)
    f, egrad = _value_and_grad(aux, x, eps)
    g = project_tangent(x, egrad)
    gnorm = math.sqrt(inner(g, g))
    values = [f]
    if gnorm <= params.grad_tol:
        return RcgResult(x, 0, True, gnorm, values)
    beta = -g
    v = 0
    while v < params.v_max:
        v += 1
        slope = inner(g, beta)
        if slope >= 0:
            beta = -g
            slope = -gnorm * gnorm
        step = params.step0
        for _ in range(60):
            x_new = retract(x, beta, step)
            f_new = _value_and_grad(aux, x_new, eps)
            if f_new[0] <= f + params.armijo_c * step * slope:
                break
            step *= params.contraction
        else:
            return RcgResult(x, v - 1, False, gnorm, values)
        f_new, egrad = f_new
        g_new = project_tangent(x_new, egrad)
        g_prev_t = project_tangent(x_new, g)
        beta_t = project_tangent(x_new, beta)
        try:
            mu = max(polak_ribiere(g_new, g_prev_t, g), 0.0)
        except DivisionDegenerate:
            mu = 0.0
        beta = -g_new + mu * beta_t
        x, f, g = x_new, f_new, g_new
        gnorm = math.sqrt(inner(g, g))
        values.append(f)
        if gnorm <= params.grad_tol:
            return RcgResult(x, v, True, gnorm, values)
    return RcgResult(x, v, False, gnorm, values)


class SweepResult(NamedTuple):
    ris: BdRis
    sweeps: int
    converged: bool
    objective: list          # smoothed whole-surface objective, before and after each sweep
    rcg_iterations: int


def sweep_cells(pq: PhaseQuadratics, ris: BdRis, params: RcgParams = RcgParams(),
                sweep_tol: float = 1e-6, sweep_max: int = 50) -> SweepResult:
    """Cyclic cell-by-cell RCG until the surface stops moving."""
    ris = ris.copy()
    eps = params.epsilon
    objective = [ris_objective(pq, ris, eps)]
    total_iters = 0
    for sweep in range(1, sweep_max + 1):
        before = ris.phi.copy()
        for m in range(ris.M):
            aux = cell_aux(pq, ris, m)
            res = rcg_cell(aux, ris.phi[:, m], params)
            total_iters += res.iterations
            # a cell update never increases the smoothed objective
            if smoothed_objective(aux, res.point, eps) <= smoothed_objective(aux, ris.phi[:, m], eps):
                ris.phi[:, m] = res.point
        objective.append(ris_objective(pq, ris, eps))
        if float(np.sum(np.abs(ris.phi - before) ** 2)) <= sweep_tol:
            return SweepResult(ris, sweep, True, objective, total_iters)
    return SweepResult(ris, sweep_max, False, objective, total_iters)
