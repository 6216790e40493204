"""RSMA link quantities: received powers, SINRs, rates, MSEs and WMMSE updates.

Throughout, the effective channel of user ``k`` (in sector ``l``) at sample ``a``
is ``b = Q_k^a conj(phi_l)`` so that ``phi_l^T (Q_k^a)^H p = b^H p``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class BdRis:
    """Multi-sector BD-RIS coefficients, ``phi[l, m]`` for sector ``l`` and cell ``m``."""

    phi: np.ndarray

    @property
    def L(self) -> int:
        return self.phi.shape[0]

    @property
    def M(self) -> int:
        return self.phi.shape[1]

    def cell(self, m: int) -> np.ndarray:
        return self.phi[:, m]

    def cell_norm_error(self) -> float:
        """max_m | sum_l |phi_{l,m}|^2 - 1 |."""
        return float(np.max(np.abs(np.sum(np.abs(self.phi) ** 2, axis=0) - 1.0)))

    def copy(self) -> "BdRis":
        return BdRis(self.phi.copy())

    @classmethod
    def random_phases(cls, L: int, M: int, rng: np.random.Generator) -> "BdRis":
        """Equal split across sectors with uniform random phases."""
        return cls(np.exp(1j * rng.uniform(0.0, 2 * np.pi, size=(L, M))) / np.sqrt(L))


@dataclass
class PrecoderSolution:
    """Common precoder (N,), private precoders as columns (N, K) and common-rate split (K,)."""

    p_common: np.ndarray
    p_private: np.ndarray
    c_bar: np.ndarray

    @property
    def K(self) -> int:
        return self.p_private.shape[1]

    def power(self) -> float:
        return float(np.sum(np.abs(self.p_common) ** 2) + np.sum(np.abs(self.p_private) ** 2))

    def copy(self) -> "PrecoderSolution":
        return PrecoderSolution(self.p_common.copy(), self.p_private.copy(), self.c_bar.copy())


@dataclass
class LinkStatistics:
    """Received-power terms; each array is (K,) or (K, A).

    ``sig_c``/``sig_p`` keep the complex useful-signal gains ``b^H p_c`` and
    ``b^H p_{p,k}`` that the equalizer updates need.
    """

    tau_c: np.ndarray
    tau_p: np.ndarray
    iota_c: np.ndarray
    iota_p: np.ndarray
    sig_c: np.ndarray
    sig_p: np.ndarray


@dataclass
class EqualizerWeightState:
    g_c: np.ndarray
    g_p: np.ndarray
    lambda_c: np.ndarray
    lambda_p: np.ndarray


@dataclass
class RateReport:
    """Per-user rates and the resulting sum-rate.

    ``basis`` is ``"saa"`` when ``r_c``/``r_p`` are sample averages over the
    SAA set and ``"perfect"`` when they are instantaneous rates on the true
    channel.
    """

    r_c: np.ndarray
    r_p: np.ndarray
    c_bar: np.ndarray
    per_user_total: np.ndarray
    sum_rate: float
    basis: str = "saa"


def effective_channels(q: np.ndarray, ris: BdRis, sector_of_user: np.ndarray) -> np.ndarray:
    """``Q_k conj(phi_l)`` for every user; ``q`` is (K, N, M) or (K, A, N, M)."""
    phis = ris.phi[sector_of_user].conj()
    if q.ndim == 3:
        return np.einsum("knm,km->kn", q, phis)
    return np.einsum("kanm,km->kan", q, phis)


def link_statistics(q: np.ndarray, ris: BdRis, prec: PrecoderSolution, sigma2,
                    sector_of_user: np.ndarray) -> LinkStatistics:
    """Received-power terms for all users (and samples when ``q`` is 4-D)."""
    b = effective_channels(q, ris, sector_of_user)
    return _stats_from_effective(b, prec, np.asarray(sigma2, dtype=float))


def _stats_from_effective(b: np.ndarray, prec: PrecoderSolution, sigma2: np.ndarray) -> LinkStatistics:
    K = b.shape[0]
    bc = b.conj()
    sig_c = bc @ prec.p_common
    gains = bc @ prec.p_private            # [..., j] = b^H p_{p,j}
    pw = np.abs(gains) ** 2
    idx = np.arange(K)
    if b.ndim == 2:
        sig_p = gains[idx, idx]
        own = pw[idx, idx]
        noise = sigma2
    else:
        sig_p = gains[idx, :, idx]
        own = pw[idx, :, idx]
        noise = sigma2[:, None]
    iota_p = pw.sum(axis=-1) - own + noise
    tau_p = own + iota_p
    tau_c = np.abs(sig_c) ** 2 + tau_p
    return LinkStatistics(tau_c=tau_c, tau_p=tau_p, iota_c=tau_p.copy(), iota_p=iota_p,
                          sig_c=sig_c, sig_p=sig_p)


def power_terms(phi_l: np.ndarray, q_k: np.ndarray, prec: PrecoderSolution, sigma2: float,
                k: int) -> LinkStatistics:
    """Received-power terms of user ``k`` through sector vector ``phi_l``.

    Returns scalar-valued (0-d array) fields.
    """
    b = q_k @ phi_l.conj()
    gains = b.conj() @ prec.p_private
    pw = np.abs(gains) ** 2
    sig_c = b.conj() @ prec.p_common
    iota_p = pw.sum() - pw[k] + sigma2
    tau_p = pw[k] + iota_p
    tau_c = abs(sig_c) ** 2 + tau_p
    return LinkStatistics(tau_c=np.asarray(tau_c), tau_p=np.asarray(tau_p),
                          iota_c=np.asarray(tau_p), iota_p=np.asarray(iota_p),
                          sig_c=np.asarray(sig_c), sig_p=np.asarray(gains[k]))


def sinr_and_rates(stats: LinkStatistics):
    """Return ``(gamma_c, gamma_p, R_c, R_p)`` with rates in bits/s/Hz."""
    gamma_c = np.abs(stats.sig_c) ** 2 / stats.iota_c
    gamma_p = np.abs(stats.sig_p) ** 2 / stats.iota_p
    return gamma_c, gamma_p, np.log2(1.0 + gamma_c), np.log2(1.0 + gamma_p)


def saa_average_rates(samples: np.ndarray, prec: PrecoderSolution, ris: BdRis, sigma2,
                      sector_of_user: np.ndarray):
    """Sample-average common and private rates over the A samples, each (K,)."""
    stats = link_statistics(samples, ris, prec, sigma2, sector_of_user)
    _, _, r_c, r_p = sinr_and_rates(stats)
    return r_c.mean(axis=1), r_p.mean(axis=1)


def optimal_equalizers(stats: LinkStatistics):
    """MMSE equalizers ``g_c* = conj(b^H p_c) / tau_c`` and ``g_p* = conj(b^H p_p) / tau_p``."""
    return stats.sig_c.conj() / stats.tau_c, stats.sig_p.conj() / stats.tau_p


def mse(g, tau, sig):
    """``|g|^2 tau - 2 Re{g sig} + 1`` for equalizer ``g``, power ``tau`` and signal gain ``sig``."""
    return np.abs(g) ** 2 * tau - 2.0 * np.real(g * sig) + 1.0


def optimal_weights(gamma_c, gamma_p):
    return 1.0 + gamma_c, 1.0 + gamma_p


def wmmse_rate(lam, eps):
    """``log2(lam) - lam * eps + 1``; equals the rate at the optimal (g, lam)."""
    return np.log2(lam) - lam * eps + 1.0


def wmmse_state(samples: np.ndarray, ris: BdRis, prec: PrecoderSolution, sigma2,
                sector_of_user: np.ndarray) -> EqualizerWeightState:
    """Optimal equalizers and weights for every user and sample."""
    stats = link_statistics(samples, ris, prec, sigma2, sector_of_user)
    gamma_c, gamma_p, _, _ = sinr_and_rates(stats)
    g_c, g_p = optimal_equalizers(stats)
    lam_c, lam_p = optimal_weights(gamma_c, gamma_p)
    return EqualizerWeightState(g_c=g_c, g_p=g_p, lambda_c=lam_c, lambda_p=lam_p)


def sum_rate_metric(r_c_hat: np.ndarray, r_p_hat: np.ndarray) -> float:
    """Outer-loop progress metric: min_k R_c,k + sum_k R_p,k."""
    return float(np.min(r_c_hat) + np.sum(r_p_hat))


def cap_common_split(c_bar: np.ndarray, common_rate: float) -> np.ndarray:
    """Scale ``c_bar`` down proportionally so its sum does not exceed ``common_rate``."""
    c_bar = np.clip(np.asarray(c_bar, dtype=float), 0.0, None)
    total = c_bar.sum()
    limit = max(float(common_rate), 0.0)
    if total > limit:
        c_bar = c_bar * (limit / total) if total > 0 else c_bar
    return c_bar


def rate_report(r_c: np.ndarray, r_p: np.ndarray, c_bar: np.ndarray, basis: str,
                cap: bool = True) -> RateReport:
    c_bar = cap_common_split(c_bar, np.min(r_c)) if cap else np.asarray(c_bar, dtype=float)
    total = c_bar + r_p
    return RateReport(r_c=r_c, r_p=r_p, c_bar=c_bar, per_user_total=total,
                      sum_rate=float(total.sum()), basis=basis)


def saa_rate_report(samples: np.ndarray, prec: PrecoderSolution, ris: BdRis, sigma2,
                    sector_of_user: np.ndarray, cap: bool = True) -> RateReport:
    r_c, r_p = saa_average_rates(samples, prec, ris, sigma2, sector_of_user)
    return rate_report(r_c, r_p, prec.c_bar, "saa", cap=cap)


def qos_satisfied(report: RateReport, r_th, tol: float = 1e-6) -> bool:
    return bool(np.all(report.per_user_total >= np.asarray(r_th) - tol))
