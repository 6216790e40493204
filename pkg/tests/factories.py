"""Random instance builders shared by the tests."""
from __future__ import annotations

import numpy as np

from bdris_rsma.bdris_block import CellAux
from bdris_rsma.precoder_block import assemble_socp_data
from bdris_rsma.rsma_metrics import BdRis, PrecoderSolution, saa_average_rates, wmmse_state


def cgauss(rng, shape, scale=1.0):
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def unit(rng, L):
    z = cgauss(rng, L)
    return z / np.linalg.norm(z)


def random_precoder(rng, N, K, P, common=True):
    p_c = cgauss(rng, N) if common else np.zeros(N, dtype=complex)
    prec = PrecoderSolution(p_c, cgauss(rng, (N, K)), np.zeros(K))
    s = np.sqrt(P / prec.power())
    return PrecoderSolution(prec.p_common * s, prec.p_private * s, np.zeros(K))


def random_ris(rng, L, M):
    phi = cgauss(rng, (L, M))
    return BdRis(phi / np.linalg.norm(phi, axis=0, keepdims=True))


def sector_map(K, L):
    return np.arange(K) % L


def random_cell_aux(rng, L, K, common=True):
    """CellAux with the sign structure of a real instance (nu >= 0)."""
    sec = rng.integers(0, L, size=K)
    return CellAux(nu_c=rng.uniform(0.0, 3.0, K), nu_p=rng.uniform(0.0, 3.0, L),
                   chi_c=cgauss(rng, K), chi_p=cgauss(rng, L), xi_km=rng.normal(0.0, 1.0, K),
                   sector_of_user=sec, common=common)


def socp_instance(rng, K, N=4, A=6, P=10.0, common=True, qos_fraction=(0.0, 0.8)):
    """Precoder-block data built from a WMMSE state at a random precoder.

    The state is exact at that precoder, so it is feasible whenever each
    threshold is below its user's rate there; thresholds are drawn as a
    random fraction of those rates.
    """
    samples = cgauss(rng, (K, A, N, 1))
    ris = BdRis(np.ones((1, 1), dtype=complex))
    sec = np.zeros(K, dtype=int)
    sigma2 = np.ones(K)
    p0 = random_precoder(rng, N, K, P, common)
    state = wmmse_state(samples, ris, p0, sigma2, sec)
    _, r_p = saa_average_rates(samples, p0, ris, sigma2, sec)
    r_th = rng.uniform(*qos_fraction, size=K) * r_p
    data = assemble_socp_data(samples, ris, state, sigma2, sec, P, r_th, common=common)
    return data, p0
