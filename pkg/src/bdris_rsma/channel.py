"""Rician small-scale fading, sector path loss, cascaded channels and SAA sample sets."""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .config import Pattern, ValidatedConfig
from .errors import DegenerateGeometry


@dataclass(frozen=True)
class ChannelRealization:
    """Small-scale channels for one drop.

    G : (M, N) transmitter -> RIS.  h : (K, M) RIS -> users.  zeta : (K,) path losses.
    """

    G: np.ndarray
    h: np.ndarray
    zeta: np.ndarray

    @property
    def K(self) -> int:
        return self.h.shape[0]


@dataclass(frozen=True)
class CsiSampleSet:
    """Estimates, held-out perfect channels and SAA samples of the cascaded channel.

    q_hat, q_true : (K, N, M).  samples : (K, A, N, M).  delta_k : (K,) error variances.
    """

    q_hat: np.ndarray
    q_true: np.ndarray
    samples: np.ndarray
    delta_k: np.ndarray

    @property
    def A(self) -> int:
        return self.samples.shape[1]


def complex_gaussian(rng: np.random.Generator, shape, variance: float = 1.0) -> np.ndarray:
    """CSCG draws: two independent real Gaussians of variance ``variance/2``."""
    scale = math.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def ula_response(n: int, angle: float) -> np.ndarray:
    """Half-wavelength uniform linear array steering vector (unit-modulus entries)."""
    return np.exp(1j * math.pi * np.arange(n) * math.sin(angle))


def upa_response(m_x: int, m_y: int, elevation: float, azimuth: float) -> np.ndarray:
    """Half-wavelength ``m_x x m_y`` planar array response, flattened row-major."""
    ux = math.sin(elevation) * math.cos(azimuth)
    uy = math.sin(elevation) * math.sin(azimuth)
    ix, iy = np.meshgrid(np.arange(m_x), np.arange(m_y), indexing="ij")
    return np.exp(1j * math.pi * (ix * ux + iy * uy)).ravel()


def path_loss_reference(cfg: ValidatedConfig, k: int) -> float:
    """Free-space-like factor 4^3 pi^4 d_it^e_it d_iu^e_iu / (lambda^4 G_t G_u)."""
    c = cfg.config
    return (4.0 ** 3 * math.pi ** 4 * c.d_it ** c.eps_it * cfg.d_iu[k] ** c.eps_iu
            / (cfg.wavelength ** 4 * c.g_t * c.g_u))


def path_loss(cfg: ValidatedConfig, k: int) -> float:
    """Large-scale attenuation of user ``k`` (linear, > 0)."""
    rho = path_loss_reference(cfg, k)
    if cfg.pattern is Pattern.IDEALIZED:
        return rho * (1.0 - math.cos(math.pi / cfg.L)) ** 2
    cos_prod = math.cos(cfg.theta_it) * math.cos(cfg.theta_iu[k])
    if cos_prod <= 0:
        raise DegenerateGeometry(f"cos(theta_it)*cos(theta_iu[{k}]) = {cos_prod:.3g} <= 0")
    return rho / ((cfg.alpha_L + 1.0) ** 2 * cos_prod ** cfg.alpha_L)


def path_losses(cfg: ValidatedConfig) -> np.ndarray:
    return np.array([path_loss(cfg, k) for k in range(cfg.K)])


def _rician(los: np.ndarray, nlos: np.ndarray, kappa: float) -> np.ndarray:
    if math.isinf(kappa):
        return los
    return math.sqrt(kappa / (kappa + 1.0)) * los + math.sqrt(1.0 / (kappa + 1.0)) * nlos


def gen_realization(cfg: ValidatedConfig, rng: np.random.Generator) -> ChannelRealization:
    """Draw one Rician realization.

    LoS parts are rank-one array responses; elevations are uniform on
    ``[0, pi/L]`` and azimuths uniform on the sector's ``2 pi / L`` span.  The
    number of draws does not depend on ``kappa`` so realizations stay paired
    across Rician factors.
    """
    M, N, K, L = cfg.M, cfg.N, cfg.K, cfg.L
    half = math.pi / L
    tx_angle = rng.uniform(-math.pi / 2, math.pi / 2)
    elev = rng.uniform(0.0, half, size=K + 1)
    azim = rng.uniform(-half, half, size=K + 1)
    g_los = np.outer(upa_response(cfg.M_x, cfg.M_y, elev[0], azim[0]), ula_response(N, tx_angle))
    h_los = np.stack([upa_response(cfg.M_x, cfg.M_y, elev[k + 1], azim[k + 1]) for k in range(K)])
    g_nlos = complex_gaussian(rng, (M, N))
    h_nlos = complex_gaussian(rng, (K, M))
    G = _rician(g_los, g_nlos, cfg.kappa)
    h = _rician(h_los, h_nlos, cfg.kappa)
    return ChannelRealization(G=G, h=h, zeta=path_losses(cfg))


def cascade(real: ChannelRealization, k: int) -> np.ndarray:
    """Cascaded channel ``sqrt(1/zeta_k) G^H diag(h_k)`` of shape (N, M)."""
    return math.sqrt(1.0 / real.zeta[k]) * (real.G.conj().T * real.h[k][None, :])


def cascades(real: ChannelRealization) -> np.ndarray:
    return np.stack([cascade(real, k) for k in range(real.K)])


def draw_sample_set(real: ChannelRealization, cfg: ValidatedConfig,
                    rng: np.random.Generator) -> CsiSampleSet:
    """Inject CSCG estimation errors and draw ``A`` SAA samples around the estimate.

    Unit-variance draws are taken first and then scaled per user, so sets
    built from the same stream at different ``delta`` share their randomness.
    """
    q_true = cascades(real)
    K, N, M = q_true.shape
    delta_k = cfg.delta ** 2 / real.zeta
    std = np.sqrt(delta_k)[:, None, None]
    err = complex_gaussian(rng, (K, N, M))
    q_hat = q_true - std * err
    sample_err = complex_gaussian(rng, (K, cfg.A, N, M))
    samples = q_hat[:, None] + std[:, None] * sample_err
    return CsiSampleSet(q_hat=q_hat, q_true=q_true, samples=samples, delta_k=delta_k)


# ---------------------------------------------------------------------------
# binary fixture format: b"CSIS", uint32 version, uint64 K, A, N, M, then
# float64 delta_k[K], complex128 q_true[K,N,M], q_hat[K,N,M], samples[K,A,N,M];
# everything little-endian and row-major.

_MAGIC = b"CSIS"
_VERSION = 1
_HEADER = struct.Struct("<4sI4Q")


def dump_sample_set(sample_set: CsiSampleSet, path: Union[str, Path]) -> None:
    K, A, N, M = sample_set.samples.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, K, A, N, M))
        fh.write(np.ascontiguousarray(sample_set.delta_k, dtype="<f8").tobytes())
        for arr in (sample_set.q_true, sample_set.q_hat, sample_set.samples):
            fh.write(np.ascontiguousarray(arr, dtype="<c16").tobytes())


def load_sample_set(path: Union[str, Path]) -> CsiSampleSet:
    data = Path(path).read_bytes()
    magic, version, K, A, N, M = _HEADER.unpack_from(data, 0)
    if magic != _MAGIC or version != _VERSION:
        raise ValueError(f"{path}: not a CSI sample-set dump (magic={magic!r}, version={version})")
    offset = _HEADER.size

    def take(dtype, shape):
        nonlocal offset
        count = int(np.prod(shape))
        arr = np.frombuffer(data, dtype=dtype, count=count, offset=offset).reshape(shape)
        offset += arr.nbytes
        return arr.copy()

    delta_k = take("<f8", (K,))
    q_true = take("<c16", (K, N, M))
    q_hat = take("<c16", (K, N, M))
    samples = take("<c16", (K, A, N, M))
    if offset != len(data):
        raise ValueError(f"{path}: {len(data) - offset} trailing bytes")
    return CsiSampleSet(q_hat=q_hat, q_true=q_true, samples=samples, delta_k=delta_k)
