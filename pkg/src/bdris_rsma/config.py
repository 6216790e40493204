"""Scenario parameters, validation and the flat key-value config file format."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import InvalidConfig

SPEED_OF_LIGHT = 299_792_458.0


class Pattern(str, Enum):
    IDEALIZED = "idealized"
    PRACTICAL = "practical"


class Scheme(str, Enum):
    RSMA = "rsma"
    SDMA = "sdma"


@dataclass(frozen=True)
class RcgParams:
    """Inner Riemannian conjugate-gradient settings for one BD-RIS cell."""

    epsilon: float = 0.1
    grad_tol: float = 1e-6
    v_max: int = 500
    step0: float = 1.0
    contraction: float = 0.5
    armijo_c: float = 1e-4

    def __post_init__(self):
        if not (self.epsilon > 0 and self.grad_tol > 0 and self.v_max > 0
                and self.step0 > 0 and self.armijo_c > 0):
            raise InvalidConfig("RcgParams: all values must be positive")
        if not 0 < self.contraction < 1:
            raise InvalidConfig("RcgParams: contraction must lie in (0, 1)")


@dataclass(frozen=True)
class SweepParams:
    tol: float = 1e-6
    max_sweeps: int = 50

    def __post_init__(self):
        if not (self.tol > 0 and self.max_sweeps >= 1):
            raise InvalidConfig("SweepParams: tol > 0 and max_sweeps >= 1 required")


@dataclass(frozen=True)
class BcdParams:
    rel_tol: float = 1e-3
    v_max: int = 100
    scheme: Scheme = Scheme.RSMA
    qos_max_retries: int = 3
    qos_shrink: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if not self.rel_tol > 0:
            raise InvalidConfig("BcdParams: rel_tol must be positive")
        if self.v_max < 1 or self.qos_max_retries < 0:
            raise InvalidConfig("BcdParams: v_max >= 1 and qos_max_retries >= 0 required")
        if not 0 < self.qos_shrink < 1:
            raise InvalidConfig("BcdParams: qos_shrink must lie in (0, 1)")


FloatList = Union[float, Sequence[float]]


@dataclass
class SystemConfig:
    """Raw scenario description; powers in dBm, angles in radians.

    ``sigma_dbm``, ``R_th`` and ``d_iu`` accept either one value per user or a
    single scalar applied to every user.  ``theta_it``/``theta_iu`` left as
    ``None`` are drawn uniformly in ``[0, pi/L]`` from ``seed``.
    """

    L: int = 3
    M: int = 20
    N: int = 4
    K_per_sector: Sequence[int] = (2, 2, 2)
    P_dbm: float = 35.0
    sigma_dbm: FloatList = -90.0
    R_th: FloatList = 0.0
    delta: float = 0.15
    A: int = 50
    rician_kappa_db: float = 0.0
    freq_hz: float = 2.4e9
    d_it: float = 100.0
    d_iu: FloatList = 10.0
    eps_it: float = 2.0
    eps_iu: float = 2.0
    g_t: float = 1.0
    g_u: float = 1.0
    pattern: Pattern = Pattern.IDEALIZED
    theta_it: Optional[float] = None
    theta_iu: Optional[Sequence[float]] = None
    seed: int = 0
    lse_epsilon: float = 0.1
    M_x: Optional[int] = None
    M_y: Optional[int] = None
    alpha_L: Optional[float] = None
    rcg: RcgParams = field(default_factory=RcgParams)
    sweep: SweepParams = field(default_factory=SweepParams)
    bcd: BcdParams = field(default_factory=BcdParams)

    @classmethod
    def table1(cls, **overrides) -> "SystemConfig":
        """Full-scale scenario (M=20, A=50)."""
        return dataclasses.replace(cls(), **overrides)

    @classmethod
    def desk(cls, **overrides) -> "SystemConfig":
        """Shrunk scenario (M=8, A=10) that keeps the qualitative trends."""
        return dataclasses.replace(cls(M=8, A=10, M_x=4, M_y=2), **overrides)


@dataclass(frozen=True)
class ValidatedConfig:
    """Immutable, checked scenario with every derived quantity in linear units."""

    config: SystemConfig
    L: int
    M: int
    N: int
    K: int
    M_x: int
    M_y: int
    A: int
    P: float
    sigma2: np.ndarray
    R_th: np.ndarray
    delta: float
    kappa: float
    wavelength: float
    d_iu: np.ndarray
    theta_it: float
    theta_iu: np.ndarray
    alpha_L: float
    pattern: Pattern
    sector_of_user: np.ndarray
    users_in_sector: tuple
    seed: int
    rcg: RcgParams
    sweep: SweepParams
    bcd: BcdParams

    def replace(self, **changes) -> "ValidatedConfig":
        """Re-validate with some raw fields changed."""
        return validate(dataclasses.replace(self.config, **changes))


def dbm_to_watt(dbm):
    return 10.0 ** (np.asarray(dbm, dtype=float) / 10.0) / 1000.0


def watt_to_dbm(watt):
    return 10.0 * np.log10(np.asarray(watt, dtype=float) * 1000.0)


def practical_alpha(L: int) -> float:
    """Pattern exponent giving half power at the sector edge (alpha_3 = 1)."""
    c = math.cos(math.pi / L)
    if c <= 0:
        raise InvalidConfig(f"practical pattern exponent undefined for L={L}")
    return math.log(0.5) / math.log(c)


def _factor_pair(M: int) -> tuple[int, int]:
    my = int(math.isqrt(M))
    while M % my:
        my -= 1
    return M // my, my


def _per_user(name: str, value, K: int) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == 1:
        arr = np.full(K, float(arr[0]))
    if arr.shape != (K,):
        raise InvalidConfig(f"{name}: expected 1 or {K} values, got {arr.size}")
    return arr


def validate(config: SystemConfig) -> ValidatedConfig:
    """Check every invariant and derive linear-unit quantities.

    Raises
    ------
    InvalidConfig
        Naming the first violated invariant.
    """
    c = config
    if c.L < 1:
        raise InvalidConfig("L must be >= 1")
    if c.M < 1:
        raise InvalidConfig("M must be >= 1")
    if c.N < 1:
        raise InvalidConfig("N must be >= 1")
    k_per = [int(k) for k in c.K_per_sector]
    if len(k_per) != c.L:
        raise InvalidConfig(f"K_per_sector must list {c.L} sector counts")
    if any(k < 0 for k in k_per):
        raise InvalidConfig("K_per_sector entries must be >= 0")
    K = sum(k_per)
    if K < 1:
        raise InvalidConfig("at least one user (K >= 1) is required")
    if not 0 <= c.delta < 1:
        raise InvalidConfig("delta must lie in [0, 1)")
    if c.A < 1:
        raise InvalidConfig("A must be >= 1")
    if not c.lse_epsilon > 0:
        raise InvalidConfig("lse_epsilon must be positive")
    if not (c.freq_hz > 0 and c.d_it > 0 and c.g_t > 0 and c.g_u > 0):
        raise InvalidConfig("freq_hz, d_it, g_t, g_u must be positive")

    if c.M_x is None and c.M_y is None:
        m_x, m_y = _factor_pair(c.M)
    elif c.M_x is not None and c.M_y is not None:
        m_x, m_y = int(c.M_x), int(c.M_y)
    elif c.M_x is not None:
        m_x, m_y = int(c.M_x), c.M // int(c.M_x)
    else:
        m_x, m_y = c.M // int(c.M_y), int(c.M_y)
    if m_x * m_y != c.M:
        raise InvalidConfig(f"M_x * M_y = {m_x}*{m_y} does not factor M = {c.M}")

    sigma_dbm = _per_user("sigma_dbm", c.sigma_dbm, K)
    r_th = _per_user("R_th", c.R_th, K)
    if np.any(r_th < 0):
        raise InvalidConfig("R_th entries must be >= 0")
    d_iu = _per_user("d_iu", c.d_iu, K)
    if np.any(d_iu <= 0):
        raise InvalidConfig("d_iu entries must be positive")

    angle_rng = np.random.default_rng([int(c.seed), 0xA5])
    top = math.pi / c.L
    theta_it = float(angle_rng.uniform(0.0, top)) if c.theta_it is None else float(c.theta_it)
    if c.theta_iu is None:
        theta_iu = angle_rng.uniform(0.0, top, size=K)
    else:
        theta_iu = _per_user("theta_iu", c.theta_iu, K)
    if not 0 <= theta_it <= top:
        raise InvalidConfig("theta_it must lie in [0, pi/L]")
    if np.any(theta_iu < 0) or np.any(theta_iu > top):
        raise InvalidConfig("theta_iu entries must lie in [0, pi/L]")

    pattern = Pattern(c.pattern)
    if c.alpha_L is not None:
        alpha = float(c.alpha_L)
    elif pattern is Pattern.PRACTICAL:
        alpha = practical_alpha(c.L)
    else:
        alpha = practical_alpha(c.L) if c.L > 2 else float("nan")

    sector_of_user = np.repeat(np.arange(c.L), k_per)
    users_in_sector = tuple(np.flatnonzero(sector_of_user == l) for l in range(c.L))
    for arr in (sigma_dbm, r_th, d_iu, theta_iu, sector_of_user):
        arr.setflags(write=False)
    sigma2 = dbm_to_watt(sigma_dbm)
    sigma2.setflags(write=False)

    rcg = dataclasses.replace(c.rcg, epsilon=float(c.lse_epsilon))
    return ValidatedConfig(
        config=dataclasses.replace(c, K_per_sector=tuple(k_per)),
        L=int(c.L), M=int(c.M), N=int(c.N), K=K, M_x=m_x, M_y=m_y, A=int(c.A),
        P=float(dbm_to_watt(c.P_dbm)), sigma2=sigma2, R_th=r_th, delta=float(c.delta),
        kappa=float(10.0 ** (c.rician_kappa_db / 10.0)),
        wavelength=SPEED_OF_LIGHT / c.freq_hz, d_iu=d_iu,
        theta_it=theta_it, theta_iu=theta_iu, alpha_L=alpha, pattern=pattern,
        sector_of_user=sector_of_user, users_in_sector=users_in_sector,
        seed=int(c.seed), rcg=rcg, sweep=c.sweep, bcd=c.bcd,
    )


# ---------------------------------------------------------------------------
# flat key-value file format

_NESTED = {
    "rcg_grad_tol": ("rcg", "grad_tol", float),
    "rcg_v_max": ("rcg", "v_max", int),
    "armijo_step": ("rcg", "step0", float),
    "armijo_contraction": ("rcg", "contraction", float),
    "armijo_c": ("rcg", "armijo_c", float),
    "sweep_tol": ("sweep", "tol", float),
    "sweep_max": ("sweep", "max_sweeps", int),
    "bcd_rel_tol": ("bcd", "rel_tol", float),
    "bcd_v_max": ("bcd", "v_max", int),
    "scheme": ("bcd", "scheme", Scheme),
    "qos_max_retries": ("bcd", "qos_max_retries", int),
    "qos_shrink": ("bcd", "qos_shrink", float),
}

_INT_KEYS = {"L", "M", "N", "A", "seed", "M_x", "M_y"}
_INT_LIST_KEYS = {"K_per_sector"}
_FLOAT_LIST_KEYS = {"sigma_dbm", "R_th", "d_iu", "theta_iu"}
_FLOAT_KEYS = {"P_dbm", "delta", "rician_kappa_db", "freq_hz", "d_it", "eps_it", "eps_iu",
               "g_t", "g_u", "theta_it", "lse_epsilon", "alpha_L"}
_TOP_KEYS = _INT_KEYS | _INT_LIST_KEYS | _FLOAT_LIST_KEYS | _FLOAT_KEYS | {"pattern"}
CONFIG_KEYS = frozenset(_TOP_KEYS | set(_NESTED))


def _parse_value(key: str, raw: str, lineno: int):
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
        if key in _INT_LIST_KEYS:
            return tuple(int(v) for v in raw.split(","))
        if key in _FLOAT_LIST_KEYS:
            vals = [float(v) for v in raw.split(",")]
            return vals[0] if len(vals) == 1 and key != "theta_iu" else vals
        if key == "pattern":
            return Pattern(raw.lower())
        kind = _NESTED[key][2]
        return kind(raw.lower()) if kind is Scheme else kind(raw)
    except ValueError as exc:
        raise InvalidConfig(f"line {lineno}: bad value for {key!r}: {raw!r}") from exc


def parse_config(text: str, base: Optional[SystemConfig] = None) -> SystemConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment, lists are comma separated."""
    top: dict = {}
    nested: dict = {"rcg": {}, "sweep": {}, "bcd": {}}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfig(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise InvalidConfig(f"line {lineno}: unknown key {key!r}")
        value = _parse_value(key, raw, lineno)
        if key in _NESTED:
            group, attr, _ = _NESTED[key]
            nested[group][attr] = value
        else:
            top[key] = value
    cfg = base if base is not None else SystemConfig()
    for group, changes in nested.items():
        if changes:
            top[group] = dataclasses.replace(getattr(cfg, group), **changes)
    return dataclasses.replace(cfg, **top)


def load_config(path: Union[str, Path], base: Optional[SystemConfig] = None) -> SystemConfig:
    return parse_config(Path(path).read_text(), base=base)


def format_config(config: SystemConfig) -> str:
    """Inverse of :func:`parse_config` (round-trips every documented key)."""
    def fmt(v):
        if isinstance(v, Enum):
            return v.value
        if isinstance(v, (list, tuple, np.ndarray)):
            return ",".join(repr(float(x)) if isinstance(x, float) else str(x) for x in v)
        return repr(v) if isinstance(v, float) else str(v)

    lines = []
    for key in sorted(_TOP_KEYS):
        value = getattr(config, key)
        if value is not None:
            lines.append(f"{key} = {fmt(value)}")
    for key, (group, attr, _) in sorted(_NESTED.items()):
        lines.append(f"{key} = {fmt(getattr(getattr(config, group), attr))}")
    return "\n".join(lines) + "\n"
