"""Robust joint precoder and multi-sector BD-RIS design for RSMA downlinks under imperfect CSI."""
from .config import (BcdParams, Pattern, RcgParams, Scheme, SweepParams, SystemConfig,
                     ValidatedConfig, load_config, validate)
from .errors import (BdrisError, DegenerateGeometry, DegenerateRetraction, DivisionDegenerate,
                     Infeasible, InvalidConfig, QosInfeasible, SolverStall)

__all__ = [
    "BcdParams", "Pattern", "RcgParams", "Scheme", "SweepParams", "SystemConfig",
    "ValidatedConfig", "load_config", "validate",
    "BdrisError", "DegenerateGeometry", "DegenerateRetraction", "DivisionDegenerate",
    "Infeasible", "InvalidConfig", "QosInfeasible", "SolverStall",
]
