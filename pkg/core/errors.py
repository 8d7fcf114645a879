# core/errors.py
from __future__ import annotations

from typing import Any, Dict, Optional


class MinimaxError(Exception):
    """
    Base error. Carries a machine-friendly reason code (used in run logs and
    CLI reports) plus optional details.
    """

    reason: str = "MINIMAX_ERROR"

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None) -> None:
        super().__init__(message)
        self.details: Dict[str, Any] = details or {}


class NotContractive(MinimaxError):
    reason = "NOT_CONTRACTIVE"          # lambda_max(P) >= gamma^2


class NotPositive(MinimaxError):
    reason = "NOT_POSITIVE"             # lambda_min(P) <= 0


class GammaTooSmall(MinimaxError):
    reason = "GAMMA_TOO_SMALL"


class NoConvergence(MinimaxError):
    reason = "NO_CONVERGENCE"


class InfeasibleAtGamma(MinimaxError):
    reason = "INFEASIBLE_AT_GAMMA"


class ZeroDisturbance(MinimaxError):
    reason = "ZERO_DISTURBANCE"


class GridTooCoarse(MinimaxError):
    reason = "GRID_TOO_COARSE"


class DimensionMismatch(MinimaxError):
    reason = "DIMENSION_MISMATCH"


class ConfigError(MinimaxError):
    reason = "CONFIG_ERROR"
