# simulators/disturbances.py
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np

from core.controller import ControllerState, successor_pieces
from core.quadform import max_quad_single
from core.synthesis import Certificate, ModelSet


class DisturbanceKind(str, Enum):
    ZERO = "zero"
    WHITE = "white"
    ADVERSARIAL = "adversarial"
    EXPLICIT = "explicit"


@dataclass(frozen=True, eq=False)
class DisturbanceSpec:
    kind: DisturbanceKind
    sigma: Optional[np.ndarray] = None          # per-coordinate std (white)
    seed: int = 0
    sequence: Optional[np.ndarray] = None       # (horizon, n) (explicit)
    pair: Optional[Tuple[int, int]] = None      # pinned piece (adversarial)

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", DisturbanceKind(self.kind))
        if self.kind == DisturbanceKind.WHITE:
            if self.sigma is None:
                raise ValueError("white noise needs sigma")
            sigma = np.asarray(self.sigma, dtype=float).reshape(-1)
            if np.any(sigma < 0.0) or not np.all(np.isfinite(sigma)):
                raise ValueError("sigma must be finite and >= 0")
            object.__setattr__(self, "sigma", sigma)
        if self.kind == DisturbanceKind.EXPLICIT:
            if self.sequence is None:
                raise ValueError("explicit disturbance needs a sequence")
            seq = np.asarray(self.sequence, dtype=float)
            if seq.ndim == 1:
                seq = seq.reshape(-1, 1)
            object.__setattr__(self, "sequence", seq)

    @classmethod
    def zero(cls) -> "DisturbanceSpec":
        return cls(DisturbanceKind.ZERO)

    @classmethod
    def white(cls, sigma, seed: int) -> "DisturbanceSpec":
        return cls(DisturbanceKind.WHITE, sigma=np.atleast_1d(sigma), seed=int(seed))

    @classmethod
    def adversarial(cls, pair: Optional[Tuple[int, int]] = None) -> "DisturbanceSpec":
        return cls(DisturbanceKind.ADVERSARIAL, pair=pair)

    @classmethod
    def explicit(cls, sequence: Sequence) -> "DisturbanceSpec":
        return cls(DisturbanceKind.EXPLICIT, sequence=np.asarray(sequence, dtype=float))

    def with_seed(self, seed: int) -> "DisturbanceSpec":
        return DisturbanceSpec(self.kind, self.sigma, int(seed), self.sequence, self.pair)

    def with_scale(self, c: float) -> "DisturbanceSpec":
        """Same realization scaled by c (white and explicit only)."""
        if self.kind == DisturbanceKind.WHITE:
            return DisturbanceSpec(self.kind, self.sigma * c, self.seed)
        if self.kind == DisturbanceKind.EXPLICIT:
            return DisturbanceSpec(self.kind, sequence=self.sequence * c)
        return self

    def check_horizon(self, horizon: int, n: int) -> None:
        if self.kind == DisturbanceKind.EXPLICIT:
            if self.sequence.shape[0] < horizon or self.sequence.shape[1] != n:
                raise ValueError(
                    f"explicit sequence has shape {self.sequence.shape}, need at least ({horizon}, {n})"
                )
        if self.kind == DisturbanceKind.WHITE and self.sigma.size not in (1, n):
            raise ValueError(f"sigma has {self.sigma.size} entries for a state of dimension {n}")


def white_noise(sigma: np.ndarray, seed: int, horizon: int, n: int) -> np.ndarray:
    """Zero-mean Gaussian (horizon, n) draws from a counter-based Philox stream."""
    rng = np.random.Generator(np.random.Philox(int(seed)))
    return rng.standard_normal((horizon, n)) * np.broadcast_to(np.asarray(sigma, dtype=float), (n,))


def adversarial_disturbance(
    cert: Certificate,
    state: ControllerState,
    models: ModelSet,
    x: np.ndarray,
    u: np.ndarray,
    true_index: int,
    pair: Optional[Tuple[int, int]] = None,
) -> Tuple[np.ndarray, Tuple[int, int]]:
    """
    Worst-case w for one step: take the piece (i, j) with the largest
    closed-form successor value (or the pinned one), put the next state at its
    maximizer v* = (I - P_ij / gamma^2)^-1 (y_i + y_j) / 2 and return
    w = v* - (A_true x + B_true u).
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    if pair is None:
        # max_v max_ij V^ij = max_ij max_v V^ij, so the best closed-form piece
        # also carries the maximizer of value_upper at the successor
        pieces = successor_pieces(cert, models, state.z, x, u)
        i, j = np.unravel_index(int(np.argmax(pieces)), pieces.shape)
        pair = (int(i), int(j))
    i, j = pair
    yi = models.A(i) @ x + models.B(i) @ u
    yj = models.A(j) @ x + models.B(j) @ u
    _, vstar = max_quad_single(cert.P[i, j], cert.gamma, 0.5 * (yi + yj))
    return vstar - (models.A(true_index) @ x + models.B(true_index) @ u), pair
