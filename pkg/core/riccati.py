# core/riccati.py
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy.linalg import cho_factor, cho_solve, eigh, solve_discrete_are

from core.errors import DimensionMismatch, GammaTooSmall, NoConvergence, NotContractive, NotPositive
from core.quadform import check_gamma, gamma_transform, sym

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10000
_DIVERGENCE_FRACTION = 1.0 - 1e-6


@dataclass(frozen=True)
class GameSpec:
    """Payoff weights |x|_Q^2 + |u|_R^2 - gamma^2 |w|^2."""
    Q: np.ndarray
    R: np.ndarray
    gamma: float

    def __post_init__(self) -> None:
        Q = sym(self.Q)
        R = sym(self.R)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "gamma", check_gamma(self.gamma))
        if Q.shape[0] != Q.shape[1] or R.shape[0] != R.shape[1]:
            raise DimensionMismatch("Q and R must be square")
        if eigh(Q, eigvals_only=True)[0] <= 0.0:
            raise ValueError("Q must be positive definite")
        if eigh(R, eigvals_only=True)[0] <= 0.0:
            raise ValueError("R must be positive definite")

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @property
    def m(self) -> int:
        return self.R.shape[0]

    def with_gamma(self, gamma: float) -> "GameSpec":
        return GameSpec(self.Q, self.R, gamma)


@dataclass(frozen=True)
class RiccatiSolution:
    P: np.ndarray
    K: np.ndarray
    iterations: int
    residual: float


def _check_dims(A: np.ndarray, B: np.ndarray, spec: GameSpec) -> Tuple[np.ndarray, np.ndarray]:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B.reshape(-1, 1)
    n = A.shape[0]
    if A.shape != (n, n) or B.shape[0] != n:
        raise DimensionMismatch(f"A {A.shape} and B {B.shape} are inconsistent")
    if spec.n != n or spec.m != B.shape[1]:
        raise DimensionMismatch(
            f"Q/R sized for (n={spec.n}, m={spec.m}) but model has (n={n}, m={B.shape[1]})"
        )
    return A, B


def riccati_gain(P: np.ndarray, A: np.ndarray, B: np.ndarray, spec: GameSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Returns (K, G): K = (R + B^T G B)^-1 B^T G A with G = gamma_transform(P)."""
    G = gamma_transform(P, spec.gamma)
    S = sym(spec.R + B.T @ G @ B)
    K = cho_solve(cho_factor(S), B.T @ G @ A)
    return K, G


def riccati_step(P: np.ndarray, A: np.ndarray, B: np.ndarray, spec: GameSpec) -> Tuple[np.ndarray, np.ndarray]:
    """
    One step of P -> min_u max_w [ |x|_Q^2 + |u|_R^2 - gamma^2|w|^2 + |Ax+Bu+w|_P^2 ].
    Returns (P_next, K).
    """
    K, G = riccati_gain(P, A, B, spec)
    P_next = spec.Q + A.T @ G @ A - A.T @ G @ B @ K
    return sym(P_next), K


def hinf_riccati(
    A: np.ndarray,
    B: np.ndarray,
    spec: GameSpec,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> RiccatiSolution:
    """
    Monotone value iteration for the H-infinity Riccati equation of one model,
    started at P0 = Q. Raises GammaTooSmall when an iterate reaches gamma^2 I.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    A, B = _check_dims(A, B, spec)
    ceiling = spec.gamma ** 2 * _DIVERGENCE_FRACTION

    P = spec.Q.copy()
    for it in range(1, max_iter + 1):
        if eigh(P, eigvals_only=True)[-1] >= ceiling:
            raise GammaTooSmall(
                f"Riccati iterate reached gamma^2 I at iteration {it} (gamma={spec.gamma:g})",
                {"gamma": spec.gamma, "iteration": it},
            )
        try:
            P_next, _ = riccati_step(P, A, B, spec)
        except (NotContractive, NotPositive) as exc:
            raise GammaTooSmall(f"Riccati iteration left the admissible window: {exc}") from exc
        if not np.all(np.isfinite(P_next)):
            raise GammaTooSmall("Riccati iterates diverged", {"gamma": spec.gamma})

        change = float(np.max(np.abs(P_next - P)))
        P = P_next
        if change <= tol:
            if eigh(P, eigvals_only=True)[-1] >= ceiling:
                raise GammaTooSmall(f"Riccati fixed point is not below gamma^2 I (gamma={spec.gamma:g})")
            P_check, K = riccati_step(P, A, B, spec)
            residual = float(np.max(np.abs(P_check - P)))
            logger.debug("riccati converged in %d iterations, residual %.3e", it, residual)
            return RiccatiSolution(P=P, K=K, iterations=it, residual=residual)

    raise NoConvergence(
        f"Riccati iteration did not converge in {max_iter} iterations (last change {change:.3e})",
        {"gamma": spec.gamma, "max_iter": max_iter, "change": change},
    )


def lqr_gain_limit(A: np.ndarray, B: np.ndarray, spec: GameSpec) -> RiccatiSolution:
    """gamma -> infinity limit of hinf_riccati: the LQR Riccati solution from scipy's DARE."""
    A, B = _check_dims(A, B, spec)
    P = sym(solve_discrete_are(A, B, spec.Q, spec.R))
    K = cho_solve(cho_factor(sym(spec.R + B.T @ P @ B)), B.T @ P @ A)
    P_check = spec.Q + A.T @ P @ A - A.T @ P @ B @ K
    return RiccatiSolution(P=P, K=K, iterations=0, residual=float(np.max(np.abs(P_check - P))))


def io_to_state(a_coeffs: Sequence[float], b_coeffs: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    """
    Non-minimal realization of
        y_t = -a_1 y_{t-1} - ... - a_n y_{t-n} + b_1 u_{t-1} + ... + b_n u_{t-n}
    with state x_t = (y_{t-1}, ..., y_{t-n}, u_{t-1}, ..., u_{t-n}).
    """
    a = np.asarray(a_coeffs, dtype=float).reshape(-1)
    b = np.asarray(b_coeffs, dtype=float).reshape(-1)
    n = a.size
    if n < 1 or b.size != n:
        raise DimensionMismatch("io_to_state needs n >= 1 coefficients of each kind")

    A = np.zeros((2 * n, 2 * n))
    A[0, :n] = -a
    A[0, n:] = b
    for i in range(1, n):
        A[i, i - 1] = 1.0               # shift outputs
        A[n + i, n + i - 1] = 1.0       # shift inputs
    B = np.zeros((2 * n, 1))
    B[n, 0] = 1.0
    return A, B
