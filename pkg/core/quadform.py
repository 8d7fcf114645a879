# core/quadform.py
"""
Closed-form maximizers of the indefinite quadratics

    max_v { |v|^2_P - gamma^2 |y - v|^2 }
    max_v { |v|^2_T - gamma^2 |y1 - v|^2 / 2 - gamma^2 |y2 - v|^2 / 2 }

Both are finite iff P < gamma^2 I. Every matrix is re-symmetrized on entry and
all inverses are taken through the symmetric eigendecomposition, which also
serves as the definiteness check.
"""
from __future__ import annotations

from typing import Tuple

import numpy as np
from scipy.linalg import eigh

from core.errors import NotContractive, NotPositive


def sym(M: np.ndarray) -> np.ndarray:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return 0.5 * (M + M.T)


def symmetry_defect(M: np.ndarray) -> float:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return float(np.max(np.abs(M - M.T))) if M.size else 0.0


def is_symmetric(M: np.ndarray) -> bool:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return symmetry_defect(M) <= 1e-12 * (1.0 + float(np.max(np.abs(M))))


def positivity_tol(lam_max: float) -> float:
    """Lower-bound tolerance of the window check, relative to the matrix itself."""
    return 1e-9 * (1.0 + abs(float(lam_max)))


def contraction_tol(gamma: float) -> float:
    """Upper-bound tolerance of the window check, relative to gamma^2."""
    return 1e-9 * (1.0 + gamma ** 2)


def check_gamma(gamma: float) -> float:
    gamma = float(gamma)
    if not np.isfinite(gamma) or gamma <= 0.0:
        raise ValueError(f"gamma must be a positive finite number, got {gamma!r}")
    return gamma


def _window_eig(P: np.ndarray, gamma: float) -> Tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of sym(P) after checking 0 < P < gamma^2 I."""
    gamma = check_gamma(gamma)
    lam, V = eigh(sym(P))
    if lam[0] <= positivity_tol(lam[-1]):
        raise NotPositive(
            f"matrix is not positive definite: lambda_min={lam[0]:.6g}",
            {"lambda_min": float(lam[0])},
        )
    if lam[-1] >= gamma ** 2 - contraction_tol(gamma):
        raise NotContractive(
            f"lambda_max={lam[-1]:.6g} is not below gamma^2={gamma ** 2:.6g}",
            {"lambda_max": float(lam[-1]), "gamma": gamma},
        )
    return lam, V


def gamma_transform(P: np.ndarray, gamma: float) -> np.ndarray:
    """G = (P^-1 - gamma^-2 I)^-1 for 0 < P < gamma^2 I."""
    lam, V = _window_eig(P, gamma)
    g = lam / (1.0 - lam / gamma ** 2)
    return sym((V * g) @ V.T)


def _amplify(lam: np.ndarray, V: np.ndarray, gamma: float, y: np.ndarray) -> np.ndarray:
    # (I - gamma^-2 P)^-1 y
    return V @ ((V.T @ y) / (1.0 - lam / gamma ** 2))


def max_quad_single(P: np.ndarray, gamma: float, y: np.ndarray) -> Tuple[float, np.ndarray]:
    lam, V = _window_eig(P, gamma)
    y = np.asarray(y, dtype=float).reshape(-1)
    vstar = _amplify(lam, V, gamma, y)
    # y^T G y with G = P (I - gamma^-2 P)^-1, evaluated as (V^T y)^T diag(g) (V^T y)
    c = V.T @ y
    value = float(np.sum(c * c * (lam / (1.0 - lam / gamma ** 2))))
    return value, vstar


def max_quad_pair(
    T: np.ndarray, gamma: float, y1: np.ndarray, y2: np.ndarray
) -> Tuple[float, np.ndarray]:
    y1 = np.asarray(y1, dtype=float).reshape(-1)
    y2 = np.asarray(y2, dtype=float).reshape(-1)
    value, vstar = max_quad_single(T, gamma, 0.5 * (y1 + y2))
    d = 0.5 * (y1 - y2)
    return value - gamma ** 2 * float(d @ d), vstar


def single_objective(P: np.ndarray, gamma: float, y: np.ndarray, v: np.ndarray) -> float:
    y = np.asarray(y, dtype=float).reshape(-1)
    v = np.asarray(v, dtype=float).reshape(-1)
    r = y - v
    return float(v @ sym(P) @ v - gamma ** 2 * (r @ r))


def pair_objective(
    T: np.ndarray, gamma: float, y1: np.ndarray, y2: np.ndarray, v: np.ndarray
) -> float:
    y1 = np.asarray(y1, dtype=float).reshape(-1)
    y2 = np.asarray(y2, dtype=float).reshape(-1)
    v = np.asarray(v, dtype=float).reshape(-1)
    r1, r2 = y1 - v, y2 - v
    return float(v @ sym(T) @ v - 0.5 * gamma ** 2 * (r1 @ r1) - 0.5 * gamma ** 2 * (r2 @ r2))


def loewner_gap(X: np.ndarray, Y: np.ndarray) -> float:
    """lambda_min(X - Y): nonnegative iff X >= Y."""
    return float(eigh(sym(X) - sym(Y), eigvals_only=True)[0])


def loewner_sup(F1: np.ndarray, F2: np.ndarray) -> np.ndarray:
    """
    Minimal upper bound (F1 + F2)/2 + |F1 - F2|/2, equal to F1 + (F2 - F1)_+.
    """
    lam, V = eigh(sym(F2) - sym(F1))
    return sym(sym(F1) + (V * np.maximum(lam, 0.0)) @ V.T)


def project_window(X: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Clip the spectrum of sym(X) into [lo, hi]."""
    lam, V = eigh(sym(X))
    return sym((V * np.clip(lam, lo, hi)) @ V.T)
