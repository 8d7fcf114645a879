# core/controller.py
"""
Runtime side of the adaptive law: per-model residual energies z_i, model
selection k = argmin z (smallest index on ties), u = -K_k x, and the
certificate value function

    Vbar(x, z) = max_{i,j} |x|^2_{P_ij} - (z_i + z_j) / 2.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple, Union

import numpy as np

from core.errors import DimensionMismatch
from core.synthesis import Certificate, ModelSet

History = Sequence[Tuple[np.ndarray, np.ndarray, np.ndarray]]   # (x_t, u_t, x_{t+1})


def _vec(v: np.ndarray) -> np.ndarray:
    return np.asarray(v, dtype=float).reshape(-1)


@dataclass(frozen=True, eq=False)
class ControllerState:
    z: np.ndarray
    k: int = 0
    t: int = 0

    @classmethod
    def initial(cls, N: int) -> "ControllerState":
        return cls(z=np.zeros(N), k=0, t=0)

    @property
    def N(self) -> int:
        return self.z.size


def observe(
    state: ControllerState,
    models: ModelSet,
    gamma: float,
    x_t: np.ndarray,
    u_t: np.ndarray,
    x_next: np.ndarray,
) -> ControllerState:
    if state.N != models.N:
        raise DimensionMismatch(f"state tracks {state.N} models, model set has {models.N}")
    x_t, u_t, x_next = _vec(x_t), _vec(u_t), _vec(x_next)
    z = state.z.copy()
    for i in range(models.N):
        r = models.A(i) @ x_t + models.B(i) @ u_t - x_next
        z[i] += gamma ** 2 * float(r @ r)
    return ControllerState(z=z, k=int(np.argmin(z)), t=state.t + 1)


def control(state: ControllerState, cert: Certificate, x: np.ndarray) -> np.ndarray:
    if cert.N != state.N:
        raise DimensionMismatch(f"certificate has {cert.N} gains, state tracks {state.N} models")
    return -(cert.K[state.k] @ _vec(x))


def sign_statistic(history: History, A: np.ndarray, B: np.ndarray) -> float:
    """sum_tau (x_{tau+1} - A x_tau)^T B u_tau."""
    s = 0.0
    for x, u, x_next in history:
        s += float((_vec(x_next) - A @ _vec(x)) @ (B @ _vec(u)))
    return s


def sign_rule_control(history: History, A: np.ndarray, B: np.ndarray, K: np.ndarray, x: np.ndarray) -> np.ndarray:
    if sign_statistic(history, A, B) >= 0.0:
        return -(K @ _vec(x))
    return K @ _vec(x)


def _z_of(state_or_z: Union[ControllerState, np.ndarray]) -> np.ndarray:
    if isinstance(state_or_z, ControllerState):
        return state_or_z.z
    return _vec(state_or_z)


def value_pieces(cert: Certificate, state_or_z: Union[ControllerState, np.ndarray], x: np.ndarray) -> np.ndarray:
    """V^{ij}(x, z) = |x|^2_{P_ij} - (z_i + z_j)/2 as an (N, N) array."""
    x = _vec(x)
    z = _z_of(state_or_z)
    quad = np.einsum("a,ijab,b->ij", x, cert.P, x)
    return quad - 0.5 * (z[:, None] + z[None, :])


def value_upper(
    cert: Certificate, state_or_z: Union[ControllerState, np.ndarray], x: np.ndarray
) -> Tuple[float, Tuple[int, int]]:
    pieces = value_pieces(cert, state_or_z, x)
    i, j = np.unravel_index(int(np.argmax(pieces)), pieces.shape)
    return float(pieces[i, j]), (int(i), int(j))


def successor_pieces(
    cert: Certificate,
    models: ModelSet,
    z: np.ndarray,
    x: np.ndarray,
    u: np.ndarray,
) -> np.ndarray:
    """
    max_v V^{ij}(v, z + residual updates) per piece, in closed form:
        |(y_i + y_j)/2|^2_{G_ij} - gamma^2 |(y_i - y_j)/2|^2 - (z_i + z_j)/2
    with y_l = A_l x + B_l u.
    """
    x, u, z = _vec(x), _vec(u), _vec(z)
    g2 = cert.gamma ** 2
    G = cert.transforms
    Y = np.stack([models.A(l) @ x + models.B(l) @ u for l in range(models.N)])
    mid = 0.5 * (Y[:, None, :] + Y[None, :, :])
    half = 0.5 * (Y[:, None, :] - Y[None, :, :])
    quad = np.einsum("ija,ijab,ijb->ij", mid, G, mid)
    return quad - g2 * np.sum(half * half, axis=-1) - 0.5 * (z[:, None] + z[None, :])


@dataclass(frozen=True, eq=False)
class InfoMatrix:
    """Z_t = sum_tau [-x_{tau+1}; x_tau; u_tau][...]^T."""
    Z: np.ndarray
    n: int
    m: int

    @classmethod
    def empty(cls, n: int, m: int) -> "InfoMatrix":
        return cls(Z=np.zeros((2 * n + m, 2 * n + m)), n=n, m=m)

    def update(self, x: np.ndarray, u: np.ndarray, x_next: np.ndarray) -> "InfoMatrix":
        zeta = np.concatenate([-_vec(x_next), _vec(x), _vec(u)])
        return InfoMatrix(Z=self.Z + np.outer(zeta, zeta), n=self.n, m=self.m)

    def residual_energy(self, A: np.ndarray, B: np.ndarray) -> float:
        """|| [I A B]^T ||^2_Z = sum_tau |A x_tau + B u_tau - x_{tau+1}|^2."""
        M = np.hstack([np.eye(self.n), A, B])
        return float(np.trace(M @ self.Z @ M.T))


def replay_info(history: Iterable[Tuple[np.ndarray, np.ndarray, np.ndarray]], n: int, m: int) -> InfoMatrix:
    info = InfoMatrix.empty(n, m)
    for x, u, x_next in history:
        info = info.update(x, u, x_next)
    return info


def value_upper_from_info(cert: Certificate, models: ModelSet, info: InfoMatrix, x: np.ndarray) -> float:
    z = np.array([cert.gamma ** 2 * info.residual_energy(models.A(l), models.B(l)) for l in range(models.N)])
    return value_upper(cert, z, x)[0]


def value_upper_sign(
    P: np.ndarray,
    T: np.ndarray,
    A: np.ndarray,
    B: np.ndarray,
    gamma: float,
    info: InfoMatrix,
    x: np.ndarray,
) -> float:
    """Two-model value function with the block-trace term on the T piece."""
    x = _vec(x)
    n = A.shape[0]
    IA = np.hstack([np.eye(n), A])
    W = np.zeros_like(info.Z)
    W[: 2 * n, : 2 * n] = IA.T @ IA
    W[2 * n :, 2 * n :] = B.T @ B
    g2 = gamma ** 2
    return max(
        float(x @ P @ x) - g2 * info.residual_energy(A, B),
        float(x @ P @ x) - g2 * info.residual_energy(A, -B),
        float(x @ T @ x) - g2 * float(np.trace(W @ info.Z)),
    )
