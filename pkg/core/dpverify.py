# core/dpverify.py
"""
Dynamic-programming checks on the certificate value function.

Every V_k depends on the data matrix only through the residual energies z,
and f(x, z + c 1) = f(x, z) - c for V_0, Vbar and the Bellman operators. For
two scalar models that leaves a function of (x, delta) with delta = z_2 - z_1
(z_1 normalized to 0). The game is also homogeneous,
V(c x, c^2 z) = c^2 V(x, z), and even in x, so V(x, delta) = rho g(phi) on
the chart rho = |(x^2, delta)|, phi = atan2(delta, x^2). Value iteration
carries g on a phi-grid and reports V_k on a uniform (x, delta) lattice.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from core.controller import successor_pieces, value_upper
from core.errors import DimensionMismatch, GammaTooSmall, GridTooCoarse, NoConvergence
from core.riccati import GameSpec, hinf_riccati
from core.synthesis import Certificate, ModelSet

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ValuePoint:
    x: np.ndarray
    z: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float).reshape(-1))
        z = np.asarray(self.z, dtype=float).reshape(-1)
        if np.any(z < 0.0):
            raise ValueError("residual energies must be nonnegative")
        object.__setattr__(self, "z", z)


def apply_Fu_Vbar(cert: Certificate, models: ModelSet, spec: GameSpec, point: ValuePoint, u: np.ndarray) -> float:
    """F_u Vbar(x, z), exact: per-piece closed-form max over v, then max over pieces."""
    x = point.x
    u = np.asarray(u, dtype=float).reshape(-1)
    stage = float(x @ spec.Q @ x + u @ spec.R @ u)
    return stage + float(np.max(successor_pieces(cert, models, point.z, x, u)))


@dataclass(frozen=True)
class BellmanReport:
    max_violation: float
    worst_point: Optional[ValuePoint]
    samples: int


def _sample_points(cert: Certificate, rng: np.random.Generator, samples: int, x_radius: float, z_max: float):
    n, N = cert.n, cert.N
    for s in range(samples):
        d = rng.standard_normal(n)
        d /= max(np.linalg.norm(d), 1e-300)
        x = x_radius * rng.uniform() ** (1.0 / n) * d
        if s % 4 == 0:
            z = np.zeros(N)
        else:
            z = rng.uniform(0.0, z_max, size=N)
        yield x, z


def check_bellman_decrease(
    cert: Certificate,
    models: ModelSet,
    spec: GameSpec,
    samples: int = 10000,
    seed: int = 0,
    x_radius: float = 1.0,
    z_max: Optional[float] = None,
) -> BellmanReport:
    """
    max over random (x, z) of F_{-K_k x} Vbar - Vbar with k = argmin z.
    One sample in four sits at z = 0.
    """
    if cert.N != models.N:
        raise DimensionMismatch("certificate and model set disagree on N")
    rng = np.random.Generator(np.random.Philox(seed))
    if z_max is None:
        z_max = float(np.max(np.linalg.eigvalsh(cert.P.reshape(-1, cert.n, cert.n)))) * x_radius ** 2

    worst, worst_point = -np.inf, None
    for x, z in _sample_points(cert, rng, samples, x_radius, z_max):
        k = int(np.argmin(z))
        u = -(cert.K[k] @ x)
        point = ValuePoint(x, z)
        gap = apply_Fu_Vbar(cert, models, spec, point, u) - value_upper(cert, z, x)[0]
        if gap > worst:
            worst, worst_point = gap, point
    return BellmanReport(max_violation=float(worst), worst_point=worst_point, samples=samples)


@dataclass(frozen=True)
class ValueGridConfig:
    x_max: float = 1.0
    n_x: int = 21
    delta_max: float = 4.0
    n_delta: int = 21
    n_phi: int = 801                # nodes of the angular chart
    n_u: int = 21
    n_v: int = 61
    refine: int = 21
    refine_passes: int = 3
    max_grid_tol: float = 0.1       # relative to 1 + max|V_k|

    def __post_init__(self) -> None:
        if self.n_x < 3 or self.n_x % 2 == 0 or self.n_delta < 3 or self.n_delta % 2 == 0:
            raise ValueError("n_x and n_delta must be odd and >= 3 so that 0 is a node")
        if self.n_phi < 5 or self.n_phi % 2 == 0:
            raise ValueError("n_phi must be odd and >= 5")
        if self.x_max <= 0.0 or self.delta_max <= 0.0:
            raise ValueError("grid extents must be positive")
        if self.n_u < 3 or self.n_v < 3 or self.refine < 3:
            raise ValueError("search grids need at least 3 points")
        if self.refine_passes < 1:
            raise ValueError("refine_passes must be >= 1")


@dataclass(frozen=True, eq=False)
class ValueGrid:
    xs: np.ndarray
    deltas: np.ndarray
    values: np.ndarray          # (n_x, n_delta)
    k: int
    grid_tol: float


_CHUNK = 64


def _chart(x: np.ndarray, d: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(rho, phi) with rho = |(x^2, delta)| and phi = atan2(delta, x^2) in [-pi/2, pi/2]."""
    X = x * x
    return np.hypot(X, d), np.arctan2(d, X)


def _cell_error(g: np.ndarray) -> np.ndarray:
    """Linear-interpolation error bound per chart cell; half the second difference also covers kinks."""
    d2 = np.zeros_like(g)
    d2[1:-1] = np.abs(g[2:] - 2.0 * g[1:-1] + g[:-2])
    d2[0], d2[-1] = d2[1], d2[-2]
    return 0.5 * np.maximum(d2[:-1], d2[1:])


class _ScalarBellman:
    """
    One application of the Bellman operator on the angular chart.

    V(x, delta) = rho * g(phi) for every (x, delta), so the iteration only
    carries g on a uniform phi-grid. Chart nodes sit at rho = 1, i.e.
    x = sqrt(cos phi), delta = sin phi, and successor values are read from g
    by linear interpolation in phi, without any extrapolation.
    """

    def __init__(
        self,
        models: ModelSet,
        spec: GameSpec,
        cfg: ValueGridConfig,
        gains: Tuple[float, ...],
        p_cert: float,
    ) -> None:
        pairs = list(models.models)
        if len(pairs) == 1:
            pairs = pairs * 2     # delta stays put; the delta = 0 slice is the single-model iteration
        self.a = np.array([float(A[0, 0]) for A, _ in pairs])
        self.b = np.array([float(B[0, 0]) for _, B in pairs])
        self.q = float(spec.Q[0, 0])
        self.r = float(spec.R[0, 0])
        self.g2 = spec.gamma ** 2
        self.cfg = cfg
        self.gains = np.array(gains, dtype=float)
        self.u_span = 3.0 * max(1.0, float(np.max(np.abs(self.gains))))
        self.p_cert = p_cert

        self.phis = np.linspace(-0.5 * np.pi, 0.5 * np.pi, cfg.n_phi)
        X = np.cos(self.phis)
        X[0] = X[-1] = 0.0
        self.x_nodes = np.sqrt(X)
        self.d_nodes = np.sin(self.phis)
        self.i_zero = cfg.n_phi // 2

        self.xs = np.linspace(-cfg.x_max, cfg.x_max, cfg.n_x)
        self.deltas = np.linspace(-cfg.delta_max, cfg.delta_max, cfg.n_delta)
        self.rho_out = float(np.hypot(cfg.x_max ** 2, cfg.delta_max))

    def terminal(self) -> np.ndarray:
        return -np.minimum(0.0, self.d_nodes)

    def on_grid(self, g: np.ndarray) -> np.ndarray:
        rho, phi = _chart(self.xs[:, None], self.deltas[None, :])
        return rho * np.interp(phi, self.phis, g)

    def _read(self, g: np.ndarray, v: np.ndarray, d: np.ndarray) -> np.ndarray:
        rho, phi = _chart(v, d)
        return rho * np.interp(phi, self.phis, g)

    def _residuals(self, idx: np.ndarray, U: np.ndarray, V: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        x = self.x_nodes[idx].reshape((-1,) + (1,) * (V.ndim - 1))
        u = U.reshape(U.shape + (1,) * (V.ndim - U.ndim))
        e0 = self.g2 * (self.a[0] * x + self.b[0] * u - V) ** 2
        e1 = self.g2 * (self.a[1] * x + self.b[1] * u - V) ** 2
        return e0, e1

    def _objective(self, g: np.ndarray, idx: np.ndarray, U: np.ndarray, V: np.ndarray) -> np.ndarray:
        # z normalized to (0, delta): the z_1 increment comes off as a constant
        x = self.x_nodes[idx, None, None]
        d = self.d_nodes[idx, None, None]
        u = U[..., None]
        e0, e1 = self._residuals(idx, U, V)
        return self.q * x * x + self.r * u * u + self._read(g, V, d + e1 - e0) - e0

    def _max_over_v(self, g: np.ndarray, idx: np.ndarray, U: np.ndarray, c: float):
        """max over v per (node, u): value, maximizer and the drop to its final neighbours."""
        cfg = self.cfg
        x = self.x_nodes[idx, None]
        y0 = self.a[0] * x + self.b[0] * U
        y1 = self.a[1] * x + self.b[1] * U
        ym = 0.5 * (y0 + y1)
        cand = np.stack([y0, y1, c * y0, c * y1, ym, c * ym], axis=-1)
        pad = 0.5 * np.abs(y1 - y0) + 0.25 * (1.0 + np.abs(ym))
        lo = cand.min(axis=-1) - pad
        step = (cand.max(axis=-1) + pad - lo) / (cfg.n_v - 1)
        V = np.concatenate([lo[..., None] + step[..., None] * np.arange(cfg.n_v), cand], axis=-1)
        J = self._objective(g, idx, U, V)
        best = np.argmax(J, axis=-1)[..., None]
        vb = np.take_along_axis(V, best, axis=-1)[..., 0]
        jb = np.take_along_axis(J, best, axis=-1)[..., 0]

        offsets = np.linspace(-1.0, 1.0, cfg.refine)
        for _ in range(cfg.refine_passes):
            Vf = vb[..., None] + step[..., None] * offsets
            Jf = self._objective(g, idx, U, Vf)
            i = np.argmax(Jf, axis=-1)[..., None]
            jn = np.take_along_axis(Jf, i, axis=-1)[..., 0]
            vb = np.where(jn > jb, np.take_along_axis(Vf, i, axis=-1)[..., 0], vb)
            jb = np.maximum(jb, jn)
            step = 2.0 * step / (cfg.refine - 1)

        Jn = self._objective(g, idx, U, vb[..., None] + step[..., None] * np.array([-1.0, 1.0]))
        return jb, vb, np.maximum(jb - Jn.min(axis=-1), 0.0)

    def _min_over_u(self, g: np.ndarray, cell_err: np.ndarray, idx: np.ndarray, c: float):
        cfg = self.cfg
        rows = np.arange(idx.size)
        x = self.x_nodes[idx]
        U = np.concatenate(
            [np.broadcast_to(np.linspace(-self.u_span, self.u_span, cfg.n_u), (idx.size, cfg.n_u)),
             -np.outer(x, self.gains)],
            axis=1,
        )
        J, _, _ = self._max_over_v(g, idx, U, c)
        best = np.argmin(J, axis=1)
        ub, jb = U[rows, best], J[rows, best]

        step = 2.0 * self.u_span / (cfg.n_u - 1)
        offsets = np.linspace(-1.0, 1.0, cfg.refine)
        for _ in range(cfg.refine_passes):
            Uf = ub[:, None] + step * offsets
            Jf, _, _ = self._max_over_v(g, idx, Uf, c)
            i = np.argmin(Jf, axis=1)
            jn = Jf[rows, i]
            ub = np.where(jn < jb, Uf[rows, i], ub)
            jb = np.minimum(jb, jn)
            step = 2.0 * step / (cfg.refine - 1)

        # error terms at the chosen input: neighbouring inputs, v-search drop, interpolated read
        Ub = ub[:, None] + step * np.array([-1.0, 0.0, 1.0])
        Jb, vb, v_drop = self._max_over_v(g, idx, Ub, c)
        u_rise = np.maximum(np.maximum(Jb[:, 0], Jb[:, 2]) - Jb[:, 1], 0.0)

        v_star = vb[:, 1]
        e0, e1 = self._residuals(idx, ub, v_star)
        rho, phi = _chart(v_star, self.d_nodes[idx] + e1 - e0)
        cell = np.clip(np.searchsorted(self.phis, phi) - 1, 0, cell_err.size - 1)
        return jb, u_rise + v_drop[:, 1] + rho * cell_err[cell]

    def apply(self, g: np.ndarray) -> Tuple[np.ndarray, float]:
        """g_{k+1} on the chart nodes and the largest local error estimate."""
        p_est = min(max(self.p_cert, float(g[self.i_zero]), 0.0), 0.95 * self.g2)
        c = 1.0 / (1.0 - p_est / self.g2)
        cell_err = _cell_error(g)

        out = np.empty_like(g)
        err = np.empty_like(g)
        for start in range(0, g.size, _CHUNK):
            idx = np.arange(start, min(start + _CHUNK, g.size))
            out[idx], err[idx] = self._min_over_u(g, cell_err, idx, c)
        return out, float(np.max(err))


def _scalar_gains(models: ModelSet, spec: GameSpec, cert: Optional[Certificate]) -> Tuple[float, ...]:
    if cert is not None:
        return tuple(float(K[0, 0]) for K in cert.K)
    gains = []
    for i in range(models.N):
        try:
            gains.append(float(hinf_riccati(models.A(i), models.B(i), spec).K[0, 0]))
        except (GammaTooSmall, NoConvergence):
            gains.append(float(models.A(i)[0, 0] / models.B(i)[0, 0]) if models.B(i)[0, 0] else 0.0)
    return tuple(gains)


def value_iteration_scalar(
    models: ModelSet,
    spec: GameSpec,
    config: Optional[ValueGridConfig] = None,
    k_max: int = 20,
    cert: Optional[Certificate] = None,
) -> List[ValueGrid]:
    """
    V_0(x, delta) = -min(0, delta); V_{k+1} = min_u max_v [stage + V_k(successor)].
    Returns the grids V_0 ... V_{k_max}.
    """
    cfg = config or ValueGridConfig()
    if models.n != 1 or models.m != 1 or models.N > 2:
        raise DimensionMismatch("value iteration runs on one or two scalar models only")
    if k_max < 0:
        raise ValueError("k_max must be >= 0")

    p_cert = float(np.max(cert.P)) if cert is not None else 0.0
    op = _ScalarBellman(models, spec, cfg, _scalar_gains(models, spec, cert), p_cert)

    values = np.broadcast_to(-np.minimum(0.0, op.deltas), (cfg.n_x, cfg.n_delta)).copy()
    grids = [ValueGrid(op.xs, op.deltas, values, 0, 0.0)]
    g = op.terminal()
    carried = 0.0
    for k in range(1, k_max + 1):
        g, local = op.apply(g)
        carried += local
        values = op.on_grid(g)
        # errors carried through the iterations plus the read-out onto the lattice
        tol = op.rho_out * (carried + float(np.max(_cell_error(g))))
        scale = 1.0 + float(np.max(np.abs(values)))
        if not np.all(np.isfinite(values)) or tol > cfg.max_grid_tol * scale:
            raise GridTooCoarse(
                f"grid tolerance {tol:.3e} at iteration {k} exceeds {cfg.max_grid_tol:g} x {scale:.3g}",
                {"iteration": k, "grid_tol": tol},
            )
        grids.append(ValueGrid(op.xs, op.deltas, values, k, tol))
        logger.debug("value iteration k=%d local error %.3e grid_tol=%.3e", k, local, tol)
    return grids


def grid_value_upper(cert: Certificate, grid: ValueGrid) -> np.ndarray:
    """Vbar on the grid nodes with z normalized to (0, delta)."""
    out = np.empty_like(grid.values)
    for ix, x in enumerate(grid.xs):
        for idl, d in enumerate(grid.deltas):
            z = np.array([0.0, d]) if cert.N == 2 else np.array([min(0.0, d)])
            out[ix, idl] = value_upper(cert, z, np.array([x]))[0]
    return out


@dataclass(frozen=True)
class ValueIterationReport:
    monotone: bool
    worst_monotone_gap: float
    upper_ok: Optional[bool]
    worst_upper_gap: Optional[float]
    tolerances: List[float] = field(default_factory=list)
    slope: float = float("nan")


def check_value_iteration(grids: List[ValueGrid], cert: Optional[Certificate] = None) -> ValueIterationReport:
    """
    Monotonicity V_{k+1} >= V_k - grid_tol at every node, and, given a
    certificate, V_k <= Vbar + grid_tol.
    """
    worst_mono = np.inf
    monotone = True
    for prev, nxt in zip(grids, grids[1:]):
        gap = float(np.min(nxt.values - prev.values + nxt.grid_tol))
        worst_mono = min(worst_mono, gap)
        monotone &= gap >= 0.0

    upper_ok, worst_upper = None, None
    if cert is not None:
        vbar = grid_value_upper(cert, grids[0])
        worst_upper = float(min(np.min(vbar + g.grid_tol - g.values) for g in grids))
        upper_ok = worst_upper >= 0.0

    last = grids[-1]
    iz = int(np.argmin(np.abs(last.deltas)))
    slope = float(last.values[-1, iz] / last.xs[-1] ** 2)
    return ValueIterationReport(
        monotone=bool(monotone),
        worst_monotone_gap=float(worst_mono) if np.isfinite(worst_mono) else 0.0,
        upper_ok=upper_ok,
        worst_upper_gap=worst_upper,
        tolerances=[g.grid_tol for g in grids],
        slope=slope,
    )
