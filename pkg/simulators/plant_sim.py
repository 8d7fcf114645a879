# simulators/plant_sim.py
"""
Closed loop x_{t+1} = A x_t + B u_t + w_t with (A, B) the true model, which
scenario events may switch mid-run. The controller sees only the measured
transitions; the disturbance generator may see everything.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from core.controller import ControllerState, control, observe
from core.errors import DimensionMismatch
from core.riccati import GameSpec
from core.synthesis import Certificate, ModelSet
from simulators.disturbances import DisturbanceKind, DisturbanceSpec, adversarial_disturbance, white_noise

logger = logging.getLogger(__name__)

THREADS_ENV = "MINIMAX_ADAPT_THREADS"
DEFAULT_OVERFLOW_LIMIT = 1e12
POLICIES = ("adaptive", "oracle")


@dataclass(frozen=True)
class ScenarioEvent:
    time: int
    model: int

    def __post_init__(self) -> None:
        if self.time < 0:
            raise ValueError("event time must be >= 0")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """
    xs has one more row than us/ws: xs[t+1] = A x_t + B u_t + w_t for the
    model true_indices[t]. zs[t] is the residual-energy vector before step t.
    """
    xs: np.ndarray
    us: np.ndarray
    ws: np.ndarray
    ks: np.ndarray
    true_indices: np.ndarray
    zs: np.ndarray
    stage_costs: np.ndarray
    state_costs: np.ndarray     # |x_t|_Q^2 + |u_t|_R^2
    gamma: float
    truncated: bool = False
    pairs: List[Optional[tuple]] = field(default_factory=list)

    @property
    def steps(self) -> int:
        return self.us.shape[0]

    @property
    def cum_costs(self) -> np.ndarray:
        return np.cumsum(self.stage_costs)

    @property
    def cum_payoff(self) -> float:
        return float(np.sum(self.stage_costs))

    @property
    def cum_state_cost(self) -> float:
        return float(np.sum(self.state_costs))

    @property
    def cum_disturbance_energy(self) -> float:
        return float(np.sum(self.ws * self.ws))

    def to_frame(self) -> pd.DataFrame:
        n, m = self.xs.shape[1], self.us.shape[1]
        cols: Dict[str, np.ndarray] = {"t": np.arange(self.steps)}
        for a in range(n):
            cols[f"x_{a + 1}"] = self.xs[:-1, a]
        for b in range(m):
            cols[f"u_{b + 1}"] = self.us[:, b]
        for a in range(n):
            cols[f"w_{a + 1}"] = self.ws[:, a]
        cols["k"] = self.ks
        cols["stage_cost"] = self.stage_costs
        cols["cum_cost"] = self.cum_costs
        return pd.DataFrame(cols)


def _events_by_time(events: Sequence[ScenarioEvent], N: int) -> Dict[int, int]:
    table: Dict[int, int] = {}
    for ev in events:
        if not 0 <= ev.model < N:
            raise ValueError(f"event switches to model {ev.model}, model set has {N}")
        table[ev.time] = ev.model
    return table


def simulate(
    models: ModelSet,
    true_index: int,
    cert: Certificate,
    spec: GameSpec,
    x0: np.ndarray,
    horizon: int,
    dist: DisturbanceSpec,
    events: Sequence[ScenarioEvent] = (),
    policy: str = "adaptive",
    overflow_limit: float = DEFAULT_OVERFLOW_LIMIT,
) -> Trajectory:
    """
    policy="adaptive" runs u = -K_k x with k = argmin z; policy="oracle" runs
    the known-model law u = -K_true x. Both keep z updated for logging.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}")
    if cert.N != models.N or cert.n != models.n or cert.m != models.m:
        raise DimensionMismatch("certificate does not match the model set")
    if not 0 <= true_index < models.N:
        raise ValueError(f"true_index {true_index} out of range")
    n, m, N = models.n, models.m, models.N
    x = np.asarray(x0, dtype=float).reshape(-1)
    if x.size != n:
        raise DimensionMismatch(f"x0 has {x.size} entries, state dimension is {n}")
    dist.check_horizon(horizon, n)
    switch_at = _events_by_time(events, N)
    noise = white_noise(dist.sigma, dist.seed, horizon, n) if dist.kind == DisturbanceKind.WHITE else None
    g2 = spec.gamma ** 2

    xs = [x]
    us: List[np.ndarray] = []
    ws: List[np.ndarray] = []
    ks: List[int] = []
    trues: List[int] = []
    zs = [np.zeros(N)]
    stage: List[float] = []
    state_cost: List[float] = []
    pairs: List[Optional[tuple]] = []
    truncated = False

    state = ControllerState.initial(N)
    true = true_index
    for t in range(horizon):
        true = switch_at.get(t, true)
        if policy == "adaptive":
            k = state.k
            u = control(state, cert, x)
        else:
            k = true
            u = -(cert.K[true] @ x)

        pair = None
        if dist.kind == DisturbanceKind.ZERO:
            w = np.zeros(n)
        elif dist.kind == DisturbanceKind.WHITE:
            w = noise[t]
        elif dist.kind == DisturbanceKind.EXPLICIT:
            w = dist.sequence[t]
        else:
            w, pair = adversarial_disturbance(cert, state, models, x, u, true, dist.pair)

        x_next = models.A(true) @ x + models.B(true) @ u + w
        sc = float(x @ spec.Q @ x + u @ spec.R @ u)
        state = observe(state, models, spec.gamma, x, u, x_next)

        us.append(u)
        ws.append(w)
        ks.append(k)
        trues.append(true)
        state_cost.append(sc)
        stage.append(sc - g2 * float(w @ w))
        pairs.append(pair)
        xs.append(x_next)
        zs.append(state.z)
        x = x_next

        if not np.all(np.isfinite(x)) or float(np.max(np.abs(x))) > overflow_limit:
            truncated = True
            logger.warning("state exceeded %.3g at t=%d, run truncated", overflow_limit, t + 1)
            break

    return Trajectory(
        xs=np.array(xs),
        us=np.array(us).reshape(-1, m),
        ws=np.array(ws).reshape(-1, n),
        ks=np.array(ks, dtype=int),
        true_indices=np.array(trues, dtype=int),
        zs=np.array(zs),
        stage_costs=np.array(stage),
        state_costs=np.array(state_cost),
        gamma=spec.gamma,
        truncated=truncated,
        pairs=pairs,
    )


@dataclass(frozen=True, eq=False)
class SimulationJob:
    name: str
    true_index: int
    x0: np.ndarray
    horizon: int
    dist: DisturbanceSpec
    events: Sequence[ScenarioEvent] = ()
    policy: str = "adaptive"


def batch_workers(requested: Optional[int] = None) -> int:
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            logger.warning("ignoring non-integer %s=%r", THREADS_ENV, env)
    return max(1, os.cpu_count() or 1)


def run_batch(
    models: ModelSet,
    cert: Certificate,
    spec: GameSpec,
    jobs: Sequence[SimulationJob],
    overflow_limit: float = DEFAULT_OVERFLOW_LIMIT,
    max_workers: Optional[int] = None,
) -> List[Trajectory]:
    """Independent runs; results come back in job order whatever the thread count."""
    def _run(job: SimulationJob) -> Trajectory:
        return simulate(
            models, job.true_index, cert, spec, job.x0, job.horizon, job.dist,
            events=job.events, policy=job.policy, overflow_limit=overflow_limit,
        )

    workers = batch_workers(max_workers)
    if workers == 1 or len(jobs) <= 1:
        return [_run(job) for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(_run, jobs))
