# simulators/metrics.py
from __future__ import annotations

from typing import List, Optional

import numpy as np

from core.errors import ZeroDisturbance
from simulators.plant_sim import Trajectory


def empirical_gain(traj: Trajectory) -> float:
    """sqrt(sum |x|_Q^2 + |u|_R^2) / sqrt(sum |w|^2) over the logged steps."""
    energy = traj.cum_disturbance_energy
    if energy <= 0.0:
        raise ZeroDisturbance("empirical gain is undefined for a zero disturbance")
    return float(np.sqrt(traj.cum_state_cost) / np.sqrt(energy))


def switch_times(traj: Trajectory) -> List[int]:
    """Steps t at which the selected model k_t differs from k_{t-1}."""
    ks = traj.ks
    return [int(t) for t in np.flatnonzero(ks[1:] != ks[:-1]) + 1]


def lock_in_time(traj: Trajectory, after: int = 0) -> Optional[int]:
    """First t >= after from which k_t stays constant to the end, None for an empty run."""
    if traj.steps == 0:
        return None
    last = [t for t in switch_times(traj) if t >= after]
    return last[-1] if last else after


def energy_identity_error(traj: Trajectory, model: Optional[int] = None) -> float:
    """
    max_t |gamma^2 sum_{tau<t} |w_tau|^2 - z_model(t)|, divided by
    max(1, gamma^2 sum |w|^2): absolute below unit energy, relative above.
    Only meaningful while the true model is constant.
    """
    if model is None:
        if traj.steps and np.any(traj.true_indices != traj.true_indices[0]):
            raise ValueError("true model switched during the run; pass the model explicitly")
        model = int(traj.true_indices[0]) if traj.steps else 0
    g2 = traj.gamma ** 2
    energy = np.concatenate([[0.0], np.cumsum(np.sum(traj.ws * traj.ws, axis=1))]) * g2
    err = np.abs(energy - traj.zs[:, model])
    return float(np.max(err) / max(1.0, energy[-1]))


def growth_ratios(traj: Trajectory) -> np.ndarray:
    """|x_{t+1}| / |x_t| along the run (nan where x_t = 0)."""
    norms = np.linalg.norm(traj.xs, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(norms[:-1] > 0.0, norms[1:] / norms[:-1], np.nan)
