from __future__ import annotations

import os
from typing import Dict, List, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from simulators.metrics import empirical_gain, switch_times  # noqa: E402
from simulators.plant_sim import Trajectory  # noqa: E402
from core.errors import ZeroDisturbance  # noqa: E402

# byte-identical SVGs for identical inputs
plt.rcParams["svg.hashsalt"] = "minimax-adapt"
SVG_METADATA = {"Date": None}


def plot_trajectory(
    adaptive: Trajectory,
    path: str,
    baseline: Optional[Trajectory] = None,
    title: str = "",
    output_index: int = 0,
) -> str:
    """Output (left) and input (right) panels; the known-model law is overlaid dashed."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    fig, (ax_y, ax_u) = plt.subplots(1, 2, figsize=(10, 3.5))

    t_x = range(adaptive.xs.shape[0])
    t_u = range(adaptive.steps)
    ax_y.plot(t_x, adaptive.xs[:, output_index], label="adaptive")
    ax_u.step(t_u, adaptive.us[:, 0], where="post", label="adaptive")
    if baseline is not None:
        ax_y.plot(range(baseline.xs.shape[0]), baseline.xs[:, output_index], "--", label="known model")
        ax_u.step(range(baseline.steps), baseline.us[:, 0], "--", where="post", label="known model")
    for t in switch_times(adaptive):
        ax_u.axvline(t, color="grey", linewidth=0.5, alpha=0.5)

    ax_y.set_xlabel("t")
    ax_y.set_ylabel("output")
    ax_u.set_xlabel("t")
    ax_u.set_ylabel("input")
    ax_y.legend()
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=SVG_METADATA)
    plt.close(fig)
    return path


def run_summary(name: str, traj: Trajectory) -> Dict[str, object]:
    try:
        gain = empirical_gain(traj)
    except ZeroDisturbance:
        gain = None
    return {
        "run": name,
        "steps": traj.steps,
        "cum_payoff": traj.cum_payoff,
        "cum_state_cost": traj.cum_state_cost,
        "disturbance_energy": traj.cum_disturbance_energy,
        "empirical_gain": gain,
        "switch_times": switch_times(traj),
        "truncated": traj.truncated,
    }


def summary_table(names: Sequence[str], trajs: Sequence[Trajectory]) -> pd.DataFrame:
    rows: List[Dict[str, object]] = [run_summary(n, t) for n, t in zip(names, trajs)]
    df = pd.DataFrame(rows)
    df["switch_times"] = df["switch_times"].map(lambda s: " ".join(map(str, s)))
    return df


def plot_gain_bracket(gains: Sequence[float], lower: float, upper: float, path: str) -> str:
    """Per-run empirical gains against the [sqrt(lambda_max(T)), gamma] bracket."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(range(len(gains)), gains, "o", markersize=3, label="empirical gain")
    ax.axhline(lower, linestyle=":", color="black", label=f"{lower:.1f}")
    ax.axhline(upper, linestyle="--", color="black", label=f"gamma = {upper:g}")
    ax.set_xlabel("run")
    ax.set_ylabel("l2 gain")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=SVG_METADATA)
    plt.close(fig)
    return path
