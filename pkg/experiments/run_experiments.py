# experiments/run_experiments.py
"""
Double integrator with unknown input sign: printed-matrix checks, synthesis
at gamma = 19 and the empirical gain bracket.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from core.errors import ZeroDisturbance
from core.riccati import GameSpec
from core.synthesis import Certificate, ModelSet, synth_certificate
from simulators.disturbances import DisturbanceSpec
from simulators.metrics import empirical_gain, growth_ratios
from simulators.plant_sim import SimulationJob, run_batch, simulate

logger = logging.getLogger(__name__)

EXAMPLE_GAMMA = 19.0
EXAMPLE_A = np.array([[2.0, -1.0, 1.0],
                      [1.0, 0.0, 0.0],
                      [0.0, 0.0, 0.0]])
EXAMPLE_B = np.array([[0.0], [0.0], [1.0]])
PRINTED_P = np.array([[20.61, -11.09, 11.09],
                      [-11.09, 7.83, -6.83],
                      [11.09, -6.83, 7.83]])
PRINTED_T = np.array([[155.0, -84.4, 84.4],
                      [-84.4, 89.0, -87.5],
                      [84.4, -87.5, 89.0]])
PRINTED_K = np.array([[1.786, -1.288, 1.288]])
PRINTED_SQRT_NORM_T = 16.8


def example_models() -> ModelSet:
    return ModelSet.sign_pair(EXAMPLE_A, EXAMPLE_B)


def example_spec(gamma: float = EXAMPLE_GAMMA) -> GameSpec:
    return GameSpec(np.eye(3), np.eye(1), gamma)


def printed_certificate() -> Certificate:
    return Certificate.from_sign_case(PRINTED_P, PRINTED_T, PRINTED_K, EXAMPLE_GAMMA)


def sqrt_lambda_max(T: np.ndarray) -> float:
    return float(np.sqrt(np.linalg.eigvalsh(0.5 * (T + T.T))[-1]))


def worst_case_map(T: np.ndarray, A: np.ndarray, gamma: float) -> np.ndarray:
    """(I - T / gamma^2)^-1 A: next state under the worst disturbance on the T piece."""
    return np.linalg.solve(np.eye(A.shape[0]) - T / gamma ** 2, A)


def spectral_radius(M: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def relative_difference(X: np.ndarray, Y: np.ndarray) -> float:
    return float(np.linalg.norm(X - Y) / np.linalg.norm(Y))


@dataclass
class ExampleReport:
    sqrt_norm_T_printed: float
    growth_rate_printed: float
    rel_diff_P: float
    rel_diff_T: float
    rel_diff_K: float
    sqrt_norm_T_synth: float
    margin: float
    white_gains: List[float] = field(default_factory=list)
    adversarial_gains: List[float] = field(default_factory=list)
    observed_growth: Optional[float] = None
    horizon: int = 200

    @property
    def max_gain(self) -> float:
        return max(self.white_gains + self.adversarial_gains, default=float("nan"))

    def lines(self) -> List[str]:
        return [
            f"sqrt(lambda_max(T)) printed : {self.sqrt_norm_T_printed:.3f} (stated {PRINTED_SQRT_NORM_T})",
            f"sqrt(lambda_max(T)) synth   : {self.sqrt_norm_T_synth:.3f}",
            f"certificate margin          : {self.margin:.3e}",
            f"rel. diff P / T / K         : {self.rel_diff_P:.3f} / {self.rel_diff_T:.3f} / {self.rel_diff_K:.3f}",
            f"worst-case growth rate      : {self.growth_rate_printed:.4f}"
            + (f" (simulated {self.observed_growth:.4f})" if self.observed_growth is not None else ""),
            f"white-noise gain max        : {max(self.white_gains, default=float('nan')):.3f} over {len(self.white_gains)} runs",
            f"adversarial gain max        : {max(self.adversarial_gains, default=float('nan')):.3f}",
            f"bracket                     : [{PRINTED_SQRT_NORM_T}, {EXAMPLE_GAMMA:g}]",
        ]

    def as_dict(self) -> Dict[str, object]:
        return {
            "sqrt_norm_T_printed": self.sqrt_norm_T_printed,
            "sqrt_norm_T_synth": self.sqrt_norm_T_synth,
            "growth_rate_printed": self.growth_rate_printed,
            "observed_growth": self.observed_growth,
            "rel_diff_P": self.rel_diff_P,
            "rel_diff_T": self.rel_diff_T,
            "rel_diff_K": self.rel_diff_K,
            "margin": self.margin,
            "white_gains": self.white_gains,
            "adversarial_gains": self.adversarial_gains,
            "max_gain": self.max_gain,
            "horizon": self.horizon,
        }


def pinned_growth_rate(cert: Certificate, models: ModelSet, spec: GameSpec, horizon: int = 40) -> float:
    """Last |x_{t+1}|/|x_t| of a run with the adversary pinned on the cross piece (0, 1)."""
    traj = simulate(models, 0, cert, spec, np.array([1.0, 0.0, 0.0]), horizon, DisturbanceSpec.adversarial(pair=(0, 1)))
    ratios = growth_ratios(traj)
    return float(ratios[np.isfinite(ratios)][-1])


def example_report(
    cert: Optional[Certificate] = None,
    seeds: int = 50,
    horizon: int = 200,
    sigma: float = 0.1,
    seed0: int = 0,
) -> ExampleReport:
    models = example_models()
    spec = example_spec()
    if cert is None:
        cert = synth_certificate(models, spec)

    T_synth = 0.5 * (cert.P[0, 1] + cert.P[1, 0])
    # gains use x0 = 0 so the ratio is bounded by gamma
    jobs = [
        SimulationJob(f"white{s}", s % 2, np.zeros(3), horizon, DisturbanceSpec.white(sigma, seed0 + s))
        for s in range(seeds)
    ]
    white = [empirical_gain(t) for t in run_batch(models, cert, spec, jobs)]

    adversarial = []
    for true_index in (0, 1):
        traj = simulate(models, true_index, cert, spec, np.array([1.0, 0.0, 0.0]), horizon, DisturbanceSpec.adversarial())
        try:
            adversarial.append(empirical_gain(traj))
        except ZeroDisturbance:
            logger.info("adversarial run with true model %d drew no disturbance", true_index)

    printed = printed_certificate()
    return ExampleReport(
        sqrt_norm_T_printed=sqrt_lambda_max(PRINTED_T),
        growth_rate_printed=spectral_radius(worst_case_map(PRINTED_T, EXAMPLE_A, EXAMPLE_GAMMA)),
        rel_diff_P=relative_difference(cert.P[0, 0], PRINTED_P),
        rel_diff_T=relative_difference(T_synth, PRINTED_T),
        rel_diff_K=relative_difference(cert.K[0], PRINTED_K),
        sqrt_norm_T_synth=sqrt_lambda_max(T_synth),
        margin=cert.margin,
        white_gains=white,
        adversarial_gains=adversarial,
        observed_growth=pinned_growth_rate(printed, models, spec),
        horizon=horizon,
    )


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO)
    for line in example_report().lines():
        print(line)
