from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import yaml

from core.dpverify import ValueGridConfig
from core.errors import ConfigError, DimensionMismatch, MinimaxError
from core.riccati import GameSpec, io_to_state
from core.synthesis import ModelSet, SynthOptions
from simulators.disturbances import DisturbanceKind, DisturbanceSpec
from simulators.plant_sim import DEFAULT_OVERFLOW_LIMIT, POLICIES, ScenarioEvent


@dataclass(frozen=True)
class RunConfig:
    name: str
    disturbance: DisturbanceSpec
    events: Tuple[ScenarioEvent, ...] = ()
    seeds: int = 1
    policy: str = "adaptive"
    true_index: Optional[int] = None


@dataclass(frozen=True)
class SimulationConfig:
    x0: Optional[np.ndarray] = None
    horizon: int = 50
    true_index: int = 0
    overflow_limit: float = DEFAULT_OVERFLOW_LIMIT
    runs: Tuple[RunConfig, ...] = ()


@dataclass(frozen=True)
class DPCheckConfig:
    samples: int = 10000
    seed: int = 0
    x_radius: float = 1.0
    k_max: int = 20
    grid: ValueGridConfig = field(default_factory=ValueGridConfig)


@dataclass(frozen=True)
class StudyConfig:
    name: str
    models: ModelSet
    Q: np.ndarray
    R: np.ndarray
    gamma: Optional[float]
    gamma_range: Optional[Tuple[float, float]]
    bisection_steps: int
    synthesis: SynthOptions
    simulation: SimulationConfig
    dpcheck: DPCheckConfig
    out_dir: str
    event_log_path: str
    db_path: str

    def game_spec(self, gamma: Optional[float] = None) -> GameSpec:
        g = gamma if gamma is not None else self.gamma
        if g is None:
            raise ConfigError("no gamma configured; give game.gamma or pass one explicitly")
        return GameSpec(self.Q, self.R, g)

    def default_x0(self) -> np.ndarray:
        if self.simulation.x0 is not None:
            return self.simulation.x0
        x0 = np.zeros(self.models.n)
        x0[0] = 1.0
        return x0


def _section(cfg: Mapping[str, Any], key: str, allowed: Sequence[str]) -> Dict[str, Any]:
    sec = cfg.get(key) or {}
    if not isinstance(sec, Mapping):
        raise ConfigError(f"section '{key}' must be a mapping")
    _reject_unknown(sec, allowed, key)
    return dict(sec)


def _reject_unknown(sec: Mapping[str, Any], allowed: Sequence[str], where: str) -> None:
    unknown = sorted(set(sec) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(map(str, unknown))}", {"section": where, "keys": unknown})


def _matrix(value: Any, what: str, default_dim: Optional[int] = None) -> np.ndarray:
    if value is None:
        if default_dim is None:
            raise ConfigError(f"{what} is required")
        return np.eye(default_dim)
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        if default_dim is None:
            raise ConfigError(f"{what} must be a matrix")
        return float(arr) * np.eye(default_dim)
    return np.atleast_2d(arr)


def _model_entry(entry: Mapping[str, Any], where: str) -> Tuple[np.ndarray, np.ndarray]:
    if not isinstance(entry, Mapping):
        raise ConfigError(f"{where} must be a mapping")
    _reject_unknown(entry, ("A", "B", "a", "b"), where)
    if "a" in entry or "b" in entry:
        if "A" in entry or "B" in entry:
            raise ConfigError(f"{where}: give either matrices A/B or io-coefficients a/b")
        return io_to_state(entry.get("a", []), entry.get("b", []))
    A = _matrix(entry.get("A"), f"{where}.A")
    B = np.asarray(entry.get("B"), dtype=float) if entry.get("B") is not None else None
    if B is None:
        raise ConfigError(f"{where}.B is required")
    if B.ndim == 1:
        B = B.reshape(-1, 1)
    return A, B


def _models(raw: Any) -> ModelSet:
    if isinstance(raw, Mapping):
        _reject_unknown(raw, ("sign_pair",), "models")
        A, B = _model_entry(raw.get("sign_pair") or {}, "models.sign_pair")
        return ModelSet.sign_pair(A, B)
    if not isinstance(raw, list) or not raw:
        raise ConfigError("models must be a non-empty list or a {sign_pair: ...} mapping")
    return ModelSet(tuple(_model_entry(e, f"models[{i}]") for i, e in enumerate(raw)))


def _disturbance(raw: Mapping[str, Any], where: str) -> DisturbanceSpec:
    _reject_unknown(raw, ("kind", "sigma", "seed", "sequence", "pair"), where)
    try:
        kind = DisturbanceKind(str(raw.get("kind", "zero")))
    except ValueError as exc:
        raise ConfigError(f"{where}.kind: {exc}") from exc
    pair = raw.get("pair")
    return DisturbanceSpec(
        kind=kind,
        sigma=raw.get("sigma"),
        seed=int(raw.get("seed", 0)),
        sequence=raw.get("sequence"),
        pair=tuple(int(p) for p in pair) if pair is not None else None,
    )


def _runs(raw: Any) -> Tuple[RunConfig, ...]:
    runs: List[RunConfig] = []
    for i, r in enumerate(raw or []):
        where = f"simulation.runs[{i}]"
        if not isinstance(r, Mapping):
            raise ConfigError(f"{where} must be a mapping")
        _reject_unknown(r, ("name", "disturbance", "events", "seeds", "policy", "true_index"), where)
        events = []
        for j, ev in enumerate(r.get("events") or []):
            _reject_unknown(ev, ("time", "model"), f"{where}.events[{j}]")
            events.append(ScenarioEvent(time=int(ev["time"]), model=int(ev["model"])))
        policy = str(r.get("policy", "adaptive"))
        if policy not in POLICIES:
            raise ConfigError(f"{where}.policy must be one of {POLICIES}")
        runs.append(
            RunConfig(
                name=str(r.get("name", f"run{i}")),
                disturbance=_disturbance(r.get("disturbance") or {}, f"{where}.disturbance"),
                events=tuple(events),
                seeds=int(r.get("seeds", 1)),
                policy=policy,
                true_index=int(r["true_index"]) if r.get("true_index") is not None else None,
            )
        )
    return tuple(runs)


def _options(cls, raw: Mapping[str, Any], where: str):
    names = [f.name for f in fields(cls)]
    _reject_unknown(raw, names, where)
    return cls(**raw)


def parse_study_config(cfg: Mapping[str, Any]) -> StudyConfig:
    """Validate an already-parsed document; every problem surfaces as ConfigError."""
    if not isinstance(cfg, Mapping):
        raise ConfigError("config document must be a mapping")
    _reject_unknown(cfg, ("project", "models", "game", "synthesis", "simulation", "dpcheck", "output", "logging"), "config")
    try:
        project = _section(cfg, "project", ("name", "version"))
        models = _models(cfg.get("models"))
        game = _section(cfg, "game", ("Q", "R", "gamma", "gamma_range", "bisection_steps"))
        Q = _matrix(game.get("Q"), "game.Q", models.n)
        R = _matrix(game.get("R"), "game.R", models.m)
        gamma = float(game["gamma"]) if game.get("gamma") is not None else None
        gamma_range = None
        if game.get("gamma_range") is not None:
            lo, hi = (float(g) for g in game["gamma_range"])
            if not 0.0 < lo < hi:
                raise ConfigError("game.gamma_range must be [lo, hi] with 0 < lo < hi")
            gamma_range = (lo, hi)
        if gamma is None and gamma_range is None:
            raise ConfigError("game needs gamma or gamma_range")
        GameSpec(Q, R, gamma if gamma is not None else gamma_range[1])
        if Q.shape[0] != models.n or R.shape[0] != models.m:
            raise DimensionMismatch(f"Q is {Q.shape}, R is {R.shape}; models have n={models.n}, m={models.m}")

        synthesis = _options(SynthOptions, _section(cfg, "synthesis", [f.name for f in fields(SynthOptions)]), "synthesis")

        sim = _section(cfg, "simulation", ("x0", "horizon", "true_index", "overflow_limit", "runs"))
        x0 = np.asarray(sim["x0"], dtype=float).reshape(-1) if sim.get("x0") is not None else None
        if x0 is not None and x0.size != models.n:
            raise DimensionMismatch(f"simulation.x0 has {x0.size} entries, state dimension is {models.n}")
        simulation = SimulationConfig(
            x0=x0,
            horizon=int(sim.get("horizon", 50)),
            true_index=int(sim.get("true_index", 0)),
            overflow_limit=float(sim.get("overflow_limit", DEFAULT_OVERFLOW_LIMIT)),
            runs=_runs(sim.get("runs")),
        )
        if simulation.horizon < 1:
            raise ConfigError("simulation.horizon must be >= 1")
        if not 0 <= simulation.true_index < models.N:
            raise ConfigError(f"simulation.true_index must be in [0, {models.N})")

        grid_keys = [f.name for f in fields(ValueGridConfig)]
        dp = _section(cfg, "dpcheck", ["samples", "seed", "x_radius", "k_max"] + grid_keys)
        dpcheck = DPCheckConfig(
            samples=int(dp.pop("samples", 10000)),
            seed=int(dp.pop("seed", 0)),
            x_radius=float(dp.pop("x_radius", 1.0)),
            k_max=int(dp.pop("k_max", 20)),
            grid=ValueGridConfig(**dp),
        )

        out = _section(cfg, "output", ("out_dir",))
        log = _section(cfg, "logging", ("event_log", "db_path"))
    except ConfigError:
        raise
    except (MinimaxError, ValueError, TypeError, KeyError, AttributeError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc

    return StudyConfig(
        name=str(project.get("name", "study")),
        models=models,
        Q=Q,
        R=R,
        gamma=gamma,
        gamma_range=gamma_range,
        bisection_steps=int(game.get("bisection_steps", 20)),
        synthesis=synthesis,
        simulation=simulation,
        dpcheck=dpcheck,
        out_dir=str(out.get("out_dir", "results")),
        event_log_path=str(log.get("event_log", "logs/runs.jsonl")),
        db_path=str(log.get("db_path", "logs/runs.sqlite")),
    )


def load_study_config(path: str = "config/double_integrator.yaml") -> StudyConfig:
    try:
        with open(path, "r", encoding="utf-8") as f:
            cfg: Dict[str, Any] = yaml.safe_load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    return parse_study_config(cfg)
