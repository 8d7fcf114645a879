from __future__ import annotations

import json
import math
import os
from typing import Any, Dict, Iterable

import numpy as np
import pandas as pd

from core.dpverify import ValueGrid
from core.errors import ConfigError, DimensionMismatch
from core.synthesis import Certificate
from simulators.plant_sim import Trajectory

FLOAT_FORMAT = "%.17g"


def _ensure_dir(path: str) -> None:
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)


def certificate_to_dict(cert: Certificate) -> Dict[str, Any]:
    # Python floats serialize through repr, which round-trips exactly.
    return {
        "gamma": cert.gamma,
        "n": cert.n,
        "m": cert.m,
        "N": cert.N,
        "K": cert.K.tolist(),
        "P": cert.P.tolist(),
        "margin": None if math.isnan(cert.margin) else cert.margin,
    }


def certificate_from_dict(doc: Dict[str, Any]) -> Certificate:
    try:
        cert = Certificate(
            gamma=float(doc["gamma"]),
            K=np.array(doc["K"], dtype=float),
            P=np.array(doc["P"], dtype=float),
            margin=float("nan") if doc.get("margin") is None else float(doc["margin"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed certificate: {exc}") from exc
    if (cert.n, cert.m, cert.N) != (int(doc.get("n", cert.n)), int(doc.get("m", cert.m)), int(doc.get("N", cert.N))):
        raise DimensionMismatch("certificate header disagrees with its matrices")
    return cert


def save_certificate(cert: Certificate, path: str) -> None:
    _ensure_dir(path)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(certificate_to_dict(cert), f, indent=2)
        f.write("\n")


def load_certificate(path: str) -> Certificate:
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read certificate {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"certificate {path} is not valid JSON: {exc}") from exc
    return certificate_from_dict(doc)


def save_trajectory_csv(traj: Trajectory, path: str) -> None:
    _ensure_dir(path)
    traj.to_frame().to_csv(path, index=False, float_format=FLOAT_FORMAT)


def grids_to_frame(grids: Iterable[ValueGrid]) -> pd.DataFrame:
    frames = []
    for g in grids:
        X, D = np.meshgrid(g.xs, g.deltas, indexing="ij")
        frames.append(pd.DataFrame({"k": g.k, "x": X.ravel(), "delta": D.ravel(), "V": g.values.ravel()}))
    return pd.concat(frames, ignore_index=True)


def save_grids_csv(grids: Iterable[ValueGrid], path: str) -> None:
    _ensure_dir(path)
    grids_to_frame(grids).to_csv(path, index=False, float_format=FLOAT_FORMAT)


def save_json(doc: Dict[str, Any], path: str) -> None:
    _ensure_dir(path)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2, default=float)
        f.write("\n")
