# core/synthesis.py
"""
Certificates (gains K_k, cross matrices P_ij) for the finite model set and
their verification.

Triple inequality, for i, j, k in the model set:

    P_ik >= Q + K_k^T R K_k + M+^T G_ij M+ - gamma^2 M-^T M-
    M+ = (A_i - B_i K_k + A_j - B_j K_k) / 2
    M- = (A_i - B_i K_k - A_j + B_j K_k) / 2
    G_ij = (P_ij^-1 - gamma^-2 I)^-1

Since the controller plays k = argmin z, both z_k <= z_i and z_k <= z_j hold,
so the right-hand side may be dominated by either P_ik or P_jk. That reading
is what turns the two-model sign case (P, T, K) into a special case.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import eigh

from core.errors import (
    DimensionMismatch,
    GammaTooSmall,
    InfeasibleAtGamma,
    NoConvergence,
    NotContractive,
    NotPositive,
)
from core.quadform import (
    contraction_tol,
    gamma_transform,
    loewner_gap,
    loewner_sup,
    positivity_tol,
    project_window,
    sym,
)
from core.riccati import GameSpec, hinf_riccati

logger = logging.getLogger(__name__)

Triple = Tuple[int, int, int]


@dataclass(frozen=True, eq=False)
class ModelSet:
    models: Tuple[Tuple[np.ndarray, np.ndarray], ...]
    allow_duplicates: bool = False

    def __post_init__(self) -> None:
        if len(self.models) < 1:
            raise DimensionMismatch("model set needs at least one (A, B) pair")
        cleaned = []
        for A, B in self.models:
            A = np.atleast_2d(np.asarray(A, dtype=float))
            B = np.asarray(B, dtype=float)
            if B.ndim == 1:
                B = B.reshape(-1, 1)
            cleaned.append((A, B))
        n = cleaned[0][0].shape[0]
        m = cleaned[0][1].shape[1]
        for idx, (A, B) in enumerate(cleaned):
            if A.shape != (n, n) or B.shape != (n, m):
                raise DimensionMismatch(
                    f"model {idx} has A {A.shape}, B {B.shape}; expected ({n},{n}) and ({n},{m})"
                )
            if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
                raise ValueError(f"model {idx} contains non-finite entries")
        if not self.allow_duplicates:
            for i in range(len(cleaned)):
                for j in range(i + 1, len(cleaned)):
                    if np.array_equal(cleaned[i][0], cleaned[j][0]) and np.array_equal(cleaned[i][1], cleaned[j][1]):
                        raise ValueError(f"models {i} and {j} are identical")
        object.__setattr__(self, "models", tuple(cleaned))

    @classmethod
    def sign_pair(cls, A: np.ndarray, B: np.ndarray) -> "ModelSet":
        """{(A, B), (A, -B)}: input direction known up to sign."""
        B = np.asarray(B, dtype=float)
        return cls(((A, B), (A, -B)), allow_duplicates=True)

    @property
    def N(self) -> int:
        return len(self.models)

    @property
    def n(self) -> int:
        return self.models[0][0].shape[0]

    @property
    def m(self) -> int:
        return self.models[0][1].shape[1]

    def A(self, i: int) -> np.ndarray:
        return self.models[i][0]

    def B(self, i: int) -> np.ndarray:
        return self.models[i][1]


@dataclass(frozen=True, eq=False)
class Certificate:
    """K has shape (N, m, n); P has shape (N, N, n, n)."""
    gamma: float
    K: np.ndarray
    P: np.ndarray
    margin: float = float("nan")

    def __post_init__(self) -> None:
        K = np.asarray(self.K, dtype=float)
        P = np.asarray(self.P, dtype=float)
        if K.ndim != 3 or P.ndim != 4:
            raise DimensionMismatch(f"expected K (N,m,n) and P (N,N,n,n), got {K.shape} and {P.shape}")
        N, m, n = K.shape
        if P.shape != (N, N, n, n):
            raise DimensionMismatch(f"P has shape {P.shape}, expected {(N, N, n, n)}")
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "gamma", float(self.gamma))

    @classmethod
    def from_sign_case(cls, P: np.ndarray, T: np.ndarray, K: np.ndarray, gamma: float, margin: float = float("nan")) -> "Certificate":
        P = sym(P)
        T = sym(T)
        K = np.atleast_2d(np.asarray(K, dtype=float))
        return cls(
            gamma=gamma,
            K=np.stack([K, -K]),
            P=np.array([[P, T], [T, P]]),
            margin=margin,
        )

    @property
    def N(self) -> int:
        return self.K.shape[0]

    @property
    def m(self) -> int:
        return self.K.shape[1]

    @property
    def n(self) -> int:
        return self.K.shape[2]

    @cached_property
    def transforms(self) -> np.ndarray:
        """G_ij = gamma_transform(P_ij); raises if some P_ij leaves the window."""
        G = np.empty_like(self.P)
        for i in range(self.N):
            for j in range(self.N):
                G[i, j] = gamma_transform(self.P[i, j], self.gamma)
        return G

    def with_margin(self, margin: float) -> "Certificate":
        return Certificate(self.gamma, self.K, self.P, margin)


@dataclass(frozen=True)
class SynthOptions:
    tol: float = 1e-6               # verification tolerance
    cone_eps: float = 1e-6
    max_sweeps: int = 500
    sweep_tol: float = 1e-9
    upper_bound: str = "minimal"    # "minimal" | "shift"
    order_cross_terms: bool = True  # P_ik >= P_ii, P_kk
    riccati_tol: float = 1e-10
    riccati_max_iter: int = 10000


@dataclass(frozen=True)
class VerificationReport:
    feasible: bool
    margin: float
    worst_triple: Triple
    slacks: Dict[Triple, float] = field(default_factory=dict)
    cone_slacks: Dict[Tuple[int, int], float] = field(default_factory=dict)
    strict: bool = False


def _closed_loop(models: ModelSet, l: int, K: np.ndarray) -> np.ndarray:
    return models.A(l) - models.B(l) @ K


def pik_rhs(
    i: int,
    j: int,
    k: int,
    models: ModelSet,
    spec: GameSpec,
    P_ij: np.ndarray,
    K_k: np.ndarray,
) -> np.ndarray:
    G = gamma_transform(P_ij, spec.gamma)
    return _pik_rhs_with(i, j, models, spec, G, K_k)


def _pik_rhs_with(i: int, j: int, models: ModelSet, spec: GameSpec, G: np.ndarray, K_k: np.ndarray) -> np.ndarray:
    Ci = _closed_loop(models, i, K_k)
    Cj = _closed_loop(models, j, K_k)
    Mp = 0.5 * (Ci + Cj)
    Mm = 0.5 * (Ci - Cj)
    return sym(spec.Q + K_k.T @ spec.R @ K_k + Mp.T @ G @ Mp - spec.gamma ** 2 * (Mm.T @ Mm))


def _check_compatible(models: ModelSet, spec: GameSpec, cert: Certificate) -> None:
    if cert.N != models.N or cert.n != models.n or cert.m != models.m:
        raise DimensionMismatch(
            f"certificate (N={cert.N}, n={cert.n}, m={cert.m}) does not match "
            f"model set (N={models.N}, n={models.n}, m={models.m})"
        )
    if spec.n != models.n or spec.m != models.m:
        raise DimensionMismatch("Q/R dimensions do not match the model set")


def verify_certificate(
    models: ModelSet,
    spec: GameSpec,
    cert: Certificate,
    tol: float = 1e-6,
    strict: bool = False,
) -> VerificationReport:
    """
    Eigenvalue check of every triple inequality plus 0 < P_ij < gamma^2 I.
    Infeasibility is reported, never raised.
    """
    _check_compatible(models, spec, cert)
    spec = spec.with_gamma(cert.gamma)
    g2 = cert.gamma ** 2
    ctol = contraction_tol(cert.gamma)
    N = cert.N

    cone_slacks: Dict[Tuple[int, int], float] = {}
    cone_ok: Dict[Tuple[int, int], bool] = {}
    G: Dict[Tuple[int, int], np.ndarray] = {}
    for i in range(N):
        for j in range(N):
            lam = eigh(sym(cert.P[i, j]), eigvals_only=True)
            cone_slacks[(i, j)] = float(min(lam[0], g2 - lam[-1]))
            cone_ok[(i, j)] = bool(lam[0] > positivity_tol(lam[-1]) and lam[-1] < g2 - ctol)
            if cone_ok[(i, j)]:
                G[(i, j)] = gamma_transform(cert.P[i, j], cert.gamma)

    slacks: Dict[Triple, float] = {}
    for i in range(N):
        for j in range(N):
            for k in range(N):
                if not cone_ok[(i, j)]:
                    slacks[(i, j, k)] = min(cone_slacks[(i, j)], -1e-9)
                    continue
                rhs = _pik_rhs_with(i, j, models, spec, G[(i, j)], cert.K[k])
                slack = loewner_gap(cert.P[i, k], rhs)
                if not strict and j != i:
                    slack = max(slack, loewner_gap(cert.P[j, k], rhs))
                slacks[(i, j, k)] = slack

    worst_triple = min(slacks, key=lambda t: slacks[t])
    triple_margin = slacks[worst_triple]
    margin = float(min(triple_margin, min(cone_slacks.values())))
    feasible = all(cone_ok.values()) and triple_margin >= -tol
    return VerificationReport(
        feasible=bool(feasible),
        margin=margin,
        worst_triple=worst_triple,
        slacks=slacks,
        cone_slacks=cone_slacks,
        strict=strict,
    )


def _triples_for_block(a: int, k: int, N: int) -> List[Tuple[int, int]]:
    """(i, j) of the triples (i, j, k) whose inequality is enforced on P_ak."""
    return [(a, j) for j in range(N)] + [(k, a)]


def _upper_bound(F: Sequence[np.ndarray], how: str) -> np.ndarray:
    if how == "shift":
        Fbar = sum(F) / len(F)
        s = max(float(eigh(sym(Fj - Fbar), eigvals_only=True)[-1]) for Fj in F)
        return sym(Fbar + s * np.eye(Fbar.shape[0]))
    if how != "minimal":
        raise ValueError(f"unknown upper bound {how!r}")
    ordered = sorted(F, key=lambda M: -float(np.trace(M)))
    X = ordered[0]
    for Fj in ordered[1:]:
        X = loewner_sup(X, Fj)
    return X


def _sweep_cross_terms(
    models: ModelSet,
    spec: GameSpec,
    diag: Sequence[np.ndarray],
    gains: Sequence[np.ndarray],
    opts: SynthOptions,
) -> np.ndarray:
    N, n = models.N, models.n
    g2 = spec.gamma ** 2
    lo, hi = opts.cone_eps, (1.0 - opts.cone_eps) * g2

    P = np.empty((N, N, n, n))
    for i in range(N):
        P[i, i] = diag[i]
    for a in range(N):
        for k in range(N):
            if a != k:
                P[a, k] = loewner_sup(diag[a], diag[k])
    if N == 1:
        return P

    for sweep in range(1, opts.max_sweeps + 1):
        try:
            G = np.array([[gamma_transform(P[i, j], spec.gamma) for j in range(N)] for i in range(N)])
        except (NotContractive, NotPositive) as exc:
            raise InfeasibleAtGamma(f"cross term left the admissible window: {exc}") from exc

        P_new = P.copy()
        for a in range(N):
            for k in range(N):
                if a == k:
                    continue
                F = [_pik_rhs_with(i, j, models, spec, G[i, j], gains[k]) for i, j in _triples_for_block(a, k, N)]
                if opts.order_cross_terms:
                    F += [diag[a], diag[k]]
                X = _upper_bound(F, opts.upper_bound)
                if eigh(X, eigvals_only=True)[-1] >= hi:
                    raise InfeasibleAtGamma(
                        f"cross term P_{a}{k} reached gamma^2 I in sweep {sweep}",
                        {"gamma": spec.gamma, "block": [a, k], "sweep": sweep},
                    )
                P_new[a, k] = project_window(X, lo, hi)

        change = float(np.max(np.abs(P_new - P)))
        P = P_new
        if change < opts.sweep_tol:
            logger.debug("cross-term sweep converged after %d sweeps", sweep)
            break
    else:
        logger.warning("cross-term sweep hit the cap of %d sweeps (last change %.3e)", opts.max_sweeps, change)
    return P


def synth_certificate(models: ModelSet, spec: GameSpec, opts: Optional[SynthOptions] = None) -> Certificate:
    """
    Two-phase synthesis: Riccati solutions on the diagonal, then a monotone
    fixed-point sweep for the cross terms, then independent verification.
    """
    opts = opts or SynthOptions()
    if spec.n != models.n or spec.m != models.m:
        raise DimensionMismatch("Q/R dimensions do not match the model set")

    diag, gains = [], []
    for i in range(models.N):
        try:
            sol = hinf_riccati(models.A(i), models.B(i), spec, tol=opts.riccati_tol, max_iter=opts.riccati_max_iter)
        except NoConvergence as exc:
            raise GammaTooSmall(f"Riccati equation of model {i} did not converge: {exc}") from exc
        diag.append(sol.P)
        gains.append(sol.K)

    P = _sweep_cross_terms(models, spec, diag, gains, opts)
    cert = Certificate(gamma=spec.gamma, K=np.stack(gains), P=P)
    report = verify_certificate(models, spec, cert, tol=opts.tol)
    if not report.feasible:
        raise InfeasibleAtGamma(
            f"certificate at gamma={spec.gamma:g} fails verification "
            f"(margin {report.margin:.3e} at triple {report.worst_triple})",
            {"gamma": spec.gamma, "margin": report.margin, "worst_triple": list(report.worst_triple)},
        )
    logger.info("certificate at gamma=%g verified with margin %.3e", spec.gamma, report.margin)
    return cert.with_margin(report.margin)


def _feasible_at(models: ModelSet, spec: GameSpec, opts: SynthOptions) -> Optional[Certificate]:
    try:
        return synth_certificate(models, spec, opts)
    except (GammaTooSmall, InfeasibleAtGamma, NotContractive, NotPositive) as exc:
        logger.debug("gamma=%g infeasible: %s", spec.gamma, exc)
        return None


def gamma_bisect(
    models: ModelSet,
    Q: np.ndarray,
    R: np.ndarray,
    gamma_lo: float,
    gamma_hi: float,
    steps: int = 20,
    opts: Optional[SynthOptions] = None,
) -> Tuple[float, Certificate]:
    """
    Smallest gamma on the bisection lattice of [gamma_lo, gamma_hi] at which
    synthesis succeeds. An upper bound on the optimal gain, nothing more.
    """
    if not gamma_lo < gamma_hi:
        raise ValueError("gamma_lo must be below gamma_hi")
    opts = opts or SynthOptions()

    cert_hi = _feasible_at(models, GameSpec(Q, R, gamma_hi), opts)
    if cert_hi is None:
        raise InfeasibleAtGamma(f"no certificate even at gamma_hi={gamma_hi:g}", {"gamma": gamma_hi})
    cert_lo = _feasible_at(models, GameSpec(Q, R, gamma_lo), opts)
    if cert_lo is not None:
        return float(gamma_lo), cert_lo

    lo, hi = float(gamma_lo), float(gamma_hi)
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        cert = _feasible_at(models, GameSpec(Q, R, mid), opts)
        if cert is None:
            lo = mid
        else:
            hi, cert_hi = mid, cert
    logger.info("gamma bisection: feasible at %.6g, infeasible at %.6g", hi, lo)
    return hi, cert_hi


def input_sign_synthesis(
    A: np.ndarray,
    B: np.ndarray,
    spec: GameSpec,
    opts: Optional[SynthOptions] = None,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(P, T, K) for the model set {(A, B), (A, -B)}."""
    opts = opts or SynthOptions()
    models = ModelSet.sign_pair(A, B)
    cert = synth_certificate(models, spec, opts)
    P = cert.P[0, 0]
    T = sym(0.5 * (cert.P[0, 1] + cert.P[1, 0]))
    K = cert.K[0]

    report = verify_certificate(models, spec, Certificate.from_sign_case(P, T, K, spec.gamma), tol=opts.tol)
    if not report.feasible:
        raise InfeasibleAtGamma(
            f"symmetrized cross term fails verification (margin {report.margin:.3e})",
            {"gamma": spec.gamma, "margin": report.margin},
        )
    return P, T, K


def known_model_certificate(cert: Certificate, i: int) -> Certificate:
    """Single-model slice (P_ii, K_i): the known-model H-infinity law."""
    return Certificate(gamma=cert.gamma, K=cert.K[i : i + 1], P=cert.P[i : i + 1, i : i + 1])
