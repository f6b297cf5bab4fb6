"""Slow-fast systems, hypothesis certification and the analytic rate constants.

The system is

    dx = (S x + g1(x, y)) dt
    dy = (F y + g2(x, y)) dt / eps + sigma * eps**(-1/alpha) dL

with ``g1(0, 0) = g2(0, 0) = 0`` and a declared joint Lipschitz constant ``K``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .errors import ContractionError, DomainError, ShapeError
from .stable_noise import StableSpec

Vector = np.ndarray
Drift = Callable[[Vector, Vector], Vector]


def _as_matrix(a, name) -> np.ndarray:
    m = np.atleast_2d(np.asarray(a, dtype=float))
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ShapeError(f"{name} must be a square matrix, got shape {m.shape}")
    return m


@dataclass(frozen=True, eq=False)
class SlowFastSystem:
    S: np.ndarray
    F: np.ndarray
    g1: Drift
    g2: Drift
    K: float
    epsilon: float
    sigma: float
    noise: StableSpec
    g1_bound: Optional[float] = None
    g2_x: Optional[Callable] = None  # (x, y) -> (n2, n1) Jacobian
    g2_y: Optional[Callable] = None  # (x, y) -> (n2, n2) Jacobian
    name: str = "custom"

    def __post_init__(self):
        S = _as_matrix(self.S, "S")
        F = _as_matrix(self.F, "F")
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "F", F)
        if self.noise.dim != F.shape[0]:
            raise ShapeError(f"noise has {self.noise.dim} components but F is {F.shape}")
        if not self.K > 0:
            raise DomainError("Lipschitz constant K must be positive")
        if not self.epsilon > 0:
            raise DomainError("epsilon must be positive")
        if self.sigma < 0:
            raise DomainError("sigma must be non-negative")
        x0 = np.zeros(self.n1)
        y0 = np.zeros(self.n2)
        r1 = np.atleast_1d(np.asarray(self.g1(x0, y0), dtype=float))
        r2 = np.atleast_1d(np.asarray(self.g2(x0, y0), dtype=float))
        if r1.shape != (self.n1,) or r2.shape != (self.n2,):
            raise ShapeError("g1/g2 output shapes do not match S/F")
        if np.max(np.abs(r1), initial=0) > 1e-12 or np.max(np.abs(r2), initial=0) > 1e-12:
            raise DomainError("nonlinearities must vanish at the origin")

    @property
    def n1(self) -> int:
        return self.S.shape[0]

    @property
    def n2(self) -> int:
        return self.F.shape[0]

    @property
    def alpha(self) -> tuple[float, ...]:
        return self.noise.alpha

    def with_(self, **changes) -> "SlowFastSystem":
        return replace(self, **changes)

    def drift1(self, x, y):
        """Vectorised g1 on arrays of shape (..., n1), (..., n2)."""
        return _vectorise(self.g1, x, y, self.n1)

    def drift2(self, x, y):
        return _vectorise(self.g2, x, y, self.n2)


def _vectorise(g, x, y, n_out):
    # drifts are written componentwise: g(x, y) accepts x of shape (n1,) or
    # (n1, M) and returns (n_out,) or (n_out, M)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim == 1:
        return np.asarray(g(x, y), dtype=float).reshape(n_out)
    m = x.shape[0]
    out = np.asarray(g(x.T, y.T), dtype=float)
    if out.ndim == 1:
        out = out.reshape(n_out, 1)
    return np.ascontiguousarray(np.broadcast_to(out, (n_out, m)).T)


@dataclass(frozen=True)
class HypothesisReport:
    gamma_s: float
    gamma_f: float
    gamma: float
    K: float
    epsilon: float
    rho_eps: float
    rho_bar_eps: float
    lip_h_bound: float
    a1_ok: bool
    a3_ok: bool
    contraction_ok: bool
    certified: bool = True
    notes: tuple[str, ...] = ()

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d["notes"] = list(self.notes)
        return d


def log_norm(A) -> float:
    """Euclidean logarithmic norm: largest eigenvalue of (A + A^T)/2.

    Certifies ``|exp(A t) v| <= exp(mu t) |v|`` for every ``t >= 0``.
    """
    A = _as_matrix(A, "matrix")
    return float(np.linalg.eigvalsh(0.5 * (A + A.T)).max())


def backward_growth(S) -> float:
    """Largest ``g`` with ``|exp(S t) x| <= exp(g t) |x|`` for all ``t <= 0``."""
    return -log_norm(-_as_matrix(S, "S"))


def default_gamma(K: float, gamma_f: float) -> float:
    return 0.5 * (-gamma_f - K)


def contraction_rate(epsilon, K, gamma, gamma_s, gamma_f) -> float:
    """Lipschitz constant of the Lyapunov-Perron operator on the weighted space."""
    _check_rate_domain(epsilon, gamma, gamma_s, gamma_f)
    return epsilon * K / (gamma + epsilon * gamma_s) - K / (gamma + gamma_f)


def tracking_rate(epsilon, K, gamma, gamma_s, gamma_f) -> float:
    """Contraction constant of the exponential-tracking operator."""
    _check_rate_domain(epsilon, gamma, gamma_s, gamma_f)
    a = gamma + epsilon * gamma_s
    b = gamma + gamma_f
    bracket = 1.0 - K * (epsilon / a - 1.0 / b)
    if bracket == 0:
        raise DomainError("tracking rate undefined: bracket term vanishes")
    return epsilon * K / a - K / b - epsilon * K ** 2 / (a * b * bracket)


def lipschitz_bound_h(epsilon, K, gamma, gamma_s, gamma_f) -> float:
    rho = contraction_rate(epsilon, K, gamma, gamma_s, gamma_f)
    if not 0 < rho < 1:
        raise ContractionError(f"contraction violated: rho(eps) = {rho}")
    return -K / (gamma + gamma_f) / (1.0 - rho)


def epsilon_threshold(K, gamma, gamma_s, gamma_f, rho_max) -> float:
    """Largest epsilon with ``rho(eps) <= rho_max``; ``inf`` if every epsilon qualifies.

    rho is linear-fractional and increasing in eps with supremum
    ``K / gamma_s + rho(0)``.
    """
    rho0 = contraction_rate(0.0, K, gamma, gamma_s, gamma_f)
    if not rho0 < rho_max:
        raise DomainError(f"rho(0) = {rho0} >= rho_max = {rho_max}: no admissible epsilon")
    if rho_max >= 1:
        raise DomainError("rho_max must be below 1")
    r = rho_max - rho0
    denom = K - r * gamma_s
    if denom <= 0:
        return math.inf
    return r * gamma / denom


def _check_rate_domain(epsilon, gamma, gamma_s, gamma_f):
    if epsilon < 0:
        raise DomainError("epsilon must be non-negative")
    if not gamma > 0:
        raise DomainError("gamma must be positive")
    if not gamma + gamma_f < 0:
        raise DomainError("need gamma + gamma_f < 0")
    if not gamma + epsilon * gamma_s > 0:
        raise DomainError("need gamma + eps * gamma_s > 0")


def validate_hypotheses(sys: SlowFastSystem, gamma: float | None = None,
                        declared_rates: tuple[float, float] | None = None) -> HypothesisReport:
    """Certify the dichotomy and gap hypotheses and evaluate the rate constants.

    ``gamma_s`` and ``gamma_f`` come from logarithmic norms, which bound the
    matrix exponentials even for non-normal matrices.  ``declared_rates``
    (e.g. from eigenvalues) are accepted but flagged uncertified unless the
    logarithmic norms confirm them.  Every flag fails closed.
    """
    S, F = sys.S, sys.F
    gs_cert = backward_growth(S)
    gf_cert = log_norm(F)
    notes = []
    certified = True
    if declared_rates is not None:
        gamma_s, gamma_f = map(float, declared_rates)
        if gamma_s > gs_cert + 1e-12 or gamma_f < gf_cert - 1e-12:
            certified = False
            notes.append("declared rates are not certified by logarithmic norms")
    else:
        gamma_s, gamma_f = gs_cert, gf_cert

    a1_ok = certified and gamma_s > 0 and gamma_f < 0
    a3_ok = certified and gamma_f < 0 and sys.K < -gamma_f
    if gamma is None:
        gamma = default_gamma(sys.K, gamma_f) if gamma_f < 0 else float("nan")

    rho = rho_bar = lip = float("nan")
    contraction_ok = False
    try:
        if not sys.K < -(gamma + gamma_f):
            notes.append("gamma leaves no margin: K >= -(gamma + gamma_f)")
            raise DomainError("no margin")
        rho = contraction_rate(sys.epsilon, sys.K, gamma, gamma_s, gamma_f)
        rho_bar = tracking_rate(sys.epsilon, sys.K, gamma, gamma_s, gamma_f)
        contraction_ok = a3_ok and 0 < rho < 1
        if contraction_ok:
            lip = lipschitz_bound_h(sys.epsilon, sys.K, gamma, gamma_s, gamma_f)
    except (DomainError, ContractionError) as exc:
        if str(exc) != "no margin":
            notes.append(str(exc))
    if not gs_cert > 0:
        notes.append("S has no certified backward growth bound gamma_s > 0")
    return HypothesisReport(gamma_s, gamma_f, float(gamma), sys.K, sys.epsilon, rho, rho_bar, lip,
                            bool(a1_ok), bool(a3_ok), bool(contraction_ok), certified, tuple(notes))


def estimate_lipschitz(sys: SlowFastSystem, radius: float = 1.0, n: int = 2000, seed: int = 0) -> float:
    """Sampled lower estimate of the joint Lipschitz constant, for diagnostics only."""
    rng = np.random.default_rng(seed)
    x1 = rng.uniform(-radius, radius, (n, sys.n1))
    y1 = rng.uniform(-radius, radius, (n, sys.n2))
    dx = rng.normal(scale=1e-3 * radius, size=(n, sys.n1))
    dy = rng.normal(scale=1e-3 * radius, size=(n, sys.n2))
    best = 0.0
    for i in range(n):
        d = np.abs(dx[i]).sum() + np.abs(dy[i]).sum()
        for g in (sys.g1, sys.g2):
            diff = np.asarray(g(x1[i] + dx[i], y1[i] + dy[i])) - np.asarray(g(x1[i], y1[i]))
            best = max(best, float(np.linalg.norm(diff)) / d)
    return best


def require_contraction(sys: SlowFastSystem, gamma: float | None = None) -> HypothesisReport:
    rep = validate_hypotheses(sys, gamma)
    if not rep.contraction_ok:
        raise ContractionError(f"hypotheses not certified for {sys.name}: {rep.notes}")
    return rep

