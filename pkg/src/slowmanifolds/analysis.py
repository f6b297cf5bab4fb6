"""Tracking-rate fits, two-sample KS tests and eps-convergence studies."""

from __future__ import annotations

import csv
import json
import math
import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .errors import ConfigurationError, ConvergenceError, DivergenceError, DomainError, PartialResultError
from .integrators import Trajectory
from .lyapunov_perron import expansion_h, manifold_point, noise_for, path_span_for
from .stable_noise import generate_path
from .system_model import SlowFastSystem, contraction_rate, validate_hypotheses

LOG_FLOOR = 1e-30
MIN_KS_SAMPLES = 50


def to_jsonable(obj):
    """Strict JSON values: non-finite floats become null, numpy scalars become Python."""
    if isinstance(obj, dict):
        return {k: to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


# -- exponential tracking ------------------------------------------------------

@dataclass
class DecayFit:
    rate: float
    intercept: float
    fit_window: tuple[float, float]
    r_squared: float
    degenerate: bool = False
    clipped: int = 0
    bound_checked: int = 0
    bound_violations: int = 0
    bound_max_ratio: float = float("nan")

    @property
    def bound_ok(self) -> bool:
        return self.bound_violations == 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fit_window"] = list(self.fit_window)
        d["bound_ok"] = self.bound_ok
        return d

    def to_json(self, dest) -> None:
        with open(dest, "w") as fh:
            json.dump(to_jsonable(self.to_dict()), fh, indent=2, allow_nan=False)

    def to_csv(self, dest) -> None:
        d = self.to_dict()
        d["fit_window"] = f"{self.fit_window[0]};{self.fit_window[1]}"
        with open(dest, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(d))
            w.writeheader()
            w.writerow(d)


def tracking_decay(traj_a: Trajectory, traj_b: Trajectory, window=None, sys: SlowFastSystem | None = None,
                   gamma: float | None = None, slack: float = 0.05, bound_window=None) -> DecayFit:
    """Least-squares fit of ``log |z_a(t) - z_b(t)|`` against ``t``.

    The default window skips the first 5% of the span.  With ``sys`` given,
    every sample in ``bound_window`` (default: the fit window) is checked
    against ``|D(t)| <= exp(-gamma t / eps) |D(0)| / (1 - rho(eps))`` with
    relative ``slack``.
    """
    if traj_a.times.shape != traj_b.times.shape or not np.allclose(traj_a.times, traj_b.times):
        raise ConfigurationError("trajectories are not on the same grid")
    t = traj_a.times
    delta = np.linalg.norm(traj_a.states - traj_b.states, axis=1)
    t0, t1 = t[0], t[-1]
    if window is None:
        window = (t0 + 0.05 * (t1 - t0), t1)
    lo, hi = map(float, window)
    if lo < t0 - 1e-12 or hi > t1 + 1e-12 or not lo < hi:
        raise ConfigurationError(f"fit window {window} outside trajectory span [{t0}, {t1}]")
    sel = (t >= lo - 1e-12) & (t <= hi + 1e-12)
    d = delta[sel]
    clipped = int(np.sum(d < LOG_FLOOR))
    logd = np.log(np.maximum(d, LOG_FLOOR))
    degenerate = bool(np.all(d < LOG_FLOOR))
    if degenerate or np.ptp(logd) == 0:
        fit = DecayFit(0.0, float(logd[0]), (lo, hi), 0.0, degenerate, clipped)
    else:
        reg = stats.linregress(t[sel], logd)
        fit = DecayFit(float(reg.slope), float(reg.intercept), (lo, hi), float(reg.rvalue ** 2),
                       False, clipped)
    if sys is not None:
        rep = validate_hypotheses(sys, gamma)
        rho = contraction_rate(sys.epsilon, sys.K, rep.gamma, rep.gamma_s, rep.gamma_f)
        blo, bhi = bound_window if bound_window is not None else (lo, hi)
        bsel = (t >= blo - 1e-12) & (t <= bhi + 1e-12)
        bound = np.exp(-rep.gamma * (t[bsel] - t0) / sys.epsilon) * delta[0] / (1.0 - rho)
        ratio = delta[bsel] / np.maximum(bound, LOG_FLOOR)
        fit.bound_checked = int(bsel.sum())
        fit.bound_violations = int(np.sum(ratio > 1.0 + slack))
        fit.bound_max_ratio = float(ratio.max()) if ratio.size else float("nan")
    return fit


# -- two-sample Kolmogorov-Smirnov ------------------------------------------------

@dataclass(frozen=True)
class KSResult:
    statistic: float
    critical: float
    level: float
    passed: bool
    n_a: int
    n_b: int
    per_coordinate: tuple = ()


def ks_critical(n_a: int, n_b: int, level: float = 0.01) -> float:
    """Asymptotic critical value ``sqrt(-ln(level/2)/2) sqrt((n+m)/(n m))``."""
    return math.sqrt(-math.log(level / 2.0) / 2.0) * math.sqrt((n_a + n_b) / (n_a * n_b))


def ks_statistic(a, b) -> float:
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / len(a)
    fb = np.searchsorted(b, grid, side="right") / len(b)
    return float(np.max(np.abs(fa - fb)))


def ks_distance(samples_a, samples_b, level: float = 0.01) -> KSResult:
    """Two-sample KS test; vector samples are tested per coordinate with Bonferroni."""
    a = np.asarray(samples_a, dtype=float)
    b = np.asarray(samples_b, dtype=float)
    if a.shape[0] < MIN_KS_SAMPLES or b.shape[0] < MIN_KS_SAMPLES:
        raise DomainError(f"KS test needs at least {MIN_KS_SAMPLES} samples per side")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise DomainError("samples must be finite")
    if a.ndim == 1 and b.ndim == 1:
        crit = ks_critical(len(a), len(b), level)
        d = ks_statistic(a, b)
        return KSResult(d, crit, level, d <= crit, len(a), len(b))
    a = a.reshape(a.shape[0], -1)
    b = b.reshape(b.shape[0], -1)
    if a.shape[1] != b.shape[1]:
        raise DomainError("sample dimensions differ")
    lev = level / a.shape[1]
    crit = ks_critical(len(a), len(b), lev)
    ds = tuple(ks_statistic(a[:, j], b[:, j]) for j in range(a.shape[1]))
    return KSResult(max(ds), crit, level, all(d <= crit for d in ds), len(a), len(b), ds)


# -- eps-convergence studies -----------------------------------------------------

@dataclass
class ConvergenceTable:
    kind: str
    epsilons: np.ndarray
    distances: np.ndarray
    n_realizations: np.ndarray
    slope: float = float("nan")
    slope_ci: tuple[float, float] = (float("nan"), float("nan"))
    intercept: float = float("nan")
    excluded: int = 0
    x0: list = field(default_factory=list)
    seeds: list = field(default_factory=list)

    @property
    def rows(self):
        return list(zip(self.epsilons.tolist(), self.distances.tolist(), self.n_realizations.tolist()))

    @property
    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.distances) < 0))

    def fit(self, confidence: float = 0.95) -> "ConvergenceTable":
        ok = self.distances > 0
        if ok.sum() >= 2:
            reg = stats.linregress(np.log(self.epsilons[ok]), np.log(self.distances[ok]))
            self.slope, self.intercept = float(reg.slope), float(reg.intercept)
            n = int(ok.sum())
            if n > 2:
                q = stats.t.ppf(0.5 + confidence / 2, n - 2) * reg.stderr
                self.slope_ci = (float(self.slope - q), float(self.slope + q))
            else:
                self.slope_ci = (self.slope, self.slope)
        return self

    def to_dict(self) -> dict:
        return {"kind": self.kind, "rows": [{"epsilon": e, "distance": d, "n_realizations": n}
                                            for e, d, n in self.rows],
                "slope": self.slope, "slope_ci": list(self.slope_ci), "intercept": self.intercept,
                "excluded": self.excluded, "x0": list(self.x0), "seeds": list(self.seeds)}

    def to_json(self, dest) -> None:
        with open(dest, "w") as fh:
            json.dump(to_jsonable(self.to_dict()), fh, indent=2, allow_nan=False)

    def to_csv(self, dest) -> None:
        with open(dest, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epsilon", "distance", "n_realizations"])
            for e, d, n in self.rows:
                w.writerow([f"{e:.17g}", f"{d:.17g}", n])


@dataclass(frozen=True)
class StudyParams:
    T: float = 25.0
    dt: float = 5e-3
    tol: float = 1e-10
    lookback_tol: float = 1e-8
    max_iter: int = 500


def coupled_realization(sys: SlowFastSystem, x0, epsilons, seed: int, params: StudyParams = StudyParams()):
    """Pathwise ``|h~eps - h0|`` and ``|h~eps - h0 - eps h1|`` on one xi path, per eps."""
    span = path_span_for(sys, "tilde", params.T, params.dt, params.lookback_tol)
    path = generate_path(sys.noise, -span, 0.0, params.dt, seed)
    xi = noise_for(sys, path, "tilde", params.T, params.lookback_tol)
    kw = dict(T=params.T, dt=params.dt, tol=params.tol, max_iter=params.max_iter)
    exp = expansion_h(sys, xi, x0, 0.0, **kw)
    d0 = np.empty(len(epsilons))
    d1 = np.empty(len(epsilons))
    for i, eps in enumerate(epsilons):
        s = sys.with_(epsilon=float(eps))
        ht = manifold_point(s, xi, x0, system="tilde", epsilon=float(eps), **kw)
        d0[i] = np.linalg.norm(ht - exp.h0)
        d1[i] = np.linalg.norm(ht - exp.h0 - eps * exp.h1)
    return d0, d1


_CTX: dict = {}


def _run_one(seed):
    c = _CTX
    try:
        return seed, coupled_realization(c["sys"], c["x0"], c["eps"], seed, c["params"])
    except (ConvergenceError, DivergenceError) as exc:
        return seed, exc


def _map_seeds(seeds, workers):
    if workers and workers > 1 and "fork" in mp.get_all_start_methods():
        with ProcessPoolExecutor(workers, mp_context=mp.get_context("fork")) as pool:
            out = list(pool.map(_run_one, seeds, chunksize=max(1, len(seeds) // (4 * workers))))
    else:
        out = [_run_one(s) for s in seeds]
    return sorted(out, key=lambda r: r[0])


def coupled_study(sys: SlowFastSystem, x0, epsilons, n_real: int, master_seed: int = 0,
                  params: StudyParams = StudyParams(), workers: int | None = None,
                  max_excluded: float = 0.1) -> tuple[ConvergenceTable, ConvergenceTable]:
    """Both eps-studies on the same coupled realizations (seeds ``master + i``).

    Realizations whose solves fail are excluded and counted; more than
    ``max_excluded`` of them fails the study.
    """
    eps = np.array(sorted(map(float, epsilons), reverse=True))
    if np.any(eps <= 0) or len(np.unique(eps)) != len(eps):
        raise ConfigurationError("epsilons must be positive and distinct")
    for e in eps:
        rep = validate_hypotheses(sys.with_(epsilon=e))
        if not rep.contraction_ok:
            raise ConfigurationError(f"eps={e} is not certified: {rep.notes}")
    x0 = np.asarray(x0, dtype=float).reshape(sys.n1)
    seeds = [master_seed + i for i in range(n_real)]
    _CTX.update(sys=sys, x0=x0, eps=eps, params=params)
    try:
        results = _map_seeds(seeds, workers)
    finally:
        _CTX.clear()
    good = [r for _, r in results if not isinstance(r, Exception)]
    excluded = n_real - len(good)
    tables = []
    for k, kind in enumerate(("h0_distance", "h1_residual")):
        vals = np.array([r[k] for r in good]) if good else np.full((0, len(eps)), np.nan)
        tab = ConvergenceTable(kind, eps, vals.mean(axis=0) if good else np.full(len(eps), np.nan),
                               np.full(len(eps), len(good)), excluded=excluded, x0=x0.tolist(),
                               seeds=seeds)
        tables.append(tab.fit())
    if excluded > max_excluded * n_real:
        raise PartialResultError(f"{excluded} of {n_real} realizations failed", partial=tuple(tables))
    return tables[0], tables[1]


def convergence_study_h0(sys, x0, epsilons, n_real, master_seed=0, params=StudyParams(),
                         workers=None) -> ConvergenceTable:
    """Mean pathwise ``|h~eps - h0|`` against eps with a log-log slope."""
    return coupled_study(sys, x0, epsilons, n_real, master_seed, params, workers)[0]


def residual_study_h1(sys, x0, epsilons, n_real, master_seed=0, params=StudyParams(),
                      workers=None) -> ConvergenceTable:
    """Mean pathwise ``|h~eps - h0 - eps h1|`` against eps with a log-log slope."""
    return coupled_study(sys, x0, epsilons, n_real, master_seed, params, workers)[1]
