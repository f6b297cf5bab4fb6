"""Executable checks of the library's quantitative claims.

Every check returns a :class:`CheckResult`; :func:`run_suite` collects them
into a JSON-ready report.  ``scale`` shrinks sample sizes for quick runs;
``scale=1`` is the full desk-scale setting.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass

import numpy as np
from scipy import integrate

from .analysis import StudyParams, coupled_study, ks_distance, tracking_decay
from .convolution import stationary_eta, stationary_xi, xi_lookback
from .examples import example1, example1_h0, example2, example2_h0, example3, example3_h0
from .integrators import integrate_sde, integrate_transformed
from .lyapunov_perron import (critical_h0, default_horizon, expansion_h, manifold_point,
                              noise_for, path_span_for, solve_backward_fixed_point)
from .stable_noise import StableSpec, generate_path
from .system_model import SlowFastSystem, validate_hypotheses


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: object = None
    threshold: object = None
    detail: str = ""
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: value={_fmt(self.value)} threshold={_fmt(self.threshold)} {self.detail}".rstrip()


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


def _timed(fn):
    def wrapper(*args, **kw):
        t = time.perf_counter()
        res = fn(*args, **kw)
        res.seconds = time.perf_counter() - t
        return res
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _xi_window(sys, T, dt, seed, tol=1e-8):
    path = generate_path(sys.noise, -path_span_for(sys, "tilde", T, dt, tol), 0.0, dt, seed)
    return noise_for(sys, path, "tilde", T, tol)


@_timed
def check_critical_example1(seed: int = 0, dt: float = 1e-3) -> CheckResult:
    """h0 = x0^2/6 for the first example, with and without noise."""
    points = [0.0, 0.5, 1.0, 2.0, math.pi]
    worst = 0.0
    for sigma in (0.0, 0.05):
        sys = example1(sigma=sigma)
        T = default_horizon(sys, "critical", 1e-8)
        xi = _xi_window(sys, T, dt, seed)
        for x0 in points:
            h = critical_h0(sys, xi, [x0], T=T, dt=dt)
            worst = max(worst, abs(h[0] - example1_h0(x0)[0]))
    return CheckResult("critical manifold, example 1", worst < 1e-3, worst, 1e-3)


@_timed
def check_critical_examples23(dt: float = 1e-3) -> CheckResult:
    """Closed-form critical manifolds of the second and third examples at sigma = 0."""
    errs = []
    s2 = example2(sigma=0.0)
    errs.append(np.max(np.abs(critical_h0(s2, None, [1.0, 2.0], T=30, dt=dt) - example2_h0([1.0, 2.0]))))
    errs.append(abs(critical_h0(s2, None, [1.0, 2.0], T=30, dt=dt)[0] + 0.2))
    s3 = example3(sigma=0.0)
    for x0 in (0.0, 1.0):
        errs.append(np.max(np.abs(critical_h0(s3, None, [x0], T=30, dt=dt) - example3_h0(x0))))
    worst = float(max(errs))
    return CheckResult("critical manifolds, examples 2 and 3", worst < 1e-3, worst, 1e-3)


@_timed
def check_first_order_oracle(dt: float = 1e-3) -> CheckResult:
    """h1 at x0 = 1, sigma = 0 against an adaptive-quadrature evaluation."""
    x0 = 1.0
    inner = lambda t: t * math.sin(x0 ** 2 / 6.0)  # int_0^t sin(x0^2/6) ds
    outer, _ = integrate.quad(lambda t: math.exp(t) * inner(t), -np.inf, 0.0, epsabs=1e-13)
    oracle = -x0 ** 2 / 3.0 + x0 / 9.0 * outer
    res = expansion_h(example1(sigma=0.0), None, [x0], 0.01, T=30, dt=dt)
    err = abs(res.h1[0] - oracle)
    return CheckResult("first-order correction oracle", err < 1e-4, err, 1e-4,
                       f"h1={res.h1[0]:.7f} oracle={oracle:.7f}")


def random_certified_system(rng: np.random.Generator) -> SlowFastSystem:
    """Scalar system with ``g = K sin/tanh(a x + b y)``, ``|a|, |b| <= 1`` and certified contraction."""
    while True:
        s = rng.uniform(0.1, 2.0)
        f = -rng.uniform(0.5, 2.0)
        K = rng.uniform(0.01, 0.8 * -f)
        eps = rng.uniform(0.01, 0.2)
        a1, b1, a2, b2 = rng.uniform(-1, 1, 4)
        sigma = rng.uniform(0.0, 0.2)
        alpha = rng.uniform(1.2, 2.0)
        sys = SlowFastSystem(
            S=[[s]], F=[[f]],
            g1=lambda x, y, K=K, a=a1, b=b1: K * np.sin(a * x[:1] + b * y[:1]),
            g2=lambda x, y, K=K, a=a2, b=b2: K * np.tanh(a * x[:1] + b * y[:1]),
            K=K, epsilon=eps, sigma=sigma, noise=StableSpec.uniform(alpha, 1), name="random")
        if validate_hypotheses(sys).contraction_ok:
            return sys


@_timed
def check_contraction_observability(n_configs: int = 50, seed: int = 0, tol: float = 1e-10) -> CheckResult:
    """Residual ratios stay below rho + 0.1 and counts match the geometric bound."""
    rng = np.random.default_rng(seed)
    worst_gap = -np.inf
    worst_excess = -np.inf
    for i in range(n_configs):
        sys = random_certified_system(rng)
        rep = validate_hypotheses(sys)
        dt = sys.epsilon / 50
        T = default_horizon(sys, "hat", 1e-8)
        path = generate_path(sys.noise, -path_span_for(sys, "hat", T, dt), 0.0, dt, seed + i)
        eta = noise_for(sys, path, "hat", T)
        x0 = rng.uniform(-2, 2, 1)
        sol = solve_backward_fixed_point(sys, eta, x0, tol=tol)
        rho = rep.rho_eps
        if len(sol.ratios):
            worst_gap = max(worst_gap, float(np.max(sol.ratios)) - rho)
        r0 = sol.residuals[0]
        bound = math.ceil(math.log(tol / r0) / math.log(rho)) if r0 > tol else 1
        worst_excess = max(worst_excess, sol.iterations - bound)
    ok = worst_gap <= 0.1 and worst_excess <= 5
    return CheckResult("contraction observability", ok, [worst_gap, float(worst_excess)], [0.1, 5.0],
                       f"{n_configs} configurations; max(ratio - rho), max(iterations - bound)")


@_timed
def check_tracking(seed: int = 0, dt: float = 1e-4, span: float = 0.05) -> CheckResult:
    """Two orbits differing in y0 by 1 approach each other at the certified rate."""
    sys = example1()
    path = generate_path(sys.noise, 0.0, span, dt, seed)
    a = integrate_sde(sys, path, [1.0, 1.0 / 6.0], (0.0, span), dt)
    b = integrate_sde(sys, path, [1.0, 1.0 / 6.0 + 1.0], (0.0, span), dt)
    fit = tracking_decay(a, b, window=(0.005, 0.05), sys=sys, slack=0.05, bound_window=(0.0, span))
    rep = validate_hypotheses(sys)
    target = -rep.gamma / sys.epsilon * 0.8
    ok = fit.rate <= target and fit.bound_ok
    return CheckResult("exponential tracking", ok, [fit.rate, fit.bound_max_ratio], [target, 1.05],
                       f"bound checked at {fit.bound_checked} samples")


def eta_samples(n: int, epsilon: float, alpha: float, t: float, seed: int, dt_fast: float = 0.01,
                tol: float = 1e-8) -> np.ndarray:
    """``eta(theta_t w)`` over ``n`` independent paths (seeds ``seed + i``), step ``eps dt_fast``."""
    dt = epsilon * dt_fast
    lb = xi_lookback([[-1.0]], tol, epsilon)
    t_min = -dt * math.ceil(max(lb - t, 0.0) / dt + 1)
    spec = StableSpec.uniform(alpha, 1)
    out = np.empty(n)
    for i in range(n):
        p = generate_path(spec, t_min, t, dt, seed + i)
        out[i] = stationary_eta([[-1.0]], epsilon, alpha, p, [t], tol).values[0, 0]
    return out


def xi_samples(n: int, alpha: float, t: float, seed: int, dt: float = 0.01, tol: float = 1e-8) -> np.ndarray:
    lb = xi_lookback([[-1.0]], tol)
    t_min = -dt * math.ceil(max(lb - t, 0.0) / dt + 1)
    spec = StableSpec.uniform(alpha, 1)
    out = np.empty(n)
    for i in range(n):
        p = generate_path(spec, t_min, t, dt, seed + i)
        out[i] = stationary_xi([[-1.0]], p, [t], tol).values[0, 0]
    return out


@_timed
def check_rescaling_law(n: int = 10_000, seed: int = 0) -> CheckResult:
    """eta at time t and xi at time t/eps share one law (independent samples)."""
    eps, alpha, t = 0.01, 1.8, 0.05
    a = eta_samples(n, eps, alpha, t, seed)
    b = xi_samples(n, alpha, t / eps, seed + 10 * n)
    ks = ks_distance(a, b)
    return CheckResult("time-rescaling law equality", ks.passed, ks.statistic, ks.critical)


@_timed
def check_self_similarity(n: int = 10_000, seed: int = 0, c: float = 4.0, dt: float = 0.01) -> CheckResult:
    """L at time c t versus c^(1/alpha) L at time t, for two indices."""
    stats_ = []
    ok = True
    for k, alpha in enumerate((1.5, 1.8)):
        spec = StableSpec.uniform(alpha, 1)
        base = seed + 4 * k * n
        lt = np.array([generate_path(spec, 0.0, 1.0, dt, base + i).value_at(1.0)[0] for i in range(n)])
        lct = np.array([generate_path(spec, 0.0, c, dt, base + n + i).value_at(c)[0] for i in range(n)])
        ks = ks_distance(c ** (1.0 / alpha) * lt, lct)
        stats_.append(ks.statistic)
        ok &= ks.passed
    crit = ks.critical
    return CheckResult("self-similarity", ok, stats_, crit, "alpha = 1.5, 1.8")


STUDY_EPS = (0.2, 0.1, 0.05, 0.025)


_STUDY_CACHE: dict = {}


def _study(n_real, seed, workers):
    # both rate checks read the same coupled realizations
    key = (n_real, seed)
    if key not in _STUDY_CACHE:
        _STUDY_CACHE[key] = coupled_study(example1(), [1.0], STUDY_EPS, n_real, seed, StudyParams(), workers)
    return _STUDY_CACHE[key]


@_timed
def check_h0_rate(n_real: int = 50, seed: int = 0, workers=None) -> CheckResult:
    """Pathwise |h~eps - h0| decays like eps."""
    d0, _ = _study(n_real, seed, workers)
    ok = 0.7 <= d0.slope <= 1.3 and d0.monotone
    return CheckResult("critical-limit rate", ok, d0.slope, [0.7, 1.3],
                       "distances " + ", ".join(f"{d:.3g}" for d in d0.distances))


@_timed
def check_h1_rate(n_real: int = 50, seed: int = 0, workers=None) -> CheckResult:
    """Pathwise |h~eps - h0 - eps h1| decays like eps^2 and beats the zeroth order."""
    d0, d1 = _study(n_real, seed, workers)
    ok = 1.6 <= d1.slope <= 2.4 and bool(np.all(d1.distances < d0.distances))
    return CheckResult("first-order expansion rate", ok, d1.slope, [1.6, 2.4],
                       "residuals " + ", ".join(f"{d:.3g}" for d in d1.distances))


@_timed
def check_conjugacy(seed: int = 0, dt: float = 1e-4, t_end: float = 0.5) -> CheckResult:
    """SDE orbit equals transformed orbit plus (0, sigma eta) on one path."""
    sys = example1()
    lb = xi_lookback(sys.F, 1e-8, sys.epsilon)
    t_min = -dt * math.ceil(lb / dt + 1)
    path = generate_path(sys.noise, t_min, t_end, dt, seed)
    times = dt * np.arange(int(round(t_end / dt)) + 1)
    eta = stationary_eta(sys.F, sys.epsilon, sys.alpha, path, times)
    z0 = np.array([1.0, 0.3])
    full = integrate_sde(sys, path, z0, (0.0, t_end), dt)
    y_hat0 = z0[1] - sys.sigma * eta.values[0, 0]
    tr = integrate_transformed(sys, eta, [z0[0], y_hat0], (0.0, t_end), dt)
    lifted = tr.states.copy()
    lifted[:, 1:] += sys.sigma * eta.values
    err = float(np.max(np.abs(lifted - full.states)))
    return CheckResult("conjugacy", err < 1e-2, err, 1e-2)


@_timed
def check_reduction(seed: int = 0) -> CheckResult:
    """Full and reduced orbits stay close after the transient; examples 2, 3 run cleanly."""
    from .cli import simulate_example
    dist = simulate_example("example1", seed=seed)["distance_after_transient"]
    for name in ("example2", "example3"):
        simulate_example(name, seed=seed)
    return CheckResult("reduced-system tracking", dist < 0.05, dist, 0.05,
                       "examples 2 and 3 completed without divergence")


@_timed
def check_hypothesis_refusal() -> CheckResult:
    """A system with K >= -gamma_f is not certified and the solver refuses to run."""
    from .errors import ContractionError
    sys = example1(K=1.5)
    rep = validate_hypotheses(sys)
    try:
        solve_backward_fixed_point(sys, None, [1.0], T=1.0, dt=1e-3)
        refused = False
    except ContractionError:
        refused = True
    ok = (not rep.a3_ok) and refused
    return CheckResult("fail-closed on violated gap condition", ok, refused, True)


@_timed
def check_law_bridge(n: int = 200, seed: int = 0, x0: float = 1.0) -> CheckResult:
    """Hat manifold driven by eta and tilde manifold driven by xi share one law."""
    sys = example1()
    eps = sys.epsilon
    Th = default_horizon(sys, "hat", 1e-8)
    dth = eps / 100
    Tt = default_horizon(sys, "tilde", 1e-8)
    dtt = 0.01
    hat = np.empty(n)
    tilde = np.empty(n)
    for i in range(n):
        p = generate_path(sys.noise, -path_span_for(sys, "hat", Th, dth), 0.0, dth, seed + i)
        eta = noise_for(sys, p, "hat", Th)
        hat[i] = manifold_point(sys, eta, [x0], system="hat")[0]
        q = generate_path(sys.noise, -path_span_for(sys, "tilde", Tt, dtt), 0.0, dtt, seed + n + i)
        xi = noise_for(sys, q, "tilde", Tt)
        tilde[i] = manifold_point(sys, xi, [x0], system="tilde")[0]
    ks = ks_distance(hat, tilde)
    return CheckResult("hat/tilde manifold law bridge", ks.passed, ks.statistic, ks.critical)


def acceptance_checks(workers=None):
    """The eleven acceptance checks in order, as zero-argument callables."""
    return [
        ("1", check_critical_example1),
        ("2", check_critical_examples23),
        ("3", check_first_order_oracle),
        ("4", check_contraction_observability),
        ("5", check_tracking),
        ("6", check_rescaling_law),
        ("7", check_self_similarity),
        ("8", lambda: check_h0_rate(workers=workers)),
        ("9", lambda: check_h1_rate(workers=workers)),
        ("10", check_conjugacy),
        ("11", check_reduction),
    ]


def run_suite(seed: int = 0, scale: float = 1.0, workers=None, include_extra: bool = True) -> dict:
    """Run every check; sample sizes are multiplied by ``scale`` (minimum 50)."""
    n_ks = max(50, int(10_000 * scale))
    n_real = max(10, int(50 * scale))
    checks = [
        lambda: check_critical_example1(seed),
        check_critical_examples23,
        check_first_order_oracle,
        lambda: check_contraction_observability(max(5, int(50 * scale)), seed),
        lambda: check_tracking(seed),
        lambda: check_rescaling_law(n_ks, seed),
        lambda: check_self_similarity(n_ks, seed),
        lambda: check_h0_rate(n_real, seed, workers),
        lambda: check_h1_rate(n_real, seed, workers),
        lambda: check_conjugacy(seed),
        lambda: check_reduction(seed),
    ]
    if include_extra:
        checks += [check_hypothesis_refusal, lambda: check_law_bridge(max(50, int(200 * scale)), seed)]
    results = [c() for c in checks]
    return {"seed": seed, "scale": scale, "passed": all(r.passed for r in results),
            "checks": [asdict(r) for r in results]}
