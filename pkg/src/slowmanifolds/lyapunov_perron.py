"""Fixed-point construction of random slow manifolds and their expansion.

One discretised Lyapunov-Perron operator covers every variant.  On a
uniform grid ``t_0 = -T < ... < t_N = 0`` and for a slow rate ``a`` and fast
rate ``b``,

    X(t) = exp(a S t) x0 - a int_t^0 exp(a S (t - s)) g1(X, Y + sigma n) ds
    Y(t) = b int_{-T}^t exp(b F (t - s)) g2(X, Y + sigma n) ds

with trapezoidal quadrature evaluated as FFT convolutions against kernels
precomputed once per grid.  The variants are

=========  =====  =======  =============================================
system     a      b        noise ``n``
=========  =====  =======  =============================================
hat        1      1/eps    eta (original time)
tilde      eps    1        xi (fast time)
critical   0      1        xi (slow variable frozen)
=========  =====  =======  =============================================

and the manifold value is ``Y(0)``.  Because the first-order correction is
assembled from the same discrete operators, ``h0 + eps h1`` is the exact
first-order Taylor polynomial in eps of the discrete tilde manifold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.fft import irfft, next_fast_len, rfft
from scipy.linalg import expm

from .convolution import DEFAULT_TOL, StationaryProcess, stationary_eta, stationary_xi, xi_lookback
from .errors import (ContractionError, ConvergenceError, DerivativeError, PartialResultError,
                     SpanError)
from .stable_noise import LevyPath
from .system_model import SlowFastSystem, contraction_rate, validate_hypotheses

KINDS = ("hat_h_eps", "tilde_h_eps", "h0", "h0_plus_eps_h1")


@dataclass(eq=False)
class WeightedPath:
    """A solution on ``(-T, 0]`` with the weight ``exp(-beta t)``."""

    times: np.ndarray
    x: np.ndarray
    y: np.ndarray
    beta: float
    iterations: int = 0
    residuals: list = field(default_factory=list)
    converged: bool = True
    horizon: float = 0.0
    rho: float = float("nan")

    def weighted_norm(self, other: "WeightedPath | None" = None) -> float:
        dx, dy = (self.x, self.y) if other is None else (self.x - other.x, self.y - other.y)
        w = np.exp(-self.beta * self.times)
        return float(np.max(w * np.linalg.norm(dx, axis=1)) + np.max(w * np.linalg.norm(dy, axis=1)))

    @property
    def values(self) -> np.ndarray:
        return np.hstack([self.x, self.y])

    @property
    def ratios(self) -> np.ndarray:
        r = np.asarray(self.residuals)
        return r[1:] / r[:-1] if len(r) > 1 else np.empty(0)


@dataclass(frozen=True)
class ExpansionResult:
    h0: np.ndarray
    h1: np.ndarray
    epsilon: float
    composed: np.ndarray
    residual_estimate: float | None = None

    @classmethod
    def build(cls, h0, h1, epsilon, residual_estimate=None):
        h0 = np.asarray(h0, dtype=float)
        h1 = np.asarray(h1, dtype=float)
        return cls(h0, h1, float(epsilon), h0 + epsilon * h1, residual_estimate)


@dataclass(eq=False)
class ManifoldGraph:
    x0_grid: np.ndarray
    h_values: np.ndarray
    kind: str
    epsilon: float
    omega_ref: dict = field(default_factory=dict)
    lip_ratio: float = float("nan")
    lip_bound: float = float("nan")
    info: dict = field(default_factory=dict)

    def to_csv(self, dest) -> None:
        n1 = self.x0_grid.shape[1]
        n2 = self.h_values.shape[1]
        header = [f"x0_{i + 1}" for i in range(n1)] + [f"h_{j + 1}" for j in range(n2)]
        rows = np.hstack([self.x0_grid, self.h_values])
        with open(dest, "w") as fh:
            fh.write(",".join(header) + "\n")
            for r in rows:
                fh.write(",".join(f"{v:.17g}" for v in r) + "\n")

    def sidecar(self) -> dict:
        d = {"kind": self.kind, "epsilon": self.epsilon, "lip_ratio": self.lip_ratio,
             "lip_bound": self.lip_bound}
        d.update(self.omega_ref)
        d.update(self.info)
        return d


# -- discretised operator -----------------------------------------------------

@lru_cache(maxsize=64)
def _kernels(S_key, F_key, n1, n2, a, b, dt, N):
    S = np.frombuffer(S_key).reshape(n1, n1)
    F = np.frombuffer(F_key).reshape(n2, n2)
    j = np.arange(N + 1) * dt
    nfft = next_fast_len(2 * (N + 1), real=True)
    Ef = b * expm(b * F[None] * j[:, None, None])
    Ef_hat = rfft(Ef, nfft, axis=0)
    if a != 0:
        Es = expm(-a * S[None] * j[:, None, None])
        Es_hat = rfft(a * Es, nfft, axis=0)
    else:
        Es = Es_hat = None
    return nfft, Ef, Ef_hat, Es, Es_hat


class LPOperator:
    """Discrete Lyapunov-Perron operator on ``N + 1`` grid points ending at 0."""

    def __init__(self, S, F, a: float, b: float, dt: float, N: int):
        S = np.ascontiguousarray(S, dtype=float)
        F = np.ascontiguousarray(F, dtype=float)
        self.n1, self.n2 = S.shape[0], F.shape[0]
        self.a, self.b, self.dt, self.N = float(a), float(b), float(dt), int(N)
        self.times = dt * np.arange(-N, 1)
        (self.nfft, self.Ef, self.Ef_hat, self.Es, self.Es_hat) = _kernels(
            S.tobytes(), F.tobytes(), self.n1, self.n2, self.a, self.b, self.dt, self.N)

    def _conv(self, K_hat, K, G):
        # trapezoid rule: dt * (sum_j K_j G_{k-j} - K_0 G_k / 2 - K_k G_0 / 2)
        G_hat = rfft(G, self.nfft, axis=0)
        full = irfft(np.einsum("fij,fj->fi", K_hat, G_hat), self.nfft, axis=0)[:self.N + 1]
        full -= 0.5 * G @ K[0].T
        full -= 0.5 * np.einsum("kij,j->ki", K, G[0])
        return self.dt * full

    def fast(self, G2: np.ndarray) -> np.ndarray:
        return self._conv(self.Ef_hat, self.Ef, G2)

    def slow_free(self, x0) -> np.ndarray:
        x0 = np.asarray(x0, dtype=float)
        if self.a == 0:
            return np.broadcast_to(x0, (self.N + 1, self.n1)).copy()
        # exp(a S t_k) x0 with t_k = -m dt, m = N - k
        return (self.Es @ x0)[::-1]

    def slow(self, x0, G1: np.ndarray) -> np.ndarray:
        free = self.slow_free(x0)
        if self.a == 0:
            return free
        R = G1[::-1]
        integral = self._conv(self.Es_hat, self.a * self.Es, R)[::-1]
        return free - integral

    def fast_at_zero(self, G2: np.ndarray) -> np.ndarray:
        """Direct trapezoid sum for ``Y(0)``; an FFT-free second route."""
        w = np.full(self.N + 1, self.dt)
        w[0] = w[-1] = 0.5 * self.dt
        return np.einsum("k,kij,kj->i", w, self.Ef[::-1], G2)


def default_horizon(sys: SlowFastSystem, system: str, tol: float = DEFAULT_TOL,
                    gamma: float | None = None, epsilon: float | None = None) -> float:
    """Backward horizon with weight margin ``exp((gamma + gamma_f) b T) = tol``."""
    rep = validate_hypotheses(sys, gamma)
    eps = sys.epsilon if epsilon is None else epsilon
    b = 1.0 / eps if system == "hat" else 1.0
    return math.log(1.0 / tol) / (-(rep.gamma + rep.gamma_f) * b)


def _rates(sys, system, epsilon):
    eps = sys.epsilon if epsilon is None else float(epsilon)
    if system == "hat":
        return 1.0, 1.0 / eps, eps
    if system == "tilde":
        return eps, 1.0, eps
    if system == "critical":
        return 0.0, 1.0, 0.0
    raise ValueError(f"unknown system variant {system!r}")


def _noise_values(noise: StationaryProcess | None, times: np.ndarray, n2: int) -> np.ndarray:
    if noise is None:
        return np.zeros((len(times), n2))
    dt = times[1] - times[0]
    if abs(noise.dt - dt) > 1e-9 * dt:
        raise SpanError(f"noise step {noise.dt} differs from solver step {dt}")
    k0 = int(round((times[0] - noise.times[0]) / dt))
    if k0 < 0 or k0 + len(times) > len(noise.times) or abs(noise.times[k0 + len(times) - 1]) > 1e-9:
        raise SpanError(f"noise sampled on [{noise.times[0]}, {noise.times[-1]}] does not cover "
                        f"[{times[0]}, 0] ending at 0")
    return noise.values[k0:k0 + len(times)]


def solve_backward_fixed_point(sys: SlowFastSystem, noise_proc: StationaryProcess | None, x0,
                               T: float | None = None, dt: float | None = None, tol: float = 1e-10,
                               max_iter: int = 500, *, system: str = "hat",
                               epsilon: float | None = None, gamma: float | None = None,
                               check: bool = True, sigma: float | None = None) -> WeightedPath:
    """Picard iteration of the Lyapunov-Perron operator from the ``g = 0`` solution.

    Stops once successive iterates differ by less than ``tol`` in the weighted
    sup-norm.  The grid defaults to the noise samples on ``[-T, 0]``.

    Raises
    ------
    ContractionError
        The hypotheses do not certify ``0 < rho(eps) < 1``.
    ConvergenceError
        ``max_iter`` iterations without reaching ``tol``.
    """
    a, b, eps = _rates(sys, system, epsilon)
    rep = validate_hypotheses(sys.with_(epsilon=max(eps, 1e-300)), gamma)
    rho = contraction_rate(eps, sys.K, rep.gamma, rep.gamma_s, rep.gamma_f) if rep.a3_ok else float("nan")
    if check and not (rep.a3_ok and 0 < rho < 1):
        raise ContractionError(f"contraction not certified (rho={rho}, notes={rep.notes})")
    if T is None:
        T = math.log(1.0 / DEFAULT_TOL) / (-(rep.gamma + rep.gamma_f) * b)
        if noise_proc is not None:
            T = min(T, -noise_proc.times[0])
    if dt is None:
        if noise_proc is None:
            raise ValueError("dt required without a noise process")
        dt = noise_proc.dt
    N = int(round(T / dt))
    op = LPOperator(sys.S, sys.F, a, b, dt, N)
    sig = sys.sigma if sigma is None else sigma
    noise = sig * _noise_values(noise_proc, op.times, sys.n2)
    beta = -rep.gamma * b
    weight = np.exp(-beta * op.times)
    x0 = np.asarray(x0, dtype=float).reshape(sys.n1)

    X = op.slow_free(x0)
    Y = np.zeros((N + 1, sys.n2))
    residuals = []
    converged = False
    for it in range(1, max_iter + 1):
        Yn = Y + noise
        Xn = op.slow(x0, sys.drift1(X, Yn)) if a != 0 else X
        Ynew = op.fast(sys.drift2(X, Yn))
        res = float(np.max(weight * np.linalg.norm(Xn - X, axis=1))
                    + np.max(weight * np.linalg.norm(Ynew - Y, axis=1)))
        X, Y = Xn, Ynew
        residuals.append(res)
        if res < tol:
            converged = True
            break
    out = WeightedPath(op.times, X, Y, beta, it, residuals, converged, T, rho)
    # kept for manifold_point, the first-order terms and apply_operator
    out._op, out._noise, out._x0 = op, noise, x0
    if not converged:
        raise ConvergenceError(f"no convergence after {max_iter} iterations (residual {residuals[-1]:.3g})",
                               residual=residuals[-1], iterations=max_iter)
    return out


def apply_operator(sys: SlowFastSystem, sol: WeightedPath) -> WeightedPath:
    """One more application of the operator that produced ``sol``."""
    op = sol._op
    Yn = sol.y + sol._noise
    X = op.slow(sol._x0, sys.drift1(sol.x, Yn)) if op.a != 0 else sol.x
    Y = op.fast(sys.drift2(sol.x, Yn))
    return WeightedPath(sol.times, X, Y, sol.beta, horizon=sol.horizon, rho=sol.rho)


def _value_at_zero(sys, sol: WeightedPath) -> np.ndarray:
    op = sol._op
    G2 = sys.drift2(sol.x, sol.y + sol._noise)
    direct = op.fast_at_zero(G2)
    if not np.allclose(direct, sol.y[-1], rtol=0, atol=max(10 * sol.residuals[-1], 1e-11)):
        raise ConvergenceError("manifold value disagrees with the fixed point at t=0",
                               residual=float(np.max(np.abs(direct - sol.y[-1]))))
    return direct


def manifold_point(sys: SlowFastSystem, noise_proc, x0, *, system: str = "hat", **params) -> np.ndarray:
    """Manifold value over ``x0``: the fast component of the fixed point at ``t = 0``."""
    sol = solve_backward_fixed_point(sys, noise_proc, x0, system=system, **params)
    return _value_at_zero(sys, sol)


def manifold_graph(sys: SlowFastSystem, noise_proc, x0_grid, *, system: str = "hat",
                   **params) -> ManifoldGraph:
    """Evaluate the manifold over a grid of slow points (rows of ``x0_grid``)."""
    grid = np.asarray(x0_grid, dtype=float)
    if grid.ndim == 1:
        grid = grid[:, None]
    vals = np.full((len(grid), sys.n2), np.nan)
    failures = []
    info = {}
    for i, x0 in enumerate(grid):
        try:
            sol = solve_backward_fixed_point(sys, noise_proc, x0, system=system, **params)
            vals[i] = _value_at_zero(sys, sol)
            info.setdefault("iterations", []).append(sol.iterations)
            info["T"] = sol.horizon
        except (ConvergenceError, SpanError) as exc:
            failures.append((i, str(exc)))
    kind = {"hat": "hat_h_eps", "tilde": "tilde_h_eps", "critical": "h0"}[system]
    eps = 0.0 if system == "critical" else (params.get("epsilon") or sys.epsilon)
    graph = ManifoldGraph(grid, vals, kind, eps,
                          {"seed": getattr(noise_proc, "seed", None)}, info=info)
    graph.lip_ratio = empirical_lipschitz(grid, vals)
    rep = validate_hypotheses(sys.with_(epsilon=max(eps, 1e-300)), params.get("gamma"))
    if rep.a3_ok:
        rho = contraction_rate(eps, sys.K, rep.gamma, rep.gamma_s, rep.gamma_f)
        graph.lip_bound = -sys.K / (rep.gamma + rep.gamma_f) / (1 - rho) if rho < 1 else float("inf")
    if failures:
        raise PartialResultError(f"{len(failures)} grid points failed", failures, graph)
    return graph


def empirical_lipschitz(grid, vals) -> float:
    if len(grid) < 2:
        return 0.0
    dh = np.linalg.norm(np.diff(vals, axis=0), axis=1)
    dx = np.linalg.norm(np.diff(grid, axis=0), axis=1)
    ok = dx > 0
    return float(np.max(dh[ok] / dx[ok])) if np.any(ok) else 0.0


# -- critical manifold and first-order correction ----------------------------

def critical_y0(sys: SlowFastSystem, xi: StationaryProcess | None, x0, T=None, dt=None,
                tol: float = 1e-10, **kw) -> WeightedPath:
    """Bounded solution on ``(-T, 0]`` of the fast equation with the slow variable frozen."""
    return solve_backward_fixed_point(sys, xi, x0, T, dt, tol, system="critical", **kw)


def critical_h0(sys: SlowFastSystem, xi, x0, **params) -> np.ndarray:
    sol = critical_y0(sys, xi, x0, **params)
    return _value_at_zero(sys, sol)


def _jacobian(fn, analytic, x, y, wrt: str, n_out: int):
    """Batched Jacobian of ``fn`` at rows of x, y; shape (M, n_out, n_in)."""
    M = x.shape[0]
    n_in = x.shape[1] if wrt == "x" else y.shape[1]
    if analytic is not None:
        J = np.asarray(analytic(x.T, y.T), dtype=float)
        J = np.broadcast_to(J.reshape(n_out, n_in, -1), (n_out, n_in, M))
        return np.moveaxis(J, -1, 0)
    base = x if wrt == "x" else y
    J = np.empty((M, n_out, n_in))
    for j in range(n_in):
        h = 1e-6 * np.maximum(1.0, np.abs(base[:, j]))
        plus = base.copy()
        minus = base.copy()
        plus[:, j] += h
        minus[:, j] -= h
        if wrt == "x":
            diff = fn(plus, y) - fn(minus, y)
        else:
            diff = fn(x, plus) - fn(x, minus)
        J[:, :, j] = diff / (2 * h[:, None])
    if not np.all(np.isfinite(J)):
        raise DerivativeError("finite-difference Jacobian is not finite")
    return J


def first_order_x1(sys: SlowFastSystem, xi, x0, y0_path: WeightedPath, sigma: float | None = None) -> np.ndarray:
    """Slow first-order term ``S x0 t + int_0^t g1(x0, y0 + sigma xi) ds`` on the y0 grid."""
    times = y0_path.times
    sig = sys.sigma if sigma is None else sigma
    x0 = np.asarray(x0, dtype=float).reshape(sys.n1)
    noise = sig * _noise_values(xi, times, sys.n2)
    X = np.broadcast_to(x0, (len(times), sys.n1))
    G1 = sys.drift1(X, y0_path.y + noise)
    dt = times[1] - times[0]
    # integral over [t, 0] by the trapezoid rule, accumulated from t = 0 backwards
    rev = G1[::-1]
    cum = np.zeros_like(rev)
    cum[1:] = np.cumsum(0.5 * dt * (rev[1:] + rev[:-1]), axis=0)
    return times[:, None] * (sys.S @ x0)[None, :] - cum[::-1]


def first_order_y1_h1(sys: SlowFastSystem, xi, x0, y0_path: WeightedPath, x1: np.ndarray,
                      tol: float = 1e-12, max_iter: int = 500, sigma: float | None = None):
    """Fast first-order term and ``h1 = y1(0)``.

    ``y1`` is the bounded solution of the linear variational equation,
    ``y1 = Conv[g2_x x1 + g2_y y1]``.  With ``g2_y = 0`` a single quadrature
    suffices; otherwise the linear fixed point is iterated.
    """
    times = y0_path.times
    op = y0_path._op
    sig = sys.sigma if sigma is None else sigma
    noise = sig * _noise_values(xi, times, sys.n2)
    X = np.broadcast_to(np.asarray(x0, dtype=float).reshape(sys.n1), (len(times), sys.n1)).copy()
    Yn = y0_path.y + noise
    Jx = _jacobian(sys.drift2, sys.g2_x, X, Yn, "x", sys.n2)
    Jy = _jacobian(sys.drift2, sys.g2_y, X, Yn, "y", sys.n2)
    forcing = np.einsum("kij,kj->ki", Jx, x1)
    y1 = op.fast(forcing)
    if np.any(Jy):
        for _ in range(max_iter):
            new = op.fast(forcing + np.einsum("kij,kj->ki", Jy, y1))
            delta = float(np.max(np.linalg.norm(new - y1, axis=1)))
            y1 = new
            if delta < tol:
                break
        else:
            raise ConvergenceError("first-order fast correction did not converge", residual=delta)
    h1 = op.fast_at_zero(forcing + np.einsum("kij,kj->ki", Jy, y1))
    return y1, h1


def expansion_h(sys: SlowFastSystem, xi, x0, epsilon: float | None = None, **params) -> ExpansionResult:
    """``h0 + eps h1`` over ``x0`` for one noise window."""
    eps = sys.epsilon if epsilon is None else epsilon
    y0 = critical_y0(sys, xi, x0, **params)
    h0 = _value_at_zero(sys, y0)
    x1 = first_order_x1(sys, xi, x0, y0, sigma=params.get("sigma"))
    _, h1 = first_order_y1_h1(sys, xi, x0, y0, x1, sigma=params.get("sigma"))
    return ExpansionResult.build(h0, h1, eps)


def expansion_graph(sys: SlowFastSystem, xi, x0_grid, epsilon: float | None = None, **params) -> ManifoldGraph:
    grid = np.asarray(x0_grid, dtype=float)
    if grid.ndim == 1:
        grid = grid[:, None]
    eps = sys.epsilon if epsilon is None else epsilon
    vals = np.array([expansion_h(sys, xi, x0, eps, **params).composed for x0 in grid])
    g = ManifoldGraph(grid, vals, "h0_plus_eps_h1" if eps else "h0", eps,
                      {"seed": getattr(xi, "seed", None)})
    g.lip_ratio = empirical_lipschitz(grid, vals)
    return g


# -- noise plumbing ----------------------------------------------------------

def noise_for(sys: SlowFastSystem, path: LevyPath, system: str, T: float, tol: float = DEFAULT_TOL,
              t_end: float = 0.0) -> StationaryProcess:
    """Noise samples on ``[t_end - T, t_end]`` rebased to ``[-T, 0]``."""
    dt = path.dt
    N = int(round(T / dt))
    grid = t_end + dt * np.arange(-N, 1)
    if system == "hat":
        proc = stationary_eta(sys.F, sys.epsilon, sys.alpha, path, grid, tol)
    else:
        proc = stationary_xi(sys.F, path, grid, tol)
    return StationaryProcess(dt * np.arange(-N, 1), proc.values, proc.kind, proc.epsilon,
                             proc.truncation, proc.tail_bound, proc.seed)


def path_span_for(sys: SlowFastSystem, system: str, T: float, dt: float,
                  tol: float = DEFAULT_TOL) -> float:
    """Negative path span, a whole number of ``dt`` cells, needed for noise on ``[-T, 0]``."""
    eps = sys.epsilon if system == "hat" else 1.0
    return dt * (math.ceil((T + xi_lookback(sys.F, tol, eps)) / dt) + 1)


class PathwiseExpansion:
    """``h(t, x) = h0 + eps h1 + sigma eta(t)`` along one noise realisation.

    ``eta`` is sampled in original time; the expansion at time ``t`` uses
    the window ``s -> eta(t + eps s)``, which is the rescaled-time noise of
    the shifted realisation.  Returned values are in original coordinates.
    """

    def __init__(self, sys: SlowFastSystem, eta: StationaryProcess, horizon: float,
                 step: int = 1, order: int = 1, transformed: bool = False):
        self.sys = sys
        self.eta = eta
        self.horizon = horizon
        self.step = step
        self.order = order
        self.transformed = transformed

    def __call__(self, t, x):
        win = self.eta.window(t, self.horizon, self.step, time_scale=self.sys.epsilon)
        res = expansion_h(self.sys, win, x, self.sys.epsilon)
        h = res.composed if self.order >= 1 else res.h0
        if self.transformed:
            return h
        return h + self.sys.sigma * self.eta.at(t)
