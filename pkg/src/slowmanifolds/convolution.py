"""Stationary stochastic convolutions and the random change of variables.

    xi(t)  = int_{-inf}^t exp(F (t - s)) dL_s
    eta(t) = eps**(-1/alpha) int_{-inf}^t exp(F (t - s) / eps) dL_s

The improper integrals are truncated at a lookback ``T_b`` chosen so the
kernel tail ``exp(gamma_f T_b)`` (``exp(gamma_f T_b / eps)`` for eta) is below
``tol``.  Stochastic integrals are left-endpoint sums over path cells: the
cell ``[s, s + dt)`` enters ``xi(t)`` with weight ``exp(F (t - s))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import expm
from scipy.signal import fftconvolve

from .errors import DomainError, ShapeError, SpanError
from .stable_noise import LevyPath
from .system_model import log_norm

DEFAULT_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class StationaryProcess:
    """Grid samples of a stationary convolution driven by one path."""

    times: np.ndarray
    values: np.ndarray
    kind: str
    epsilon: float = 1.0
    truncation: float = 0.0
    tail_bound: float = 0.0
    seed: int | None = None

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def at(self, t: float) -> np.ndarray:
        k = int(round((t - self.times[0]) / self.dt)) if len(self.times) > 1 else 0
        if not 0 <= k < len(self.times) or abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise SpanError(f"time {t} not sampled")
        return self.values[k]

    def window(self, t: float, horizon: float, step: int = 1, time_scale: float = 1.0) -> "StationaryProcess":
        """Samples at ``t + time_scale * s`` for ``s`` in ``[-horizon, 0]``, rebased to ``s``.

        ``step`` subsamples the grid.  With ``time_scale = eps`` this turns
        ``eta`` sampled in original time into the noise seen by the rescaled
        system, i.e. the path of ``s -> eta(theta_{t + eps s} w)``.
        """
        dt = self.dt
        k_end = int(round((t - self.times[0]) / dt))
        n = int(round(horizon * time_scale / (dt * step)))
        k_start = k_end - n * step
        if k_start < 0 or k_end >= len(self.times):
            raise SpanError(f"window [{t - horizon * time_scale}, {t}] exceeds sampled range "
                            f"[{self.times[0]}, {self.times[-1]}]")
        vals = self.values[k_start:k_end + 1:step]
        rel = (np.arange(-n, 1) * step * dt) / time_scale
        return replace(self, times=rel, values=vals)


def _lookback(F: np.ndarray, tol: float, rate: float) -> tuple[float, float]:
    gf = log_norm(F)
    if not gf < 0:
        raise DomainError(f"F is not certified stable (log norm {gf:.3g} >= 0)")
    T_b = math.log(tol) / (gf * rate)
    return T_b, gf


def _convolve_cells(path: LevyPath, kernel_matrix: np.ndarray, scale: np.ndarray,
                    t_grid: np.ndarray, T_b: float) -> np.ndarray:
    dt = path.dt
    ks = np.array([path.index_of(t) for t in np.atleast_1d(t_grid)])
    M = int(math.ceil(T_b / dt - 1e-9))
    lo = ks.min() - M
    hi = ks.max()
    if lo < -path.n_neg or hi > path.n_pos:
        raise SpanError(f"path span [{path.t_min}, {path.t_max}] does not cover "
                        f"[{lo * dt}, {hi * dt}] needed for lookback {T_b:.4g}")
    inc = path.increments[lo + path.n_neg: hi + path.n_neg] * scale
    n2 = path.dim
    lags = np.arange(0, M + 1)
    W = expm(kernel_matrix[None, :, :] * (lags * dt)[:, None, None])
    W[0] = 0.0  # the cell starting at t has not happened yet
    idx = ks - lo  # output index in the full convolution
    out = np.zeros((len(ks), n2))
    small = len(ks) * M < 4 * (hi - lo + M) * max(1, int(math.log2(hi - lo + M + 2)))
    for i in range(n2):
        for j in range(n2):
            w = W[:, i, j]
            if not np.any(w):
                continue
            if small:
                for r, k in enumerate(idx):
                    seg = inc[k - M:k, j][::-1]
                    out[r, i] += np.dot(w[1:M + 1], seg)
            else:
                full = fftconvolve(inc[:, j], w)
                out[:, i] += full[idx]
    return out


def stationary_xi(F, path: LevyPath, t_grid, tol: float = DEFAULT_TOL) -> StationaryProcess:
    """Samples of ``xi(theta_t w)`` on ``t_grid`` (path-grid aligned times)."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    if F.shape != (path.dim, path.dim):
        raise ShapeError("F does not match the path dimension")
    T_b, gf = _lookback(F, tol, 1.0)
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    vals = _convolve_cells(path, F, np.ones(path.dim), t_grid, T_b)
    return StationaryProcess(t_grid, vals, "xi", 1.0, T_b, math.exp(gf * T_b), path.seed)


def stationary_eta(F, epsilon: float, alpha, path: LevyPath, t_grid,
                   tol: float = DEFAULT_TOL) -> StationaryProcess:
    """Samples of ``eta^{1/eps}(theta_t w)``; the ``eps**(-1/alpha)`` factor is per component."""
    if epsilon <= 0:
        raise DomainError("epsilon must be positive")
    F = np.atleast_2d(np.asarray(F, dtype=float))
    if F.shape != (path.dim, path.dim):
        raise ShapeError("F does not match the path dimension")
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (path.dim,))
    T_b, gf = _lookback(F, tol, 1.0 / epsilon)
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    scale = epsilon ** (-1.0 / alpha)
    vals = _convolve_cells(path, F / epsilon, scale, t_grid, T_b)
    return StationaryProcess(t_grid, vals, "eta", epsilon, T_b, math.exp(gf * T_b / epsilon), path.seed)


def xi_lookback(F, tol: float = DEFAULT_TOL, epsilon: float = 1.0) -> float:
    """Lookback needed by ``stationary_xi`` (``epsilon != 1`` gives the eta lookback)."""
    return _lookback(np.atleast_2d(np.asarray(F, dtype=float)), tol, 1.0 / epsilon)[0]


def transform_forward(x, y, sigma: float, eta_value):
    """Random change of variables ``(x, y) -> (x, y - sigma * eta)``."""
    y = np.asarray(y, dtype=float)
    eta_value = np.asarray(eta_value, dtype=float)
    if y.shape[-1:] != eta_value.shape[-1:]:
        raise ShapeError("y and eta dimensions differ")
    return np.asarray(x, dtype=float), y - sigma * eta_value


def transform_inverse(x_hat, y_hat, sigma: float, eta_value):
    y_hat = np.asarray(y_hat, dtype=float)
    eta_value = np.asarray(eta_value, dtype=float)
    if y_hat.shape[-1:] != eta_value.shape[-1:]:
        raise ShapeError("y and eta dimensions differ")
    return np.asarray(x_hat, dtype=float), y_hat + sigma * eta_value
