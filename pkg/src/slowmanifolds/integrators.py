"""Explicit Euler time stepping for the original, transformed, rescaled,
critical and reduced systems.

All schemes are first order; jumps enter additively per cell.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .convolution import StationaryProcess
from .errors import ConfigurationError, DivergenceError, ExtrapolationError, SpanError
from .stable_noise import LevyPath, grid_count
from .system_model import SlowFastSystem

OVERFLOW_GUARD = 1e12


@dataclass(eq=False)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    n1: int
    system_tag: str
    path_ref: dict = field(default_factory=dict)

    @property
    def x(self) -> np.ndarray:
        return self.states[:, :self.n1]

    @property
    def y(self) -> np.ndarray:
        return self.states[:, self.n1:]

    def to_csv(self, dest) -> None:
        n2 = self.states.shape[1] - self.n1
        header = ["t"] + [f"x{i + 1}" for i in range(self.n1)] + [f"y{i + 1}" for i in range(n2)]
        with open(dest, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for t, row in zip(self.times, self.states):
                w.writerow([f"{t:.17g}"] + [f"{v:.17g}" for v in row])

    @classmethod
    def from_csv(cls, src, n1: int, system_tag: str = "loaded") -> "Trajectory":
        data = np.loadtxt(src, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1:], n1, system_tag)


def _time_grid(t_span, dt):
    t0, t1 = map(float, t_span)
    n = grid_count(t1 - t0, dt, "integration span")
    if n < 1:
        raise ConfigurationError("empty integration span")
    return t0 + dt * np.arange(n + 1), n


def _guard(state, k, times, tag):
    if not np.all(np.isfinite(state)) or np.max(np.abs(state)) > OVERFLOW_GUARD:
        raise DivergenceError(f"{tag}: state left the finite range at t={times[k]:.6g}", time=float(times[k]))


def _noise_on_grid(proc: StationaryProcess, times: np.ndarray) -> np.ndarray:
    if len(proc.times) == len(times) and np.allclose(proc.times, times, rtol=0, atol=1e-9 * max(1.0, abs(times[-1]))):
        return proc.values
    dt = proc.dt
    idx = np.rint((times - proc.times[0]) / dt).astype(int)
    if idx.min() < 0 or idx.max() >= len(proc.times) or not np.allclose(proc.times[idx], times, atol=1e-9):
        raise SpanError("noise process is not sampled on the integration grid")
    return proc.values[idx]


def integrate_sde(sys: SlowFastSystem, path: LevyPath, z0, t_span, dt: float,
                  check_stiffness: bool = True) -> Trajectory:
    """Euler-Maruyama for the original slow-fast SDE driven by ``path``.

    ``dt`` must be a multiple of the path step; increments are summed over
    each step.
    """
    if check_stiffness and dt > sys.epsilon / 10 * (1 + 1e-9):
        raise ConfigurationError(f"dt={dt} exceeds eps/10={sys.epsilon / 10}")
    times, n = _time_grid(t_span, dt)
    m = grid_count(dt, path.dt, "step")
    cells = path.cell_slice(times[0], times[-1])
    dL = cells.reshape(n, m, path.dim).sum(axis=1)
    amp = sys.sigma * np.array([sys.epsilon ** (-1.0 / a) for a in sys.alpha])
    n1 = sys.n1
    S, F, eps = sys.S, sys.F, sys.epsilon
    states = np.empty((n + 1, n1 + sys.n2))
    states[0] = np.asarray(z0, dtype=float)
    x = states[0, :n1].copy()
    y = states[0, n1:].copy()
    for k in range(n):
        fx = S @ x + sys.drift1(x, y)
        fy = F @ y + sys.drift2(x, y)
        x = x + dt * fx
        y = y + (dt / eps) * fy + amp * dL[k]
        states[k + 1, :n1] = x
        states[k + 1, n1:] = y
        _guard(states[k + 1], k + 1, times, "sde")
    return Trajectory(times, states, n1, "sde", {"seed": path.seed, "dt": dt})


def integrate_transformed(sys: SlowFastSystem, eta: StationaryProcess, z0, t_span, dt: float,
                          check_stiffness: bool = True) -> Trajectory:
    """Euler for the random ODE obtained after subtracting ``sigma * eta``.

    ``z0`` is given in transformed coordinates.
    """
    if check_stiffness and dt > sys.epsilon / 10 * (1 + 1e-9):
        raise ConfigurationError(f"dt={dt} exceeds eps/10={sys.epsilon / 10}")
    times, n = _time_grid(t_span, dt)
    noise = sys.sigma * _noise_on_grid(eta, times)
    return _euler_rde(sys, noise, z0, times, 1.0, 1.0 / sys.epsilon, "transformed", {"seed": eta.seed})


def integrate_scaled(sys: SlowFastSystem, xi: StationaryProcess, z0, t_span, dt: float,
                     epsilon: float | None = None) -> Trajectory:
    """Euler for the system in fast time: slow drift times eps, fast drift unscaled.

    ``epsilon=0`` integrates the critical system with the slow variable frozen.
    """
    eps = sys.epsilon if epsilon is None else float(epsilon)
    times, n = _time_grid(t_span, dt)
    noise = sys.sigma * _noise_on_grid(xi, times)
    tag = "critical" if eps == 0 else "scaled"
    return _euler_rde(sys, noise, z0, times, eps, 1.0, tag, {"seed": xi.seed})


def _euler_rde(sys, noise, z0, times, slow_rate, fast_rate, tag, ref):
    n1 = sys.n1
    dt = times[1] - times[0]
    states = np.empty((len(times), n1 + sys.n2))
    states[0] = np.asarray(z0, dtype=float)
    x = states[0, :n1].copy()
    y = states[0, n1:].copy()
    for k in range(len(times) - 1):
        yn = y + noise[k]
        fx = sys.S @ x + sys.drift1(x, yn)
        fy = sys.F @ y + sys.drift2(x, yn)
        x = x + dt * slow_rate * fx
        y = y + dt * fast_rate * fy
        states[k + 1, :n1] = x
        states[k + 1, n1:] = y
        _guard(states[k + 1], k + 1, times, tag)
    return Trajectory(times, states, n1, tag, dict(ref, dt=dt))


class GraphInterpolant:
    """Time-independent manifold lookup from a 1-D ``ManifoldGraph``."""

    def __init__(self, graph, clamp: bool = False):
        if graph.x0_grid.shape[1] != 1:
            raise ConfigurationError("graph interpolation needs a one-dimensional slow variable")
        self.x = graph.x0_grid[:, 0]
        self.h = graph.h_values
        self.clamp = clamp

    def __call__(self, t, x):
        xv = float(np.asarray(x).reshape(-1)[0])
        if not self.x[0] <= xv <= self.x[-1]:
            if not self.clamp:
                raise ExtrapolationError(f"x={xv} left the graph grid [{self.x[0]}, {self.x[-1]}]")
            xv = min(max(xv, self.x[0]), self.x[-1])
        return np.array([np.interp(xv, self.x, self.h[:, j]) for j in range(self.h.shape[1])])


def integrate_reduced(sys: SlowFastSystem, h: Callable, x0, t_span, dt: float,
                      scaled: bool = False, clamp: bool = False) -> Trajectory:
    """Euler for the reduced slow equation ``dx = (S x + g1(x, h(t, x))) dt``.

    ``h`` is a callable ``(t, x) -> y`` giving the manifold over the current
    noise (original coordinates), or a ``ManifoldGraph`` which is
    interpolated.  ``scaled=True`` multiplies the slow drift by eps (fast
    time).  The emitted states are the lifted pairs ``(x, h(t, x))``.
    """
    if hasattr(h, "x0_grid"):
        h = GraphInterpolant(h, clamp=clamp)
    times, n = _time_grid(t_span, dt)
    rate = sys.epsilon if scaled else 1.0
    n1 = sys.n1
    states = np.empty((n + 1, n1 + sys.n2))
    x = np.asarray(x0, dtype=float).reshape(n1).copy()
    for k in range(n + 1):
        y = np.asarray(h(times[k], x), dtype=float).reshape(sys.n2)
        states[k, :n1] = x
        states[k, n1:] = y
        _guard(states[k], k, times, "reduced")
        if k < n:
            x = x + dt * rate * (sys.S @ x + sys.drift1(x, y))
    return Trajectory(times, states, n1, "reduced", {"dt": dt})
