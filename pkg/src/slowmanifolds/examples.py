"""Built-in FitzHugh-Nagumo type systems with closed-form manifold oracles.

Each builder returns a :class:`SlowFastSystem` with analytic Jacobians of
``g2``.  The ``*_h0`` and ``*_h1`` functions are the closed forms for the
critical manifold and its first-order correction; ``h1`` is exact for
``sigma = 0`` except for example 1, where the noisy form is evaluated by
quadrature over a supplied ``xi`` window.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import cumulative_trapezoid, simpson

from .stable_noise import StableSpec
from .system_model import SlowFastSystem

# default parameters of each example
DEFAULTS = {
    "example1": {"epsilon": 0.01, "sigma": 0.05, "alpha": (1.8,)},
    "example2": {"epsilon": 0.01, "sigma": 0.1, "alpha": (1.8,)},
    "example3": {"epsilon": 0.01, "sigma": 0.1, "alpha": (1.9, 1.7)},
}


def example1(epsilon=0.01, sigma=0.05, alpha=1.8, K=1.0 / 3.0) -> SlowFastSystem:
    """dx = (x + sin(y)/3) dt, dy = (-y + x^2/6) dt/eps + noise."""
    return SlowFastSystem(
        S=[[1.0]], F=[[-1.0]],
        g1=lambda x, y: np.sin(y[:1]) / 3.0,
        g2=lambda x, y: x[:1] ** 2 / 6.0,
        K=K, epsilon=epsilon, sigma=sigma, noise=StableSpec.uniform(_first(alpha), 1),
        g2_x=lambda x, y: np.reshape(x[0] / 3.0, (1, 1, -1)),
        g2_y=lambda x, y: np.zeros((1, 1)),
        name="example1")


def example2(epsilon=0.01, sigma=0.1, alpha=1.8, K=0.5) -> SlowFastSystem:
    """Two slow variables, one fast variable with drift -x1 x2/10."""

    def g1(x, y):
        a, b, v = x[0], x[1], y[0]
        return np.array([-(a ** 3 + a * b) / 20.0 + v / 3.0, 0.5 * np.sin(a) * np.cos(b) + v ** 2 / 8.0])

    return SlowFastSystem(
        S=np.diag([0.5, 1.0 / 3.0]), F=[[-1.0]],
        g1=g1,
        g2=lambda x, y: np.array([-x[0] * x[1] / 10.0]),
        K=K, epsilon=epsilon, sigma=sigma, noise=StableSpec.uniform(_first(alpha), 1),
        g2_x=lambda x, y: np.array([[-x[1] / 10.0, -x[0] / 10.0]]),
        g2_y=lambda x, y: np.zeros((1, 1)),
        name="example2")


def example3(epsilon=0.01, sigma=0.1, alpha=(1.9, 1.7), K=0.5) -> SlowFastSystem:
    """One slow variable, two fast variables with independent stable noises."""
    alpha = tuple(np.broadcast_to(np.asarray(alpha, dtype=float), (2,)))
    return SlowFastSystem(
        S=[[1.0 / 3.0]], F=-np.eye(2),
        g1=lambda x, y: np.array([(x[0] - x[0] ** 3 + np.sin(y[0]) * np.cos(y[1])) / 50.0]),
        g2=lambda x, y: np.array([np.sin(x[0]) / 5.0, -x[0] ** 2 / 16.0]),
        K=K, epsilon=epsilon, sigma=sigma, noise=StableSpec(alpha),
        g2_x=lambda x, y: np.array([[np.cos(x[0]) / 5.0], [-x[0] / 8.0]]),
        g2_y=lambda x, y: np.zeros((2, 2)),
        name="example3")


BUILTINS = {"example1": example1, "example2": example2, "example3": example3}


def _first(alpha):
    return float(np.atleast_1d(alpha)[0])


def builtin(name: str, **overrides) -> SlowFastSystem:
    if name not in BUILTINS:
        raise KeyError(f"unknown example {name!r}; choose from {sorted(BUILTINS)}")
    params = dict(DEFAULTS[name])
    params.update({k: v for k, v in overrides.items() if v is not None})
    return BUILTINS[name](**params)


# -- closed forms --------------------------------------------------------------

def example1_h0(x0) -> np.ndarray:
    return np.atleast_1d(np.asarray(x0, dtype=float) ** 2 / 6.0)


def example1_h1(x0, sigma: float = 0.0, xi_times=None, xi_values=None) -> float:
    """``-x0^2/3 + (x0/9) int_{-inf}^0 e^t int_0^t sin(x0^2/6 + sigma xi(s)) ds dt``.

    Without a noise window (or with ``sigma = 0``) the closed form
    ``-x0^2/3 - sin(x0^2/6) x0/9`` is returned.
    """
    x0 = float(np.asarray(x0).reshape(-1)[0])
    c = x0 ** 2 / 6.0
    if sigma == 0 or xi_values is None:
        return -x0 ** 2 / 3.0 - np.sin(c) * x0 / 9.0
    t = np.asarray(xi_times, dtype=float)
    f = np.sin(c + sigma * np.asarray(xi_values, dtype=float).reshape(len(t), -1)[:, 0])
    inner = cumulative_trapezoid(f[::-1], -t[::-1], initial=0.0)[::-1]  # int_t^0 f
    outer = simpson(np.exp(t) * (-inner), x=t)
    return -x0 ** 2 / 3.0 + x0 / 9.0 * outer


def example2_h0(x0) -> np.ndarray:
    a, b = np.asarray(x0, dtype=float)
    return np.array([-a * b / 10.0])


def example2_h1(x0) -> np.ndarray:
    """First-order correction at ``sigma = 0``."""
    a, b = np.asarray(x0, dtype=float)
    return np.array([((10 * a - a ** 3) / 20.0 - a * b / 12.0) * b / 10.0
                     + (b / 3.0 + 0.5 * np.sin(a) * np.cos(b) + (a * b) ** 2 / 800.0) * a / 10.0])


def example3_h0(x0) -> np.ndarray:
    x = float(np.asarray(x0).reshape(-1)[0])
    return np.array([np.sin(x) / 5.0, -x ** 2 / 16.0])


def example3_h1(x0) -> np.ndarray:
    """First-order correction at ``sigma = 0``."""
    x = float(np.asarray(x0).reshape(-1)[0])
    bracket = x ** 3 / 50.0 - 53.0 * x / 150.0 - np.sin(np.sin(x) / 5.0) * np.cos(-x ** 2 / 16.0) / 50.0
    return np.array([np.cos(x) / 5.0 * bracket, -x / 8.0 * bracket])


ORACLES = {
    "example1": (example1_h0, lambda x0: np.atleast_1d(example1_h1(x0))),
    "example2": (example2_h0, example2_h1),
    "example3": (example3_h0, example3_h1),
}
