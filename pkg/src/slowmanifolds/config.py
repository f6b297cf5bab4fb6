"""Run configuration: a YAML file validated by a strict schema.

Example::

    system: example1          # or an inline definition, see InlineSystem
    epsilon: 0.01
    sigma: 0.05
    alpha: 1.8
    seed: 7
    t_span: [0.0, 1.0]
    x0_grid:
      - {start: 0.0, stop: 3.14, step: 0.1}
    study: {epsilons: [0.2, 0.1, 0.05, 0.025], n_real: 50}

Unknown keys are rejected.  Inline drifts are sympy expressions in
``x1..xn`` and ``y1..ym``; their Jacobians are derived symbolically.
"""

from __future__ import annotations

import itertools
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
import sympy
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigurationError
from .examples import BUILTINS, builtin
from .stable_noise import StableSpec
from .system_model import SlowFastSystem


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class InlineSystem(_Strict):
    S: list[list[float]]
    F: list[list[float]]
    g1: list[str]
    g2: list[str]
    K: float = Field(gt=0)
    g1_bound: Optional[float] = None
    name: str = "inline"

    @model_validator(mode="after")
    def _shapes(self):
        n1, n2 = len(self.S), len(self.F)
        if any(len(r) != n1 for r in self.S) or any(len(r) != n2 for r in self.F):
            raise ValueError("S and F must be square")
        if len(self.g1) != n1 or len(self.g2) != n2:
            raise ValueError("g1 must have len(S) entries and g2 len(F) entries")
        return self


class Axis(_Strict):
    start: float
    stop: float
    step: float = Field(gt=0)

    def values(self) -> np.ndarray:
        n = int(np.floor((self.stop - self.start) / self.step + 1e-9))
        if n < 0:
            raise ValueError("stop lies before start")
        return self.start + self.step * np.arange(n + 1)


class StudyConfig(_Strict):
    epsilons: list[float] = [0.2, 0.1, 0.05, 0.025]
    n_real: int = Field(50, ge=2)
    x0: Optional[list[float]] = None
    T: float = Field(25.0, gt=0)
    dt: float = Field(5e-3, gt=0)

    @field_validator("epsilons")
    @classmethod
    def _positive(cls, v):
        if len(v) < 2 or any(e <= 0 for e in v):
            raise ValueError("need at least two positive epsilons")
        return v


class VerifyConfig(_Strict):
    scale: float = Field(1.0, gt=0, le=1.0)
    extra: bool = True


class ManifoldConfig(_Strict):
    variants: list[Literal["fixed_point", "expansion"]] = ["fixed_point", "expansion"]
    system: Literal["tilde", "hat"] = "tilde"
    T: Optional[float] = None
    dt: float = Field(1e-2, gt=0)


class RunConfig(_Strict):
    system: Union[Literal["example1", "example2", "example3"], InlineSystem] = "example1"
    epsilon: Optional[float] = Field(None, ge=0)
    sigma: Optional[float] = Field(None, ge=0)
    alpha: Optional[Union[float, list[float]]] = None
    K: Optional[float] = Field(None, gt=0)
    seed: int = Field(0, ge=0, lt=2 ** 63)
    dt: Optional[float] = Field(None, gt=0)
    reduced_dt: float = Field(1e-3, gt=0)
    t_span: tuple[float, float] = (0.0, 1.0)
    z0: Optional[list[list[float]]] = None
    x0_grid: Optional[Union[list[Axis], list[list[float]]]] = None
    tol: float = Field(1e-10, gt=0)
    lookback_tol: float = Field(1e-8, gt=0, lt=1)
    reduced_horizon: float = Field(25.0, gt=0)
    manifold: ManifoldConfig = ManifoldConfig()
    study: StudyConfig = StudyConfig()
    verify: VerifyConfig = VerifyConfig()
    workers: Optional[int] = Field(None, ge=1)

    @field_validator("alpha")
    @classmethod
    def _alpha_range(cls, v):
        for a in np.atleast_1d(v if v is not None else []):
            if not 1.0 < a <= 2.0:
                raise ValueError(f"alpha {a} outside (1, 2]")
        return v

    @field_validator("t_span")
    @classmethod
    def _span(cls, v):
        if not v[1] > v[0]:
            raise ValueError("t_span must be increasing")
        return v

    @property
    def name(self) -> str:
        return self.system if isinstance(self.system, str) else self.system.name

    def grid(self, n1: int) -> np.ndarray:
        if self.x0_grid is None:
            axes = {"example1": [Axis(start=0.0, stop=np.pi, step=0.1)],
                    "example2": [Axis(start=0.0, stop=2.0, step=0.5)] * 2,
                    "example3": [Axis(start=-1.0, stop=1.0, step=0.1)]}.get(self.name)
            if axes is None:
                axes = [Axis(start=-1.0, stop=1.0, step=0.25)] * n1
        else:
            axes = self.x0_grid
        if axes and isinstance(axes[0], Axis):
            if len(axes) != n1:
                raise ConfigurationError(f"x0_grid: expected {n1} axes, got {len(axes)}")
            try:
                pts = np.array(list(itertools.product(*[a.values() for a in axes])), dtype=float)
            except ValueError as exc:
                raise ConfigurationError(f"x0_grid: {exc}") from exc
        else:
            pts = np.asarray(axes, dtype=float)
            if pts.ndim != 2 or pts.shape[1] != n1:
                raise ConfigurationError(f"x0_grid: points must have {n1} coordinates")
        if len(pts) == 0:
            raise ConfigurationError("x0_grid: empty grid")
        return pts


def load_config(path: str | Path | None, overrides: dict | None = None) -> RunConfig:
    """Read and validate a config file; ``overrides`` (e.g. CLI flags) win over file values."""
    data: dict = {}
    if path is not None:
        try:
            data = yaml.safe_load(Path(path).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigurationError("config root must be a mapping")
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        field = ".".join(str(p) for p in first["loc"])
        raise ConfigurationError(f"invalid config field '{field}': {first['msg']}") from exc


def _lambdify_vector(exprs, symbols):
    fns = [sympy.lambdify(symbols, e, "numpy") for e in exprs]

    def call(*args):
        vals = [np.asarray(f(*args), dtype=float) for f in fns]
        return np.array(np.broadcast_arrays(*vals, *[np.asarray(a, dtype=float) for a in args])[:len(vals)])

    return call


def inline_system(spec: InlineSystem, epsilon: float, sigma: float, alpha) -> SlowFastSystem:
    n1, n2 = len(spec.S), len(spec.F)
    xs = sympy.symbols(f"x1:{n1 + 1}")
    ys = sympy.symbols(f"y1:{n2 + 1}")
    local = {str(s): s for s in (*xs, *ys)}
    try:
        g1 = [sympy.sympify(e, locals=local) for e in spec.g1]
        g2 = [sympy.sympify(e, locals=local) for e in spec.g2]
    except (sympy.SympifyError, TypeError) as exc:
        raise ConfigurationError(f"cannot parse drift expression: {exc}") from exc
    allowed = set(xs) | set(ys)
    for e in g1 + g2:
        extra = e.free_symbols - allowed
        if extra:
            raise ConfigurationError(f"unknown symbols {sorted(map(str, extra))} in drift {e}")
    sym = (*xs, *ys)
    f1 = _lambdify_vector(g1, sym)
    f2 = _lambdify_vector(g2, sym)
    jx = _lambdify_vector([sympy.diff(e, x) for e in g2 for x in xs], sym)
    jy = _lambdify_vector([sympy.diff(e, y) for e in g2 for y in ys], sym)
    alpha = np.broadcast_to(np.asarray(1.8 if alpha is None else alpha, dtype=float), (n2,))
    return SlowFastSystem(
        S=spec.S, F=spec.F,
        g1=lambda x, y: f1(*x, *y), g2=lambda x, y: f2(*x, *y),
        K=spec.K, epsilon=epsilon, sigma=sigma, noise=StableSpec(tuple(alpha)),
        g1_bound=spec.g1_bound,
        g2_x=lambda x, y: jx(*x, *y).reshape((n2, n1) + np.shape(x)[1:]),
        g2_y=lambda x, y: jy(*x, *y).reshape((n2, n2) + np.shape(x)[1:]),
        name=spec.name)


def build_system(cfg: RunConfig, epsilon: float | None = None) -> SlowFastSystem:
    """System described by ``cfg``; ``epsilon`` overrides (used when the config asks for eps = 0)."""
    eps = cfg.epsilon if epsilon is None else epsilon
    try:
        if isinstance(cfg.system, str):
            kw = {"epsilon": eps, "sigma": cfg.sigma, "alpha": cfg.alpha, "K": cfg.K}
            return builtin(cfg.system, **kw)
        return inline_system(cfg.system, eps if eps is not None else 0.01,
                             cfg.sigma if cfg.sigma is not None else 0.0, cfg.alpha)
    except (ValueError, TypeError) as exc:
        raise ConfigurationError(f"invalid system definition: {exc}") from exc


__all__ = ["RunConfig", "InlineSystem", "Axis", "load_config", "build_system", "BUILTINS"]
