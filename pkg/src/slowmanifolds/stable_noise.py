"""Symmetric alpha-stable variates and two-sided Levy sample paths.

Paths live on a uniform grid and are stored as increments. Cell ``k >= 0``
covers ``[k dt, (k+1) dt)`` and is drawn from the positive-time stream;
cell ``k >= 0`` on the negative side covers ``[-(k+1) dt, -k dt)`` and is
drawn from an independent negative-time stream.  Every variate is fixed by
``(seed, component, side, cell index)``, so two paths generated from the same
seed agree on every cell their spans share.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import AlignmentError, ConfigurationError, DomainError, SpanError

_GRID_RTOL = 1e-9
_MAGIC = b"LEVYPATH"


@dataclass(frozen=True)
class StableSpec:
    """Independent symmetric stable components with unit scale."""

    alpha: tuple[float, ...]
    scale: float = 1.0

    def __post_init__(self):
        alpha = tuple(float(a) for a in np.atleast_1d(self.alpha))
        if len(alpha) == 0:
            raise ConfigurationError("StableSpec needs at least one component")
        for a in alpha:
            if not 1.0 < a <= 2.0:
                raise DomainError(f"stability index {a} outside (1, 2]")
        if self.scale <= 0:
            raise DomainError("scale must be positive")
        object.__setattr__(self, "alpha", alpha)

    @classmethod
    def uniform(cls, alpha: float, dim: int) -> "StableSpec":
        return cls(tuple([alpha] * dim))

    @property
    def dim(self) -> int:
        return len(self.alpha)


def sample_standard_stable(alpha, u1, u2):
    """Chambers-Mallows-Stuck transform for the symmetric stable law.

    Maps two independent U(0, 1) draws to a variate with characteristic
    function ``exp(-|u|**alpha)``.  Works elementwise on arrays.

    Parameters
    ----------
    alpha : float
        Stability index in (1, 2].
    u1, u2 : float or ndarray
        Uniform draws in the open interval (0, 1).
    """
    if not 1.0 < alpha <= 2.0:
        raise DomainError(f"stability index {alpha} outside (1, 2]")
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    if np.any((u1 <= 0) | (u1 >= 1) | (u2 <= 0) | (u2 >= 1)):
        raise DomainError("uniform draws must lie in (0, 1)")
    v = math.pi * (u1 - 0.5)
    w = -np.log(u2)
    if alpha == 2.0:
        out = 2.0 * np.sin(v) * np.sqrt(w)
    else:
        out = (np.sin(alpha * v) / np.cos(v) ** (1.0 / alpha)
               * (np.cos(v - alpha * v) / w) ** ((1.0 - alpha) / alpha))
    return out if out.ndim else float(out)


def _open_uniforms(gen: np.random.Generator, n: int) -> np.ndarray:
    # 53-bit lattice shifted by half a step: never 0, never 1
    return (gen.integers(0, 1 << 53, size=n, dtype=np.int64) + 0.5) / float(1 << 53)


def _stream(seed: int, component: int, side: int) -> np.random.Generator:
    key = (int(seed) & 0xFFFFFFFFFFFFFFFF) | ((2 * component + side + 1) << 64)
    return np.random.Generator(np.random.Philox(key=key))


def stable_cells(seed: int, component: int, side: int, n: int, alpha: float) -> np.ndarray:
    """First ``n`` standard variates of one (seed, component, side) stream."""
    gen = _stream(seed, component, side)
    u = _open_uniforms(gen, 2 * n).reshape(n, 2) if n else np.empty((0, 2))
    return np.asarray(sample_standard_stable(alpha, u[:, 0], u[:, 1]), dtype=float).reshape(n)


def grid_count(span: float, dt: float, what: str = "span") -> int:
    """Number of ``dt`` cells in ``span``; raises unless it is integral."""
    if dt <= 0:
        raise ConfigurationError("dt must be positive")
    q = span / dt
    n = int(round(q))
    if abs(q - n) > _GRID_RTOL * max(1.0, abs(q)):
        raise ConfigurationError(f"{what} {span} is not an integer multiple of dt={dt}")
    return n


@dataclass(frozen=True, eq=False)
class LevyPath:
    """Two-sided path on a uniform grid, kept as per-cell increments.

    ``increments[i]`` is the increment over ``[t_min + i dt, t_min + (i+1) dt)``.
    The value at time 0 is 0 by construction.
    """

    dt: float
    n_neg: int
    n_pos: int
    increments: np.ndarray
    alpha: tuple[float, ...]
    seed: int | None = None
    origin_shift: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        inc = np.asarray(self.increments, dtype=float)
        if inc.ndim == 1:
            inc = inc[:, None]
        if inc.shape[0] != self.n_neg + self.n_pos:
            raise ConfigurationError("increment count does not match the span")
        inc.setflags(write=False)
        object.__setattr__(self, "increments", inc)

    @property
    def dim(self) -> int:
        return self.increments.shape[1]

    @property
    def t_min(self) -> float:
        return -self.n_neg * self.dt

    @property
    def t_max(self) -> float:
        return self.n_pos * self.dt

    @property
    def n_cells(self) -> int:
        return self.n_neg + self.n_pos

    def times(self) -> np.ndarray:
        return self.dt * np.arange(-self.n_neg, self.n_pos + 1)

    def values(self) -> np.ndarray:
        """Path values on the grid ``times()``; exactly 0 at t = 0."""
        out = np.zeros((self.n_cells + 1, self.dim))
        out[self.n_neg + 1:] = np.cumsum(self.increments[self.n_neg:], axis=0)
        if self.n_neg:
            out[:self.n_neg] = -np.cumsum(self.increments[:self.n_neg][::-1], axis=0)[::-1]
        return out

    def value_at(self, t: float) -> np.ndarray:
        k = self.index_of(t)
        return self.values()[k + self.n_neg]

    def index_of(self, t: float) -> int:
        """Grid index of time ``t`` relative to the origin."""
        q = t / self.dt
        k = int(round(q))
        if abs(q - k) > _GRID_RTOL * max(1.0, abs(q)):
            raise AlignmentError(f"time {t} is not on the dt={self.dt} grid")
        return k

    def cell_slice(self, t_lo: float, t_hi: float) -> np.ndarray:
        """Increments of the cells covering ``[t_lo, t_hi)``."""
        a = self.index_of(t_lo) + self.n_neg
        b = self.index_of(t_hi) + self.n_neg
        if a < 0 or b > self.n_cells or a > b:
            raise SpanError(f"[{t_lo}, {t_hi}] outside path span [{self.t_min}, {self.t_max}]")
        return self.increments[a:b]

    def with_increments(self, increments: np.ndarray) -> "LevyPath":
        return LevyPath(self.dt, self.n_neg, self.n_pos, increments, self.alpha,
                        self.seed, self.origin_shift, dict(self.meta))

    def __add__(self, other: "LevyPath") -> "LevyPath":
        if (self.dt, self.n_neg, self.n_pos) != (other.dt, other.n_neg, other.n_pos):
            raise ConfigurationError("paths must share grid and span")
        return LevyPath(self.dt, self.n_neg, self.n_pos,
                        self.increments + other.increments, self.alpha, None)


def generate_path(spec: StableSpec, t_min: float, t_max: float, dt: float, seed: int) -> LevyPath:
    """Draw a two-sided path; increments are ``dt**(1/alpha)`` times standard variates."""
    if not t_min <= 0 <= t_max:
        raise ConfigurationError("span must contain the origin")
    n_neg = grid_count(-t_min, dt, "negative span")
    n_pos = grid_count(t_max, dt, "positive span")
    inc = np.empty((n_neg + n_pos, spec.dim))
    for c, a in enumerate(spec.alpha):
        scale = spec.scale * dt ** (1.0 / a)
        neg = stable_cells(seed, c, 1, n_neg, a)
        pos = stable_cells(seed, c, 0, n_pos, a)
        inc[:n_neg, c] = scale * neg[::-1]
        inc[n_neg:, c] = scale * pos
    return LevyPath(dt, n_neg, n_pos, inc, spec.alpha, seed)


def zero_path(dim: int, t_min: float, t_max: float, dt: float, alpha: Sequence[float] | None = None) -> LevyPath:
    n_neg = grid_count(-t_min, dt)
    n_pos = grid_count(t_max, dt)
    alpha = tuple(alpha) if alpha is not None else (2.0,) * dim
    return LevyPath(dt, n_neg, n_pos, np.zeros((n_neg + n_pos, dim)), alpha, None)


def shift_path(path: LevyPath, t: float) -> LevyPath:
    """Path of the shifted noise ``s -> w(s + t) - w(t)``.

    The increments are reused unchanged; only the origin moves, so the
    shifted span is ``[t_min - t, t_max - t]``.
    """
    k = path.index_of(t)
    if not -path.n_neg <= k <= path.n_pos:
        raise SpanError(f"shift {t} moves the origin outside [{path.t_min}, {path.t_max}]")
    return LevyPath(path.dt, path.n_neg + k, path.n_pos - k, path.increments,
                    path.alpha, path.seed, path.origin_shift + k, dict(path.meta))


def rescale_path(path: LevyPath, epsilon: float) -> LevyPath:
    """Time-rescaled path ``u -> eps**(-1/alpha) w(eps u)`` on the grid ``dt/eps``.

    By self-similarity this is again a standard stable path, and
    ``eta`` driven by ``path`` coincides pathwise with ``xi`` driven by the
    rescaled one.
    """
    factors = np.array([epsilon ** (-1.0 / a) for a in path.alpha])
    return LevyPath(path.dt / epsilon, path.n_neg, path.n_pos, path.increments * factors,
                    path.alpha, path.seed, path.origin_shift, dict(path.meta, rescaled=epsilon))


# -- binary dump ----------------------------------------------------------
# header: magic, n_alpha (u32), alphas (f64 * n), dt, t_min, t_max (f64),
# seed (i64, -1 if none), n_cells (u64); then float64 LE increments,
# time-major, component-minor.

def dump_path(path: LevyPath, dest) -> None:
    seed = -1 if path.seed is None else int(path.seed)
    header = _MAGIC + struct.pack("<I", path.dim)
    header += struct.pack(f"<{path.dim}d", *path.alpha)
    header += struct.pack("<dddqQ", path.dt, path.t_min, path.t_max, seed, path.n_cells)
    body = np.ascontiguousarray(path.increments, dtype="<f8").tobytes()
    Path(dest).write_bytes(header + body)


def load_path(src) -> LevyPath:
    raw = Path(src).read_bytes()
    if raw[:8] != _MAGIC:
        raise ConfigurationError("not a path dump")
    pos = 8
    (dim,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    alpha = struct.unpack_from(f"<{dim}d", raw, pos)
    pos += 8 * dim
    dt, t_min, t_max, seed, n_cells = struct.unpack_from("<dddqQ", raw, pos)
    pos += struct.calcsize("<dddqQ")
    inc = np.frombuffer(raw, dtype="<f8", offset=pos).reshape(n_cells, dim).astype(float)
    n_neg = grid_count(-t_min, dt)
    n_pos = n_cells - n_neg
    return LevyPath(dt, n_neg, n_pos, inc, tuple(alpha), None if seed < 0 else seed)
