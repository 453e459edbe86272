"""Uniform time grids, sampled paths, and the trapezoidal quadratures used throughout."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError, InvalidParameterError


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_k = t0 + k*dt`` for ``k = 0..n_steps``."""

    t0: float
    dt: float
    n_steps: int

    def __post_init__(self):
        if not (math.isfinite(self.t0) and math.isfinite(self.dt)):
            raise InvalidParameterError("grid t0 and dt must be finite")
        if self.dt <= 0:
            raise InvalidParameterError(f"grid step must be positive, got {self.dt}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise InvalidParameterError(f"n_steps must be an integer >= 1, got {self.n_steps}")
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @classmethod
    def covering(cls, T: float, n_steps: int, t0: float = 0.0) -> "TimeGrid":
        """Grid on ``[t0, t0 + T]`` with ``n_steps`` equal steps."""
        if not T > 0:
            raise InvalidParameterError(f"horizon must be positive, got {T}")
        return cls(t0, T / n_steps, n_steps)

    @property
    def times(self) -> np.ndarray:
        t = self.t0 + self.dt * np.arange(self.n_steps + 1)
        # pin the last node so t_end is reproduced to the last bit
        t[-1] = self.t_end
        return t

    @property
    def t_end(self) -> float:
        return self.t0 + self.n_steps * self.dt

    @property
    def size(self) -> int:
        return self.n_steps + 1

    def covers(self, start: float, end: float, rtol: float = 1e-9) -> bool:
        scale = max(abs(start), abs(end), 1.0)
        return abs(self.t0 - start) <= rtol * scale and abs(self.t_end - end) <= rtol * scale

    def refine(self, factor: int) -> "TimeGrid":
        return TimeGrid(self.t0, self.dt / factor, self.n_steps * factor)

    def locate(self, t):
        """Left node index and linear weight for time(s) ``t``.

        Raises DomainError for times outside the grid (with a few-ulp slack).
        """
        t = np.asarray(t, dtype=float)
        slack = 1e-12 * max(abs(self.t0), abs(self.t_end), 1.0)
        if np.any(t < self.t0 - slack) or np.any(t > self.t_end + slack):
            raise DomainError(f"time outside grid [{self.t0}, {self.t_end}]")
        x = np.clip((t - self.t0) / self.dt, 0.0, float(self.n_steps))
        k = np.minimum(np.floor(x).astype(int), self.n_steps - 1)
        w = x - k
        # snap to a node when within rounding of it
        near = np.isclose(w, 1.0, rtol=0, atol=1e-9)
        k = np.where(near, k + 1, k)
        w = np.where(near, 0.0, w)
        w = np.where(np.isclose(w, 0.0, rtol=0, atol=1e-9), 0.0, w)
        return k, w


@dataclass(frozen=True, eq=False)
class SampledPath:
    """A real function sampled on every node of a ``TimeGrid``."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1 or v.size != self.grid.size:
            raise DomainError(
                f"path needs {self.grid.size} values for {self.grid.n_steps} steps, got shape {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise DomainError("path values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: TimeGrid, fn: Callable[[np.ndarray], np.ndarray]) -> "SampledPath":
        return cls(grid, np.broadcast_to(np.asarray(fn(grid.times), dtype=float), (grid.size,)))

    @classmethod
    def constant(cls, grid: TimeGrid, value: float) -> "SampledPath":
        return cls(grid, np.full(grid.size, float(value)))

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def __len__(self):
        return self.values.size

    def __getitem__(self, k):
        return self.values[k]

    def at(self, t):
        """Linear interpolation between neighbouring nodes (exact at nodes)."""
        k, w = self.grid.locate(t)
        v = self.values
        hi = np.minimum(k + 1, self.grid.n_steps)
        out = (1.0 - w) * v[k] + w * v[hi]
        return float(out) if np.ndim(out) == 0 else out

    def midpoints(self) -> np.ndarray:
        v = self.values
        return 0.5 * (v[:-1] + v[1:])

    def with_values(self, values) -> "SampledPath":
        return SampledPath(self.grid, values)

    def resample(self, grid: TimeGrid) -> "SampledPath":
        if grid == self.grid:
            return self
        return SampledPath(grid, self.at(grid.times))


def cumulative_trapezoid(y: np.ndarray, dx: float) -> np.ndarray:
    """Running trapezoid ``I_k = int_0^{t_k} y`` with ``I_0 = 0``."""
    y = np.asarray(y, dtype=float)
    out = np.empty_like(y)
    out[0] = 0.0
    np.cumsum(0.5 * dx * (y[1:] + y[:-1]), out=out[1:])
    return out


def reverse_cumulative_trapezoid(y: np.ndarray, dx: float) -> np.ndarray:
    """Running trapezoid from the right, ``R_k = int_{t_k}^{t_n} y``."""
    return cumulative_trapezoid(np.asarray(y, dtype=float)[::-1], dx)[::-1].copy()


def memory_integral(values: np.ndarray, dx: float) -> np.ndarray:
    """Trapezoid approximation of ``int_0^{t_k} (t_k - u) f(u) du`` at every node.

    Computed as ``t_k * I0_k - I1_k`` where ``I0`` and ``I1`` are the running
    trapezoids of ``f`` and ``u f``. Since the trapezoid rule is linear in its
    integrand this equals the trapezoid of the kernel ``(t_k - u) f(u)`` on
    nodes ``0..k``; it is exact for linear integrands.
    """
    f = np.asarray(values, dtype=float)
    u = dx * np.arange(f.size)
    return u * cumulative_trapezoid(f, dx) - cumulative_trapezoid(u * f, dx)
