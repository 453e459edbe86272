"""Finite-population price formation in expectation.

With a microstructural impact kernel that does not depend on the inner time
variable, the expected formed price of an N-trader market is the mean-field
formula plus the term ``-int_0^t xi_u Lambda_u du``. With ``xi = alpha / N``
and noiseless inventories the mean inventory solves

    2 kappa E'' + alpha (1 - 1/N) E' - 2 phi E = 0,  E(0) = E_N0,  kappa E'(T) + A E(T) = 0,

and the expected price collapses to ``p0 + alpha (E(t) - E(0))``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import (
    ConsistencyError,
    DegenerateBVPError,
    DomainError,
    InvalidParameterError,
    UnsupportedKernelError,
    UnsupportedRegimeError,
)
from .grid import SampledPath, TimeGrid, cumulative_trapezoid, memory_integral
from .mfg import ModelParams, formed_price

CONSTANT_OVER_U = "constant_over_u"
SCALED_ALPHA_OVER_N = "scaled_alpha_over_N"


@dataclass(frozen=True)
class MicroKernel:
    """Impact kernel ``xi_{t,u}``; only forms independent of ``u`` are reducible."""

    form: str
    values: SampledPath | None = None

    def __post_init__(self):
        if self.form == CONSTANT_OVER_U and self.values is None:
            raise InvalidParameterError("constant_over_u kernel needs a values path")

    @classmethod
    def constant_over_u(cls, values: SampledPath) -> "MicroKernel":
        return cls(CONSTANT_OVER_U, values)

    @classmethod
    def scaled_alpha_over_n(cls) -> "MicroKernel":
        return cls(SCALED_ALPHA_OVER_N)

    @classmethod
    def zero(cls, grid: TimeGrid) -> "MicroKernel":
        return cls(CONSTANT_OVER_U, SampledPath.constant(grid, 0.0))

    def sample(self, grid: TimeGrid, alpha: float, N: int) -> np.ndarray:
        if self.form == SCALED_ALPHA_OVER_N:
            return np.full(grid.size, alpha / N)
        if self.form == CONSTANT_OVER_U:
            return self.values.resample(grid).values
        raise UnsupportedKernelError(
            f"kernel form {self.form!r} is not reducible to xi_t; "
            f"use {CONSTANT_OVER_U!r} or {SCALED_ALPHA_OVER_N!r}"
        )


@dataclass(frozen=True)
class FinitePopParams:
    base: ModelParams
    N: int
    alpha: float = 0.0
    xi: MicroKernel = field(default_factory=MicroKernel.scaled_alpha_over_n)
    E_N0: float | None = None

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise InvalidParameterError(f"N must be an integer >= 1, got {self.N}")
        object.__setattr__(self, "N", int(self.N))
        if not math.isfinite(self.alpha) or self.alpha < 0:
            raise InvalidParameterError(f"alpha must be finite and >= 0, got {self.alpha}")
        if self.E_N0 is None:
            object.__setattr__(self, "E_N0", self.base.E0)
        elif not math.isfinite(self.E_N0):
            raise InvalidParameterError("E_N0 must be finite")
        if self.alpha > 0 and not self.base.A > self.alpha / (2 * self.N):
            warnings.warn(
                f"A={self.base.A} <= alpha/(2N)={self.alpha / (2 * self.N)}: "
                "individual payoffs are not strictly concave",
                RuntimeWarning,
                stacklevel=3,
            )

    @property
    def mfg_params(self) -> ModelParams:
        """Mean-field parameters with the population's initial mean inventory."""
        return replace(self.base, E0=self.E_N0)

    @property
    def nash_terminal_penalty(self) -> float:
        """Effective terminal penalty ``A - alpha/(2N)`` of the linear-impact payoff."""
        return self.base.A - self.alpha / (2 * self.N)


@dataclass(frozen=True)
class FinitePriceDecomposition:
    """Expected finite-population price and its additive terms (all on one grid)."""

    p0: float
    total: SampledPath
    term_inertia: SampledPath
    term_memory: SampledPath
    term_instant: SampledPath
    term_micro: SampledPath
    term_noise: SampledPath

    TERMS = ("term_inertia", "term_memory", "term_instant", "term_micro", "term_noise")

    @property
    def grid(self) -> TimeGrid:
        return self.total.grid

    def columns(self) -> dict[str, np.ndarray]:
        cols = {"time": self.grid.times, "total": self.total.values}
        for name in self.TERMS:
            cols[name] = getattr(self, name).values
        return cols


@dataclass(frozen=True)
class MeanInventorySolution:
    """Closed-form solution of the mean-inventory boundary-value problem.

    Distinct roots use the basis ``e^{r+ (t - T)}, e^{r- t}`` (bounded on
    ``[0, T]`` when ``r- <= 0 <= r+``); a repeated root uses ``(c1 + c2 t) e^{r t}``.
    """

    T: float
    r_plus: float
    r_minus: float
    c1: float
    c2: float
    repeated: bool

    def value(self, t):
        t = np.asarray(t, dtype=float)
        if self.repeated:
            r = self.r_plus
            return (self.c1 + self.c2 * t) * np.exp(r * t)
        return self.c1 * np.exp(self.r_plus * (t - self.T)) + self.c2 * np.exp(self.r_minus * t)

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        if self.repeated:
            r = self.r_plus
            return (self.c2 + r * (self.c1 + self.c2 * t)) * np.exp(r * t)
        return (self.c1 * self.r_plus * np.exp(self.r_plus * (t - self.T))
                + self.c2 * self.r_minus * np.exp(self.r_minus * t))


def _solve_2x2(M: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Gaussian elimination with full pivoting; raises on a (relatively) singular system."""
    M = np.array(M, dtype=float)
    rhs = np.array(rhs, dtype=float)
    scale = np.abs(M).max()
    if scale == 0:
        raise DegenerateBVPError("boundary system is identically zero")
    i, j = np.unravel_index(np.argmax(np.abs(M)), M.shape)
    rows = [i, 1 - i]
    cols = [j, 1 - j]
    P = M[np.ix_(rows, cols)]
    b = rhs[rows]
    m = P[1, 0] / P[0, 0]
    u22 = P[1, 1] - m * P[0, 1]
    det_rel = abs(P[0, 0] * u22) / scale**2
    if det_rel < 1e-14:
        raise DegenerateBVPError(f"boundary system singular (relative determinant {det_rel:.3e})")
    y2 = (b[1] - m * b[0]) / u22
    y1 = (b[0] - P[0, 1] * y2) / P[0, 0]
    x = np.empty(2)
    x[cols[0]] = y1
    x[cols[1]] = y2
    return x


def solve_mean_inventory(params: FinitePopParams, terminal_penalty: float | None = None) -> MeanInventorySolution:
    """Characteristic-root solution of the mean-inventory BVP.

    ``terminal_penalty`` overrides ``A`` in ``kappa E'(T) + A E(T) = 0``.
    """
    base = params.base
    kappa, phi, T = base.kappa, base.phi, base.T
    A = base.A if terminal_penalty is None else float(terminal_penalty)
    a = params.alpha * (1.0 - 1.0 / params.N)
    disc = a * a + 16.0 * kappa * phi
    if disc < 0:
        raise UnsupportedRegimeError("complex characteristic roots (phi < 0); unsupported")
    root = math.sqrt(disc)
    r_minus = (-a - root) / (4 * kappa)
    # product of roots is -phi/kappa; avoids cancellation in (-a + root)
    r_plus = (-phi / kappa) / r_minus if r_minus != 0 else (-a + root) / (4 * kappa)
    E0 = params.E_N0
    if abs(r_plus - r_minus) < 1e-10 * max(abs(r_plus), 1.0):
        r = 0.5 * (r_plus + r_minus)
        eT = math.exp(r * T)
        M = [[1.0, 0.0],
             [(kappa * r + A) * eT, (kappa * (1 + r * T) + A * T) * eT]]
        c1, c2 = _solve_2x2(M, [E0, 0.0])
        return MeanInventorySolution(T, r, r, c1, c2, True)
    M = [[math.exp(-r_plus * T), 1.0],
         [kappa * r_plus + A, (kappa * r_minus + A) * math.exp(r_minus * T)]]
    c1, c2 = _solve_2x2(M, [E0, 0.0])
    return MeanInventorySolution(T, r_plus, r_minus, c1, c2, False)


def mean_inventory_bvp(params: FinitePopParams, n_steps: int = 1000,
                       terminal_penalty: float | None = None) -> SampledPath:
    """Mean inventory of the noiseless N-player linear-impact game on ``[0, T]``."""
    sol = solve_mean_inventory(params, terminal_penalty)
    grid = params.base.grid(n_steps)
    values = sol.value(grid.times)
    values[0] = params.E_N0
    return SampledPath(grid, values)


def expected_formed_price(params: FinitePopParams, flow: SampledPath, p0: float) -> FinitePriceDecomposition:
    """Expected finite-population formed price, term by term.

    ``flow`` is the expected supply rate. Martingale and noise contributions
    start at zero and vanish in expectation; ``term_noise`` is kept as an
    explicit zero path so the decomposition mirrors the pathwise formula.
    """
    if len(flow) < 2:
        raise DomainError("flow must have at least two nodes")
    grid = flow.grid
    dt = grid.dt
    xi = params.xi.sample(grid, params.alpha, params.N)
    lam = flow.values
    t = grid.times - grid.t0
    base = params.base
    inertia = 2 * base.phi * params.E_N0 * t
    memory = -2 * base.phi * memory_integral(lam, dt)
    instant = 2 * base.kappa * (lam - lam[0])
    micro = -cumulative_trapezoid(xi * lam, dt)
    noise = np.zeros(grid.size)
    total = p0 + inertia + memory + instant + micro + noise
    path = lambda v: SampledPath(grid, v)  # noqa: E731
    return FinitePriceDecomposition(
        float(p0), path(total), path(inertia), path(memory), path(instant), path(micro), path(noise)
    )


def permanent_impact_sanity(params: FinitePopParams, p0: float, n_steps: int = 4000,
                            tol: float | None = 1e-6) -> SampledPath:
    """``p0 + alpha (E_N(t) - E_N(0))`` under linear permanent impact.

    The supply rate is ``-E_N'`` taken from the analytic derivative. Unless
    ``tol`` is None the expected-price decomposition is recomputed with
    ``xi = alpha/N`` and must agree within ``tol``.
    """
    params = replace(params, xi=MicroKernel.scaled_alpha_over_n())
    sol = solve_mean_inventory(params)
    grid = params.base.grid(n_steps)
    E = sol.value(grid.times)
    E[0] = params.E_N0
    closed = SampledPath(grid, p0 + params.alpha * (E - E[0]))
    if tol is not None:
        flow = SampledPath(grid, -sol.derivative(grid.times))
        decomposition = expected_formed_price(params, flow, p0)
        gap = np.max(np.abs(decomposition.total.values - closed.values))
        if gap > tol:
            raise ConsistencyError(
                f"expected formed price deviates from p0 + alpha (E_N - E_N(0)) by {gap:.3e}"
            )
    return closed


@dataclass(frozen=True)
class ConvergenceResult:
    Ns: np.ndarray
    errors: np.ndarray

    @property
    def scaled(self) -> np.ndarray:
        """``N * e_N``, constant when only the ``alpha/N`` term depends on N."""
        return self.Ns * self.errors

    def ratios(self) -> np.ndarray:
        return self.errors[1:] / self.errors[:-1]


def convergence_errors(template: FinitePopParams, Ns: Sequence[int],
                       limit_flow: SampledPath, p0: float,
                       flow_family: Callable[[int], SampledPath] | None = None) -> ConvergenceResult:
    """Sup-norm gap between expected N-player prices and the mean-field price.

    ``flow_family(N)`` gives the expected supply rate of the N-player market
    (default: ``limit_flow`` for every N). The kernel is ``alpha/N``.
    """
    Ns = [int(n) for n in Ns]
    if not Ns:
        raise DomainError("Ns must be non-empty")
    limit = formed_price(template.mfg_params, limit_flow, p0).values
    errors = []
    for n in Ns:
        params = replace(template, N=n, xi=MicroKernel.scaled_alpha_over_n())
        flow = limit_flow if flow_family is None else flow_family(n)
        expected = expected_formed_price(params, flow, p0).total.resample(limit_flow.grid)
        errors.append(float(np.max(np.abs(expected.values - limit))))
    return ConvergenceResult(np.array(Ns), np.array(errors))
