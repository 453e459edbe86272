"""Monte Carlo simulation of trader inventories, cash and wealth.

Inventories follow Euler-Maruyama ``q_{k+1} = q_k + nu_k dt + sigma dW_k``
with the control frozen over each step. Cash follows
``c_{k+1} = c_k - (pbar_k + kappa nu_k) nu_k dt`` with ``pbar_k`` the step
average of the (piecewise linear) price, which is the exact cash change for a
piecewise-constant control.

Random numbers: each path owns a Philox stream spawned from
``SeedSequence(seed)`` by path index; Gaussians come from numpy's
``Generator.standard_normal`` (ziggurat). Per path, the initial inventory is
drawn first, then the ``n_steps`` Brownian increments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError, UndefinedRatioError
from .finite_pop import FinitePopParams, solve_mean_inventory
from .grid import SampledPath, TimeGrid, cumulative_trapezoid
from .mfg import ModelParams, solve_thetas

ZERO = "zero"
FEEDBACK_OPTIMAL = "feedback_optimal"


@dataclass(frozen=True)
class SimConfig:
    seed: int
    n_paths: int
    grid: TimeGrid

    def __post_init__(self):
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise ConfigurationError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise ConfigurationError(f"n_paths must be >= 1, got {self.n_paths}")
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "n_paths", int(self.n_paths))

    def path_generators(self) -> list[np.random.Generator]:
        children = np.random.SeedSequence(self.seed).spawn(self.n_paths)
        return [np.random.Generator(np.random.Philox(child)) for child in children]


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    """Simulated paths, one row per trader. Shapes are ``(n_paths, n_steps + 1)``
    except ``noise`` (Brownian increments), which is ``(n_paths, n_steps)``."""

    grid: TimeGrid
    sigma: float
    kappa: float
    price: SampledPath
    inventories: np.ndarray
    cash: np.ndarray
    controls: np.ndarray
    noise: np.ndarray

    @property
    def n_paths(self) -> int:
        return self.inventories.shape[0]

    @property
    def wealth(self) -> np.ndarray:
        return self.cash + self.inventories * self.price.values

    def mean_inventory(self) -> SampledPath:
        return SampledPath(self.grid, self.inventories.mean(axis=0))

    def mean_control(self) -> SampledPath:
        return SampledPath(self.grid, self.controls.mean(axis=0))


@dataclass(frozen=True)
class PayoffEstimate:
    mean: float
    stderr: float
    samples: np.ndarray


def parse_q0_sampler(spec) -> Callable[[np.random.Generator], float]:
    """Initial-inventory distribution from a number or ``const:x``,
    ``normal:mean,std`` or ``uniform:low,high``."""
    if isinstance(spec, (int, float)) and math.isfinite(spec):
        value = float(spec)
        return lambda rng: value
    if not isinstance(spec, str) or ":" not in spec:
        raise ConfigurationError(f"invalid q0 sampler spec {spec!r}")
    kind, _, args = spec.partition(":")
    try:
        nums = [float(x) for x in args.split(",")]
    except ValueError:
        raise ConfigurationError(f"invalid q0 sampler arguments in {spec!r}") from None
    if not all(math.isfinite(x) for x in nums):
        raise ConfigurationError(f"non-finite q0 sampler arguments in {spec!r}")
    if kind == "const" and len(nums) == 1:
        return lambda rng: nums[0]
    if kind == "normal" and len(nums) == 2 and nums[1] >= 0:
        mean, std = nums
        return lambda rng: mean + std * rng.standard_normal()
    if kind == "uniform" and len(nums) == 2 and nums[0] <= nums[1]:
        low, high = nums
        return lambda rng: rng.uniform(low, high)
    raise ConfigurationError(f"invalid q0 sampler spec {spec!r}")


def _policy_rates(params, price, policy, n_paths, grid):
    """Return ``rate(k, q)`` for the chosen policy."""
    if isinstance(policy, str):
        if policy == ZERO:
            zeros = np.zeros(n_paths)
            return lambda k, q: zeros
        if policy == FEEDBACK_OPTIMAL:
            thetas = solve_thetas(params, price)
            offset = (thetas.theta1.values - price.values) / (2 * params.kappa)
            slope = thetas.theta2.values / params.kappa
            return lambda k, q: offset[k] + slope[k] * q
        raise ConfigurationError(f"unknown policy {policy!r}")
    table = np.asarray(policy, dtype=float)
    if table.shape == (grid.size,):
        table = np.broadcast_to(table, (n_paths, grid.size))
    if table.shape != (n_paths, grid.size) or not np.all(np.isfinite(table)):
        raise ConfigurationError(
            f"rate table must be finite with shape ({grid.size},) or ({n_paths}, {grid.size})"
        )
    return lambda k, q: table[:, k]


def simulate_population(params: ModelParams, price: SampledPath, policy, cfg: SimConfig,
                        q0_sampler=0.0, c0: float = 0.0) -> ParticleEnsemble:
    """Simulate ``cfg.n_paths`` traders under ``policy``.

    ``policy`` is ``"zero"``, ``"feedback_optimal"`` or a rate table of shape
    ``(n_steps + 1,)`` / ``(n_paths, n_steps + 1)``.
    """
    grid = cfg.grid
    if price.grid != grid:
        raise DomainError("price path must be sampled on the simulation grid")
    sampler = parse_q0_sampler(q0_sampler)
    rate = _policy_rates(params, price, policy, cfg.n_paths, grid)
    n, dt = grid.n_steps, grid.dt
    sqrt_dt = math.sqrt(dt)

    q0 = np.empty(cfg.n_paths)
    noise = np.empty((cfg.n_paths, n))
    for i, rng in enumerate(cfg.path_generators()):
        q0[i] = sampler(rng)
        noise[i] = sqrt_dt * rng.standard_normal(n)

    p = price.values
    p_bar = price.midpoints()
    q = np.empty((cfg.n_paths, n + 1))
    c = np.empty_like(q)
    nu = np.empty_like(q)
    q[:, 0] = q0
    c[:, 0] = c0
    sigma, kappa = params.sigma, params.kappa
    for k in range(n):
        nu[:, k] = rate(k, q[:, k])
        q[:, k + 1] = q[:, k] + nu[:, k] * dt + sigma * noise[:, k]
        c[:, k + 1] = c[:, k] - (p_bar[k] + kappa * nu[:, k]) * nu[:, k] * dt
    nu[:, n] = rate(n, q[:, n])
    return ParticleEnsemble(grid, sigma, kappa, price, q, c, nu, noise)


def estimate_payoff(params: ModelParams, price: SampledPath, ensemble: ParticleEnsemble) -> PayoffEstimate:
    """Monte Carlo payoff ``q_T (p_T - A q_T) - int (kappa nu^2 + phi q^2 + nu p) dt``.

    Controls are piecewise constant on each step (as simulated); the inventory
    penalty uses the trapezoid and the price the step average.
    """
    if price.grid != ensemble.grid:
        raise DomainError("price and ensemble grids differ")
    dt = ensemble.grid.dt
    q, nu = ensemble.inventories, ensemble.controls[:, :-1]
    trading = ((params.kappa * nu + price.midpoints()) * nu).sum(axis=1) * dt
    holding = params.phi * dt * (0.5 * q[:, 0] ** 2 + (q[:, 1:-1] ** 2).sum(axis=1) + 0.5 * q[:, -1] ** 2)
    qT = q[:, -1]
    samples = qT * (price.values[-1] - params.A * qT) - trading - holding
    n = samples.size
    stderr = float(samples.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return PayoffEstimate(float(samples.mean()), stderr, samples)


def inventory_noise_average(ensemble: ParticleEnsemble) -> tuple[SampledPath, SampledPath]:
    """Cross-path average of ``sigma W_t`` and its standard error at each node.

    Under symmetric information this is the sample analogue of the averaged
    noise martingale; its expectation is zero.
    """
    W = np.concatenate([np.zeros((ensemble.n_paths, 1)), np.cumsum(ensemble.noise, axis=1)], axis=1)
    X = ensemble.sigma * W
    n = ensemble.n_paths
    se = X.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(X.shape[1])
    return SampledPath(ensemble.grid, X.mean(axis=0)), SampledPath(ensemble.grid, se)


def clearing_residual(ensemble: ParticleEnsemble, flow: SampledPath) -> SampledPath:
    """Market-clearing gap ``mean_i nu_i + Lambda`` at each node."""
    if flow.grid != ensemble.grid:
        raise DomainError("flow and ensemble grids differ")
    return SampledPath(ensemble.grid, ensemble.controls.mean(axis=0) + flow.values)


def quadratic_variation(path: SampledPath) -> float:
    return float(np.sum(np.diff(path.values) ** 2))


def qv_ratio(p_path: SampledPath, lambda_path: SampledPath) -> float:
    """Discrete quadratic-variation ratio ``QV(p) / QV(Lambda)``; tends to ``4 kappa^2``."""
    if p_path.grid != lambda_path.grid:
        raise DomainError("paths must share a grid")
    qv_lam = quadratic_variation(lambda_path)
    if qv_lam == 0:
        raise UndefinedRatioError("order flow has zero quadratic variation")
    return quadratic_variation(p_path) / qv_lam


# -- N-player linear permanent impact (noiseless) --------------------------


@dataclass(frozen=True)
class LinearImpactPrice:
    """``p_t = base_t + alpha * mean_i q^i_t``."""

    base_price: SampledPath
    alpha: float

    def __call__(self, inventories: np.ndarray) -> np.ndarray:
        return self.base_price.values + self.alpha * inventories.mean(axis=0)


def agent_payoffs(params: FinitePopParams, price_map: LinearImpactPrice,
                  controls: np.ndarray, q0) -> np.ndarray:
    """Deterministic payoff of every agent for a control profile ``(N, n_steps + 1)``."""
    grid = price_map.base_price.grid
    controls = np.asarray(controls, dtype=float)
    if controls.shape != (params.N, grid.size):
        raise DomainError(f"controls must have shape ({params.N}, {grid.size})")
    q0 = np.broadcast_to(np.asarray(q0, dtype=float), (params.N,))
    dt = grid.dt
    q = q0[:, None] + np.apply_along_axis(cumulative_trapezoid, 1, controls, dt)
    p = price_map(q)
    b = params.base
    running = b.kappa * controls**2 + b.phi * q**2 + controls * p
    integral = dt * (0.5 * running[:, 0] + running[:, 1:-1].sum(axis=1) + 0.5 * running[:, -1])
    qT = q[:, -1]
    return qT * (p[-1] - b.A * qT) - integral


def gateaux_residual(params: FinitePopParams, price_map: LinearImpactPrice, candidate: np.ndarray,
                     direction, agent: int, eps_ladder: Sequence[float], q0=None) -> float:
    """Directional derivative of agent ``agent``'s payoff along ``direction``.

    One-sided difference quotients at the first two ladder steps are combined
    by Richardson extrapolation, which cancels the O(eps) curvature term of
    the quadratic payoff. Vanishes at a Nash equilibrium.
    """
    eps = [float(e) for e in eps_ladder]
    if len(eps) < 2 or eps[0] == eps[1] or 0.0 in eps[:2]:
        raise ConfigurationError("eps_ladder needs two distinct non-zero steps")
    if not 0 <= agent < params.N:
        raise DomainError(f"agent index {agent} out of range")
    q0 = params.E_N0 if q0 is None else q0
    candidate = np.asarray(candidate, dtype=float)
    w = np.asarray(direction, dtype=float)
    base = agent_payoffs(params, price_map, candidate, q0)[agent]

    def quotient(e):
        bumped = candidate.copy()
        bumped[agent] += e * w
        return (agent_payoffs(params, price_map, bumped, q0)[agent] - base) / e

    e1, e2 = eps[:2]
    d1, d2 = quotient(e1), quotient(e2)
    return (e1 * d2 - e2 * d1) / (e1 - e2)


def symmetric_equilibrium(params: FinitePopParams, n_steps: int) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric Nash profile of the noiseless linear-impact game.

    Every agent starts at ``E_N0`` and trades ``E_N'(t)``, where ``E_N`` solves
    the mean-inventory ODE with the terminal condition
    ``kappa E'(T) + (A - alpha/(2N)) E(T) = 0`` implied by the payoff.
    """
    sol = solve_mean_inventory(params, terminal_penalty=params.nash_terminal_penalty)
    grid = params.base.grid(n_steps)
    rate = sol.derivative(grid.times)
    return np.tile(rate, (params.N, 1)), np.full(params.N, params.E_N0)


def smooth_directions(grid: TimeGrid, count: int, seed: int, modes: int = 4) -> np.ndarray:
    """Random smooth perturbations (low-order sine series plus an affine part)."""
    rng = np.random.Generator(np.random.Philox(seed))
    s = (grid.times - grid.t0) / (grid.t_end - grid.t0)
    out = np.empty((count, grid.size))
    for j in range(count):
        a = rng.standard_normal(modes) / np.arange(1, modes + 1)
        b0, b1 = rng.standard_normal(2)
        out[j] = b0 + b1 * s + sum(a[m] * np.sin((m + 1) * np.pi * s) for m in range(modes))
    return out
