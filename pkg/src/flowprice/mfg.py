"""Closed-form mean-field-game price formation.

Given a deterministic price path the representative trader's value function
is quadratic in inventory, ``V(t, q) = theta0(t) + theta1(t) q + theta2(t) q^2``.
The coefficients drive the optimal feedback rate, the mean inventory ``E``
and, through market clearing, the order flow ``Lambda``. Conversely a flow
path determines the formed price

    p(t) = p(0) + 2 phi E0 t - 2 phi int_0^t (t - u) Lambda(u) du + 2 kappa (Lambda(t) - Lambda(0)).

All path integrals use the trapezoidal rule on uniform grids.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateParameterError,
    DomainError,
    InvalidParameterError,
    UnsupportedRegimeError,
)
from .grid import (
    SampledPath,
    TimeGrid,
    cumulative_trapezoid,
    memory_integral,
    reverse_cumulative_trapezoid,
)


# below this gamma*T the phi terms are O((gamma T)^2) relative corrections
SMALL_GAMMA_T = 1e-8


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the linear-quadratic trading problem.

    kappa : temporary impact (price * time / shares), > 0
    phi   : running inventory penalty (urgency)
    A     : terminal inventory penalty
    sigma : inventory noise volatility, >= 0
    T     : horizon, > 0
    E0    : initial mean inventory
    """

    kappa: float
    phi: float
    A: float
    sigma: float = 0.0
    T: float = 1.0
    E0: float = 0.0

    def __post_init__(self):
        for name in ("kappa", "phi", "A", "sigma", "T", "E0"):
            value = getattr(self, name)
            if not isinstance(value, (int, float, np.floating, np.integer)) or not math.isfinite(value):
                raise InvalidParameterError(f"{name} must be a finite real, got {value!r}")
            object.__setattr__(self, name, float(value))
        if self.kappa <= 0:
            raise InvalidParameterError(f"kappa must be positive, got {self.kappa}")
        if self.T <= 0:
            raise InvalidParameterError(f"T must be positive, got {self.T}")
        if self.sigma < 0:
            raise InvalidParameterError(f"sigma must be non-negative, got {self.sigma}")
        if self.phi < 0 or self.A < 0:
            warnings.warn(
                f"phi={self.phi}, A={self.A}: outside the validated regime phi >= 0, A >= 0",
                RuntimeWarning,
                stacklevel=3,
            )

    @property
    def gamma(self) -> float:
        return math.sqrt(self.phi / self.kappa)

    @property
    def urgency_negligible(self) -> bool:
        """True when ``gamma T`` is so small that the ``phi = 0`` formulas are exact to rounding."""
        return self.phi == 0 or (self.phi > 0 and math.sqrt(self.phi / self.kappa) * self.T < SMALL_GAMMA_T)

    @property
    def root_kappa_phi(self) -> float:
        return math.sqrt(self.kappa * self.phi)

    def grid(self, n_steps: int) -> TimeGrid:
        return TimeGrid.covering(self.T, n_steps)


def _require_riccati_regime(params: ModelParams) -> None:
    if params.phi < 0:
        raise UnsupportedRegimeError(
            f"phi={params.phi} < 0 makes the Riccati rate sqrt(phi/kappa) complex; unsupported"
        )
    # theta2 stays finite on [0, T] iff the decay normaliser stays positive
    if params.urgency_negligible:
        den = params.kappa + params.A * params.T
    else:
        s = params.root_kappa_phi
        den = s + params.A * math.tanh(params.gamma * params.T)
    if den <= 0:
        raise UnsupportedRegimeError(
            f"A={params.A} makes theta2 blow up inside [0, T]; unsupported"
        )


def _check_times(params: ModelParams, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)):
        raise InvalidParameterError("times must be finite")
    slack = 1e-12 * max(params.T, 1.0)
    if np.any(t < -slack) or np.any(t > params.T + slack):
        raise DomainError(f"time outside [0, {params.T}]")
    return t


def theta2_at(params: ModelParams, t):
    """Quadratic value-function coefficient ``theta2(t)``.

    Uses ``-s (A + s tanh(g tau)) / (s + A tanh(g tau))`` with ``s = sqrt(kappa phi)``,
    ``g = sqrt(phi / kappa)`` and ``tau = T - t``; this equals the exponential
    form with constant ``c = (s + A)/(s - A)`` without its removable singularity
    at ``A = s``. For ``phi = 0`` the exact limit ``-A kappa / (kappa + A tau)``.
    """
    _require_riccati_regime(params)
    t = _check_times(params, t)
    tau = np.clip(params.T - t, 0.0, params.T)
    A, kappa = params.A, params.kappa
    if params.urgency_negligible:
        out = -A * kappa / (kappa + A * tau)
    else:
        s = params.root_kappa_phi
        th = np.tanh(params.gamma * tau)
        out = -s * (A + s * th) / (s + A * th)
    out = np.where(tau == 0, -A, out)
    return float(out) if out.ndim == 0 else out


def log_decay(params: ModelParams, tau):
    """``log D(tau)`` with ``d/dt log D(T - t) = theta2(t) / kappa``.

    ``D(tau) = cosh(g tau) + (A / s) sinh(g tau)`` for ``phi > 0`` and
    ``1 + A tau / kappa`` for ``phi = 0``; so
    ``exp(int_s^t theta2/kappa) = D(T - t) / D(T - s)``.
    """
    _require_riccati_regime(params)
    tau = np.asarray(tau, dtype=float)
    if params.urgency_negligible:
        out = np.log1p(params.A * tau / params.kappa)
    else:
        g = params.gamma
        ratio = params.A / params.root_kappa_phi
        out = g * tau + np.log(0.5 * (1 + ratio) + 0.5 * (1 - ratio) * np.exp(-2 * g * tau))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ThetaCoefficients:
    """``theta0, theta1, theta2`` on a shared grid, with the parameters that made them."""

    params: ModelParams
    theta0: SampledPath
    theta1: SampledPath
    theta2: SampledPath

    @property
    def grid(self) -> TimeGrid:
        return self.theta2.grid

    def value(self, t, q):
        return value_function(self, t, q)


@dataclass(frozen=True)
class MeanFieldState:
    """Mean inventory, mean marginal value and market supply rate."""

    E: SampledPath
    Pi: SampledPath
    Lambda: SampledPath
    thetas: ThetaCoefficients


@dataclass(frozen=True)
class PriceSlopes:
    d_kappa: float
    d_E0: float
    d_phi: float


def _rk4_linear(a, a_mid, b, b_mid, dt, y_start, backward=False):
    """RK4 for ``y' = a(t) y + b(t)`` with coefficients given at nodes and midpoints.

    Integrates forward from node 0 or backward from the last node.
    """
    a, b = a.tolist(), b.tolist()
    am, bm = a_mid.tolist(), b_mid.tolist()
    n = len(a) - 1
    y = [0.0] * (n + 1)
    if backward:
        h = -dt
        y[n] = yk = float(y_start)
        for k in range(n - 1, -1, -1):
            k1 = a[k + 1] * yk + b[k + 1]
            k2 = am[k] * (yk + 0.5 * h * k1) + bm[k]
            k3 = am[k] * (yk + 0.5 * h * k2) + bm[k]
            k4 = a[k] * (yk + h * k3) + b[k]
            yk = yk + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            y[k] = yk
    else:
        h = dt
        y[0] = yk = float(y_start)
        for k in range(n):
            k1 = a[k] * yk + b[k]
            k2 = am[k] * (yk + 0.5 * h * k1) + bm[k]
            k3 = am[k] * (yk + 0.5 * h * k2) + bm[k]
            k4 = a[k + 1] * (yk + h * k3) + b[k + 1]
            yk = yk + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            y[k + 1] = yk
    return np.array(y)


def _require_horizon_grid(params: ModelParams, path: SampledPath) -> TimeGrid:
    grid = path.grid
    if not grid.covers(0.0, params.T):
        raise DomainError(
            f"path grid [{grid.t0}, {grid.t_end}] does not cover [0, {params.T}]"
        )
    return grid


def solve_thetas(params: ModelParams, price: SampledPath) -> ThetaCoefficients:
    """Value-function coefficients for a deterministic price path.

    ``theta1`` is integrated backward with RK4 from ``theta1(T) = p(T)``
    (price and theta2 evaluated at step midpoints by linear interpolation and
    closed form respectively); ``theta0`` is the backward trapezoid of
    ``(theta1 - p)^2 / (4 kappa) + sigma^2 theta2``, the constant term the
    HJB equation leaves after substituting the quadratic ansatz.
    """
    grid = _require_horizon_grid(params, price)
    t = grid.times
    dt = grid.dt
    kappa = params.kappa

    th2 = np.asarray(theta2_at(params, t), dtype=float)
    th2_mid = np.asarray(theta2_at(params, t[:-1] + 0.5 * dt), dtype=float)
    p = price.values
    p_mid = price.midpoints()

    # theta1' = -(theta2 / kappa) (theta1 - p)
    a, a_mid = -th2 / kappa, -th2_mid / kappa
    th1 = _rk4_linear(a, a_mid, -a * p, -a_mid * p_mid, dt, p[-1], backward=True)
    th1[-1] = p[-1]

    running = (th1 - p) ** 2 / (4.0 * kappa)
    th0 = reverse_cumulative_trapezoid(running, dt)
    if params.sigma > 0:
        # int_t^T theta2 du in closed form
        tau = params.T - t
        th0 = th0 + params.sigma**2 * kappa * (log_decay(params, 0.0) - np.asarray(log_decay(params, tau)))
    th0[-1] = 0.0
    th2 = th2.copy()
    th2[-1] = -params.A
    return ThetaCoefficients(
        params,
        SampledPath(grid, th0),
        SampledPath(grid, th1),
        SampledPath(grid, th2),
    )


def value_function(thetas: ThetaCoefficients, t, q):
    """``theta0(t) + theta1(t) q + theta2(t) q^2`` (linear interpolation off-grid)."""
    q = np.asarray(q, dtype=float)
    out = thetas.theta0.at(t) + thetas.theta1.at(t) * q + thetas.theta2.at(t) * q**2
    return float(out) if np.ndim(out) == 0 else out


def optimal_rate(thetas: ThetaCoefficients, price: SampledPath, t, q):
    """Optimal feedback trading rate ``(theta1 - p)/(2 kappa) + theta2 q / kappa``."""
    kappa = thetas.params.kappa
    q = np.asarray(q, dtype=float)
    out = (thetas.theta1.at(t) - price.at(t)) / (2 * kappa) + thetas.theta2.at(t) * q / kappa
    return float(out) if np.ndim(out) == 0 else out


def induced_order_flow(params: ModelParams, price: SampledPath) -> MeanFieldState:
    """Mean inventory and market supply rate generated by optimal traders facing ``price``.

    ``E' = (theta1 + 2 theta2 E - p) / (2 kappa)`` is integrated forward from
    ``E0`` by RK4; ``Pi = theta1 + 2 theta2 E`` and ``Lambda = -E'`` is read off
    the right-hand side at each node.
    """
    thetas = solve_thetas(params, price)
    grid = price.grid
    dt, kappa = grid.dt, params.kappa
    th1, th2, p = thetas.theta1.values, thetas.theta2.values, price.values
    t_mid = grid.times[:-1] + 0.5 * dt
    th2_mid = np.asarray(theta2_at(params, t_mid), dtype=float)
    drift = (th1 - p) / (2 * kappa)
    drift_mid = (thetas.theta1.midpoints() - price.midpoints()) / (2 * kappa)
    E = _rk4_linear(th2 / kappa, th2_mid / kappa, drift, drift_mid, dt, params.E0)
    Pi = th1 + 2 * th2 * E
    Lam = -(Pi - p) / (2 * kappa)
    return MeanFieldState(
        SampledPath(grid, E), SampledPath(grid, Pi), SampledPath(grid, Lam), thetas
    )


def formed_price(params: ModelParams, flow: SampledPath, p0: float) -> SampledPath:
    """Formed price of an order-flow path (time measured from the grid start)."""
    if len(flow) == 0:
        raise DomainError("empty flow path")
    if not math.isfinite(p0):
        raise InvalidParameterError("p0 must be finite")
    lam = flow.values
    t = flow.times - flow.grid.t0
    memory = memory_integral(lam, flow.grid.dt)
    values = (
        p0
        + 2 * params.phi * params.E0 * t
        - 2 * params.phi * memory
        + 2 * params.kappa * (lam - lam[0])
    )
    return SampledPath(flow.grid, values)


def price_recursion(flow: SampledPath, p0: float, kappa: float, phi: float, E0: float) -> SampledPath:
    """Pathwise price from the increment form of the formed-price law.

    ``p_{k+1} = p_k + 2 phi (E0 - Ibar_k) dt + 2 kappa (Lambda_{k+1} - Lambda_k)`` where
    ``Ibar_k`` averages the running integral of ``Lambda`` at both step ends.
    Accepts ``kappa = 0`` and rough (e.g. random-walk) flows.
    """
    lam = flow.values
    dt = flow.grid.dt
    integral = cumulative_trapezoid(lam, dt)
    drift = 2 * phi * (E0 - 0.5 * (integral[:-1] + integral[1:])) * dt
    incr = drift + 2 * kappa * np.diff(lam)
    return SampledPath(flow.grid, p0 + np.concatenate(([0.0], np.cumsum(incr))))


def constant_price_flow(params: ModelParams, lambda0: float, n_steps: int = 1000,
                        consistent: bool = False) -> SampledPath:
    """Order flow paired with a constant price.

    Solves ``kappa Lambda'' = phi Lambda`` with ``Lambda(0) = lambda0`` and
    ``Lambda'(0) = phi E0 / kappa`` via ``Lambda0 exp(int_0^t g)``, where
    ``g(u) = gamma (beta e^{2 gamma u} - 1) / (beta e^{2 gamma u} + 1)`` and
    ``beta = (lambda0 sqrt(kappa) + sqrt(phi) E0) / (lambda0 sqrt(kappa) - sqrt(phi) E0)``.
    The integral of ``g`` is taken in closed form, giving
    ``Lambda0 (beta e^{gamma t} + e^{-gamma t}) / (beta + 1)``.

    Differentiating the formed-price law at ``t = 0`` instead gives
    ``Lambda'(0) = -phi E0 / kappa``; ``consistent=True`` uses that slope
    (``E0 -> -E0`` in ``beta`` and in the guard), and then ``formed_price``
    of the returned flow is constant. Both coincide when ``E0 = 0``.
    """
    if params.phi <= 0:
        raise UnsupportedRegimeError(f"constant-price flow needs phi > 0, got {params.phi}")
    lam0 = float(lambda0)
    if not math.isfinite(lam0):
        raise InvalidParameterError("lambda0 must be finite")
    e0 = -params.E0 if consistent else params.E0
    rk, rp = math.sqrt(params.kappa), math.sqrt(params.phi)
    plus = lam0 * rk + rp * e0
    minus = lam0 * rk - rp * e0
    if abs(minus) <= 1e-12 * max(abs(lam0 * rk), abs(rp * e0), 1e-300):
        sign = "+" if consistent else "-"
        raise DegenerateParameterError(
            f"Lambda0 sqrt(kappa) {sign} sqrt(phi) E0 = 0: closed form undefined"
        )
    grid = params.grid(n_steps)
    t = grid.times
    g = params.gamma
    # Lambda0 / (beta + 1) == minus / (2 sqrt(kappa)); beta Lambda0/(beta+1) == plus / (2 sqrt(kappa))
    values = (plus * np.exp(g * t) + minus * np.exp(-g * t)) / (2 * rk)
    values[0] = lam0
    return SampledPath(grid, values)


def compatibility_residual(params: ModelParams, flow: SampledPath, p0: float) -> SampledPath:
    """Gap in the compatibility condition for a candidate equilibrium flow.

    ``r = [theta1 + 2 theta2 E] - [p0 + 2 phi E0 t - 2 phi int (t-u) Lambda - 2 kappa Lambda(0)]``
    with ``p`` the formed price of ``flow``, thetas solved against ``p`` and
    ``E = E0 - int Lambda``. Zero (to discretisation error) iff ``flow`` clears.
    """
    _require_horizon_grid(params, flow)
    price = formed_price(params, flow, p0)
    thetas = solve_thetas(params, price)
    lam = flow.values
    dt = flow.grid.dt
    E = params.E0 - cumulative_trapezoid(lam, dt)
    lhs = thetas.theta1.values + 2 * thetas.theta2.values * E
    rhs = price.values - 2 * params.kappa * lam
    return SampledPath(flow.grid, lhs - rhs)


def comparative_statics(params: ModelParams, flow: SampledPath, t) -> PriceSlopes:
    """Analytic parameter sensitivities of the formed price at time ``t``."""
    k, w = flow.grid.locate(t)
    tt = float(np.asarray(t)) - flow.grid.t0
    memory = SampledPath(flow.grid, memory_integral(flow.values, flow.grid.dt))
    lam_t = flow.at(t)
    return PriceSlopes(
        d_kappa=2 * (lam_t - flow.values[0]),
        d_E0=2 * params.phi * tt,
        d_phi=2 * params.E0 * tt - 2 * memory.at(t),
    )


def optimal_trajectory(params: ModelParams, price: SampledPath, q0: float,
                       thetas: ThetaCoefficients | None = None) -> SampledPath:
    """Noise-free optimal inventory via the exponential-integrator closed form.

    ``q(t) = q0 e^{G(t)} + (1/2 kappa) int_0^t (theta1 - p)(s) e^{G(t) - G(s)} ds``
    with ``G(t) = int_0^t theta2 / kappa`` known in closed form.
    """
    if thetas is None:
        thetas = solve_thetas(params, price)
    t = price.times
    G = np.asarray(log_decay(params, params.T - t)) - log_decay(params, params.T)
    source = (thetas.theta1.values - price.values) / (2 * params.kappa) * np.exp(-G)
    values = np.exp(G) * (q0 + cumulative_trapezoid(source, price.grid.dt))
    return SampledPath(price.grid, values)
