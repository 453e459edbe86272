"""Covariates, least-squares fits, Dickey-Fuller diagnostics and report aggregation.

The formed-price regression is

    p_k = a0 + a1 * S1_k + a2 * S2_k + a3 * S3_k (+ a4 * S4_k) + noise

with ``S1 = t``, ``S2 = int_{T_i}^{t} (t - u) Lambda(u) du``, ``S3 = Lambda(t)`` and,
for the finite-population variant, ``S4 = int_{T_i}^{t} Lambda(u) du``. Under the
mean-field model the coefficients are ``a1 = 2 phi E0``, ``a2 = -2 phi`` and
``a3 = 2 kappa``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import pandas as pd
from scipy import linalg

from .errors import DomainError, UnderdeterminedError
from .grid import cumulative_trapezoid, memory_integral

COLLINEARITY_RATIO = 1e-10
ADF_LEVEL_5PCT = {
    # 5% Dickey-Fuller critical values by sample size (constant / constant + trend)
    "c": {25: -3.00, 50: -2.93, 100: -2.89, 250: -2.88, 500: -2.87, math.inf: -2.86},
    "ct": {25: -3.60, 50: -3.50, 100: -3.45, 250: -3.43, 500: -3.42, math.inf: -3.41},
}
ADF_PINNED_RANGE = (200, 300)


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    names: tuple[str, ...]
    X: np.ndarray
    target: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.names):
            raise DomainError("design matrix shape does not match its column names")
        if not np.all(np.isfinite(X)):
            raise DomainError("design matrix has non-finite entries")
        object.__setattr__(self, "X", X)
        if self.target is not None:
            y = np.asarray(self.target, dtype=float)
            if y.shape != (X.shape[0],):
                raise DomainError(f"target length {y.size} does not match {X.shape[0]} rows")
            if not np.all(np.isfinite(y)):
                raise DomainError("target has non-finite entries")
            object.__setattr__(self, "target", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.names.index(name)]

    def with_target(self, y) -> "DesignMatrix":
        return DesignMatrix(self.names, self.X, y)


def build_covariates(lam, times, include_s4: bool = False, target=None) -> DesignMatrix:
    """Regressors ``S0..S3`` (and ``S4``) from an order-flow series on uniform times."""
    lam = np.asarray(lam, dtype=float)
    t = np.asarray(times, dtype=float)
    if lam.ndim != 1 or lam.size < 2:
        raise DomainError("need at least two points to build covariates")
    if t.shape != lam.shape:
        raise DomainError("times and order flow differ in length")
    steps = np.diff(t)
    dt = steps[0]
    if dt <= 0 or not np.allclose(steps, dt, rtol=1e-9, atol=0):
        raise DomainError("covariate times must be uniformly spaced and increasing")
    columns = {
        "S0": np.ones_like(t),
        "S1": t,
        "S2": memory_integral(lam, dt),
        "S3": lam,
    }
    if include_s4:
        columns["S4"] = cumulative_trapezoid(lam, dt)
    return DesignMatrix(tuple(columns), np.column_stack(list(columns.values())), target)


@dataclass(frozen=True, eq=False)
class RegressionFit:
    names: tuple[str, ...]
    coeffs: np.ndarray
    stderr: np.ndarray
    residuals: np.ndarray
    r2: float
    adj_r2: float
    n: int
    p: int
    rank: int
    collinear: tuple[str, ...] = ()
    degenerate: bool = False

    def coef(self, name: str) -> float:
        return float(self.coeffs[self.names.index(name)])

    def se(self, name: str) -> float:
        return float(self.stderr[self.names.index(name)])

    def fitted(self, target) -> np.ndarray:
        return np.asarray(target, dtype=float) - self.residuals

    def coeff_dict(self) -> dict[str, float]:
        return {name: float(c) for name, c in zip(self.names, self.coeffs)}


def ols_fit(design: DesignMatrix, y=None) -> RegressionFit:
    """Least squares by column-pivoted QR on unit-norm columns.

    Columns whose pivoted diagonal falls below ``COLLINEARITY_RATIO`` times the
    leading one are declared dependent; they get coefficient zero (and an
    infinite standard error) and are listed in ``collinear``. ``r2`` is taken
    against the intercept-only baseline; a constant target yields ``r2 = 0``
    and ``degenerate = True``.
    """
    y = design.target if y is None else np.asarray(y, dtype=float)
    if y is None:
        raise DomainError("no regression target")
    X = design.X
    n, p = X.shape
    if y.shape != (n,) or not np.all(np.isfinite(y)):
        raise DomainError("target must be finite and match the design rows")
    if n <= p:
        raise UnderdeterminedError(f"{n} observations for {p} regressors")

    scale = np.sqrt(np.einsum("ij,ij->j", X, X))
    scale[scale == 0] = 1.0
    Q, R, piv = linalg.qr(X / scale, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > COLLINEARITY_RATIO * diag[0])) if diag[0] > 0 else 0
    keep = piv[:rank]

    coeffs = np.zeros(p)
    stderr = np.full(p, np.inf)
    if rank:
        R11 = R[:rank, :rank]
        b = linalg.solve_triangular(R11, Q[:, :rank].T @ y)
        coeffs[keep] = b / scale[keep]
    residuals = y - X @ coeffs
    rss = float(residuals @ residuals)
    dof = n - rank
    if rank:
        s2 = rss / dof
        Rinv = linalg.solve_triangular(R11, np.eye(rank))
        stderr[keep] = np.sqrt(s2 * np.einsum("ij,ij->i", Rinv, Rinv)) / scale[keep]

    centred = y - y.mean()
    sst = float(centred @ centred)
    degenerate = sst == 0.0 or sst <= (1e-28 * float(y @ y))
    r2 = 0.0 if degenerate else 1.0 - rss / sst
    adj_r2 = 1.0 - (1.0 - r2) * (n - 1) / (n - p)
    collinear = tuple(design.names[j] for j in sorted(piv[rank:]))
    return RegressionFit(design.names, coeffs, stderr, residuals, r2, adj_r2, n, p, rank, collinear, degenerate)


def price_differences(midprice) -> np.ndarray:
    return np.diff(np.asarray(midprice, dtype=float))


def benchmark_fit(metric, midprice, which: str = "TI") -> RegressionFit:
    """Regress price changes ``p_k - p_{k-1}`` on ``{1, metric_k}`` for ``k >= 1``."""
    metric = np.asarray(metric, dtype=float)
    midprice = np.asarray(midprice, dtype=float)
    if metric.shape != midprice.shape:
        raise DomainError("metric and midprice series are not aligned")
    X = np.column_stack([np.ones(metric.size - 1), metric[1:]])
    return ols_fit(DesignMatrix(("c0", f"c1_{which}"), X, price_differences(midprice)))


# -- Dickey-Fuller ---------------------------------------------------------


@dataclass(frozen=True)
class AdfResult:
    statistic: float
    lags: int
    n: int
    critical_5pct: float
    regression: str

    @property
    def reject_5pct(self) -> bool:
        return self.statistic < self.critical_5pct


def adf_critical_value(n: int, regression: str = "ct") -> float:
    """5% critical value; pinned to the n=250 entry on ``ADF_PINNED_RANGE``,
    otherwise linearly interpolated in ``1/n`` between table rows."""
    table = ADF_LEVEL_5PCT[regression]
    lo, hi = ADF_PINNED_RANGE
    if lo <= n <= hi:
        return table[250]
    sizes = sorted(table)
    inv = np.array([0.0 if s == math.inf else 1.0 / s for s in sizes])[::-1]
    vals = np.array([table[s] for s in sizes])[::-1]
    return float(np.interp(1.0 / n, inv, vals))


def adf_test(y, lags: int = 0, regression: str = "ct") -> AdfResult:
    """Augmented Dickey-Fuller t-statistic on the lagged level.

    Regresses ``dy_t`` on a constant, a linear trend (``regression="ct"``), the
    lagged level ``y_{t-1}`` and ``lags`` lagged differences.
    """
    if regression not in ADF_LEVEL_5PCT:
        raise DomainError(f"regression must be 'c' or 'ct', got {regression!r}")
    if int(lags) != lags or lags < 0:
        raise DomainError(f"lags must be a non-negative integer, got {lags}")
    lags = int(lags)
    y = np.asarray(y, dtype=float)
    n = y.size
    if n <= lags + 10:
        raise DomainError(f"series of length {n} too short for {lags} lags")
    if not np.all(np.isfinite(y)):
        raise DomainError("series has non-finite entries")
    if np.ptp(y) == 0:
        raise DomainError("constant series: lagged level has zero variance")
    dy = np.diff(y)
    rows = slice(lags, n - 1)
    cols = {"const": np.ones(n - 1 - lags)}
    if regression == "ct":
        cols["trend"] = np.arange(lags + 1, n, dtype=float)
    cols["level"] = y[:-1][rows]
    for j in range(1, lags + 1):
        cols[f"dlag{j}"] = dy[lags - j: n - 1 - j]
    fit = ols_fit(DesignMatrix(tuple(cols), np.column_stack(list(cols.values())), dy[rows]))
    if "level" in fit.collinear:
        raise DomainError("lagged level is collinear with the deterministic terms")
    stat = fit.coef("level") / fit.se("level")
    return AdfResult(float(stat), lags, n, adf_critical_value(n, regression), regression)


# -- comparison metrics and reporting --------------------------------------


def squared_rel_diff(model, midprice) -> tuple[np.ndarray, float]:
    model = np.asarray(model, dtype=float)
    midprice = np.asarray(midprice, dtype=float)
    if model.shape != midprice.shape:
        raise DomainError("model and midprice series are not aligned")
    zeros = np.flatnonzero(midprice == 0)
    if zeros.size:
        raise DomainError(f"midprice is zero at index {zeros[0]}")
    series = ((model - midprice) / midprice) ** 2
    return series, math.fsum(series) / series.size


@dataclass(frozen=True)
class FitRecord:
    """One fitted model on one window, flattened for aggregation and JSON output."""

    stock: str
    day: str
    window: int
    model: str
    coeffs: dict
    r2: float
    adj_r2: float
    adf: float | None = None
    adf_reject: bool | None = None
    sq_rel_diff: float | None = None
    flags: dict = field(default_factory=dict)

    def quantities(self) -> dict[str, float]:
        out = {f"coef_{k}": v for k, v in self.coeffs.items()}
        out["r2"] = self.r2
        out["adj_r2"] = self.adj_r2
        if self.adf is not None:
            out["adf"] = self.adf
        if self.sq_rel_diff is not None:
            out["sq_rel_diff"] = self.sq_rel_diff
        return out

    def to_json(self) -> dict:
        return {
            "stock": self.stock, "day": self.day, "window": self.window, "model": self.model,
            "coeffs": self.coeffs, "r2": self.r2, "adj_r2": self.adj_r2,
            "adf": None if self.adf is None else {"statistic": self.adf, "reject_5pct": self.adf_reject},
            "sq_rel_diff": self.sq_rel_diff, "flags": self.flags,
        }

    @classmethod
    def from_json(cls, d: dict) -> "FitRecord":
        adf = d.get("adf") or {}
        return cls(d["stock"], d["day"], int(d["window"]), d["model"], dict(d["coeffs"]),
                   float(d["r2"]), float(d["adj_r2"]), adf.get("statistic"), adf.get("reject_5pct"),
                   d.get("sq_rel_diff"), dict(d.get("flags", {})))


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    n = len(values)
    mean = math.fsum(values) / n
    if n == 1:
        return mean, 0.0
    return mean, math.sqrt(math.fsum((v - mean) ** 2 for v in values) / (n - 1))


def aggregate_report(records: Iterable[FitRecord]) -> pd.DataFrame:
    """Mean and sample standard deviation of every fitted quantity per stock and model.

    Values are gathered in canonical (day, window) order and summed with
    ``math.fsum``, so the table does not depend on the order fits arrive in.
    """
    records = sorted(records, key=lambda r: (r.stock, r.model, r.day, r.window))
    if not records:
        raise DomainError("no fits to aggregate")
    groups: dict[tuple[str, str, str], list[float]] = {}
    for rec in records:
        for name, value in rec.quantities().items():
            if value is not None and math.isfinite(value):
                groups.setdefault((rec.stock, rec.model, name), []).append(float(value))
    rows = []
    for (stock, model, name), values in sorted(groups.items()):
        mean, std = _mean_std(values)
        rows.append({"stock": stock, "model": model, "quantity": name, "mean": mean, "std": std, "count": len(values)})
    return pd.DataFrame(rows, columns=["stock", "model", "quantity", "mean", "std", "count"])


def report_table(summary: pd.DataFrame) -> pd.DataFrame:
    """Wide layout: one row per (stock, quantity), a mean and a std column per model."""
    wide = summary.pivot_table(index=["stock", "quantity"], columns="model", values=["mean", "std"], aggfunc="first")
    models = sorted(summary["model"].unique())
    out = pd.DataFrame(index=wide.index)
    for m in models:
        out[m] = wide["mean"][m]
        out[f"{m}_std"] = wide["std"][m]
    return out.reset_index()
