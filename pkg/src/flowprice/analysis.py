"""Per-window empirical pipeline: order-flow metrics, the six regressions, diagnostics."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import DomainError
from .orderflow import (
    BookTape, TradeTape, WindowGrid, lambda_series, midprice_series, ofi_series, trade_imbalance,
)
from .regress import (
    FitRecord, RegressionFit, adf_test, benchmark_fit, build_covariates, ols_fit, squared_rel_diff,
)

MODELS = ("mfg_ti", "mfg_ofi", "fin_ti", "fin_ofi", "bench_ti", "bench_ofi")


@dataclass(frozen=True, eq=False)
class WindowData:
    window: int
    times: np.ndarray  # seconds from the window start, left bucket edges
    ti: np.ndarray
    ofi: np.ndarray
    midprice: np.ndarray

    def metric(self, name: str) -> np.ndarray:
        return {"ti": self.ti, "ofi": self.ofi}[name]


@dataclass(frozen=True, eq=False)
class WindowResult:
    data: WindowData
    records: list
    fitted: dict  # model -> fitted series aligned with the regression target


def window_data(trades: TradeTape, book: BookTape, grid: WindowGrid, window: int) -> WindowData:
    return WindowData(
        window,
        grid.node_seconds(window)[:-1],
        trade_imbalance(trades, grid, window),
        ofi_series(book, grid, window),
        midprice_series(book, grid, window),
    )


def _adf(fit: RegressionFit, lags: int, regression: str):
    try:
        res = adf_test(fit.residuals, lags=lags, regression=regression)
    except DomainError:
        return None, None
    return res.statistic, res.reject_5pct


def analyze_window(data: WindowData, stock: str = "STOCK", day: str = "", adf_lags: int = 0,
                   adf_regression: str = "ct") -> WindowResult:
    """Fit every model on one window; records come back in ``MODELS`` order."""
    records, fitted = [], {}
    for model in MODELS:
        family, metric_name = model.split("_")
        metric = data.metric(metric_name)
        if family == "bench":
            fit = benchmark_fit(metric, data.midprice, which=metric_name.upper())
            target = np.diff(data.midprice)
            # the benchmark's price is the one-step prediction p_{k-1} + fitted change
            predicted = data.midprice[:-1] + fit.fitted(target)
            srd = squared_rel_diff(predicted, data.midprice[1:])[1]
        else:
            design = build_covariates(lambda_series(metric), data.times, include_s4=(family == "fin"),
                                      target=data.midprice)
            fit = ols_fit(design)
            target = data.midprice
            srd = squared_rel_diff(fit.fitted(target), data.midprice)[1]
        stat, reject = _adf(fit, adf_lags, adf_regression)
        flags = {"collinear": list(fit.collinear), "degenerate": fit.degenerate}
        records.append(FitRecord(stock, day, data.window, model, fit.coeff_dict(), float(fit.r2),
                                 float(fit.adj_r2), stat, reject, srd, flags))
        fitted[model] = fit.fitted(target)
    return WindowResult(data, records, fitted)


def analyze_day(trades: TradeTape, book: BookTape, grid: WindowGrid, stock: str = "STOCK", day: str = "",
                adf_lags: int = 0, adf_regression: str = "ct", jobs: int = 1) -> list[WindowResult]:
    """All windows of a day, returned sorted by window index whatever the worker count."""

    def run(w):
        return analyze_window(window_data(trades, book, grid, w), stock, day, adf_lags, adf_regression)

    windows = range(grid.n_windows)
    if jobs <= 1:
        results = [run(w) for w in windows]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, windows))
    return sorted(results, key=lambda r: r.data.window)


def plot_frame(result: WindowResult) -> pd.DataFrame:
    """Tidy per-window table for external plotting."""
    d = result.data
    frame = pd.DataFrame({"k": np.arange(d.ti.size), "t": d.times, "TI": d.ti, "OFI": d.ofi, "midprice": d.midprice})
    for model in MODELS:
        values = result.fitted[model]
        if model.startswith("bench"):
            # price-change models: pad the first point so columns align
            values = np.concatenate([[np.nan], values])
        frame[f"fitted_{model}"] = values
    return frame
