import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from flowprice import DomainError, UnderdeterminedError
from flowprice.regress import (
    DesignMatrix, FitRecord, adf_critical_value, adf_test, aggregate_report, benchmark_fit,
    build_covariates, ols_fit, report_table, squared_rel_diff,
)
from flowprice.synthetic import FormedPriceTruth, formed_price_series, random_flow

from oracles import memory_trapezoid_loop, ols_normal_equations

sm = pytest.importorskip("statsmodels.api")
from statsmodels.tsa.stattools import adfuller  # noqa: E402


def design(X, names=None):
    X = np.asarray(X, dtype=float)
    return DesignMatrix(tuple(names or [f"x{j}" for j in range(X.shape[1])]), X)


class TestCovariates:
    def test_columns(self):
        t = np.arange(6) * 10.0
        lam = np.array([1.0, -2, 3, 0, 5, 1])
        d = build_covariates(lam, t, include_s4=True)
        assert d.names == ("S0", "S1", "S2", "S3", "S4")
        assert np.allclose(d.column("S2"), memory_trapezoid_loop(lam, t), atol=1e-12)
        assert d.column("S4")[-1] == pytest.approx(10.0 * (0.5 * 1 - 2 + 3 + 0 + 5 + 0.5 * 1))

    def test_non_uniform_times(self):
        with pytest.raises(DomainError):
            build_covariates([1.0, 2.0, 3.0], [0.0, 1.0, 3.0])

    def test_too_short(self):
        with pytest.raises(DomainError):
            build_covariates([1.0], [0.0])


class TestOLS:
    def test_matches_statsmodels(self):
        rng = np.random.default_rng(0)
        X = np.column_stack([np.ones(80), rng.standard_normal((80, 3))])
        y = X @ [1.0, 2.0, -1.0, 0.5] + 0.3 * rng.standard_normal(80)
        fit = ols_fit(design(X), y)
        ref = sm.OLS(y, X).fit()
        assert np.allclose(fit.coeffs, ref.params, rtol=1e-10, atol=1e-12)
        assert np.allclose(fit.stderr, ref.bse, rtol=1e-9)
        assert fit.r2 == pytest.approx(ref.rsquared, rel=1e-12)
        assert fit.adj_r2 == pytest.approx(ref.rsquared_adj, rel=1e-12)
        assert np.allclose(fit.coeffs, ols_normal_equations(X, y), rtol=1e-8)

    def test_badly_scaled_columns(self):
        # covariate magnitudes in the regression span ~1e-2 .. 1e7
        rng = np.random.default_rng(1)
        X = np.column_stack([np.ones(200), 1e7 * rng.random(200), 1e-2 * rng.standard_normal(200)])
        beta = np.array([3.0, 2e-7, 50.0])
        fit = ols_fit(design(X), X @ beta)
        assert np.allclose(fit.coeffs, beta, rtol=1e-8)

    def test_collinear_column_flagged(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal(30)
        X = np.column_stack([np.ones(30), x, 2 * x])
        fit = ols_fit(design(X, ["c", "x", "x2"]), 1 + x)
        assert fit.rank == 2 and len(fit.collinear) == 1
        assert math.isinf(fit.se(fit.collinear[0]))
        assert np.allclose(fit.residuals, 0, atol=1e-12)

    def test_constant_target(self):
        X = np.column_stack([np.ones(10), np.arange(10.0)])
        fit = ols_fit(design(X), np.full(10, 4.0))
        assert fit.degenerate and fit.r2 == 0.0

    def test_underdetermined(self):
        with pytest.raises(UnderdeterminedError):
            ols_fit(design(np.eye(3)), np.ones(3))

    def test_non_finite(self):
        with pytest.raises(DomainError):
            design([[1.0, np.nan], [1.0, 2.0]])

    @given(arrays(np.float64, (25, 4), elements=st.floats(-100, 100)), arrays(np.float64, 25, elements=st.floats(-100, 100)))
    @settings(max_examples=80, deadline=None)
    def test_nested_r2_monotone(self, Z, y):
        X = np.column_stack([np.ones(25), Z])
        r2 = [ols_fit(design(X[:, :k]), y).r2 for k in range(1, 6)]
        assert all(b >= a - 1e-9 for a, b in zip(r2, r2[1:]))
        assert all(-1e-9 <= r <= 1 + 1e-9 for r in r2)


class TestBenchmark:
    def test_exact_recovery(self):
        metric = np.array([0.0, 3, -1, 4, 1, -5, 9, 2])
        mid = np.concatenate([[10.0], 10.0 + np.cumsum(0.1 + 0.02 * metric[1:])])
        fit = benchmark_fit(metric, mid, "OFI")
        assert fit.names == ("c0", "c1_OFI")
        assert fit.coef("c0") == pytest.approx(0.1) and fit.coef("c1_OFI") == pytest.approx(0.02)

    def test_misaligned(self):
        with pytest.raises(DomainError):
            benchmark_fit([1.0, 2.0], [1.0, 2.0, 3.0])


class TestADF:
    def test_pinned_value(self):
        for n in (200, 250, 300):
            assert adf_critical_value(n) == -3.43
        assert adf_critical_value(250, "c") == -2.88
        assert -3.50 < adf_critical_value(60) < -3.45
        assert adf_critical_value(10**7) == pytest.approx(-3.41, abs=1e-4)

    @pytest.mark.parametrize("regression,lags", [("ct", 0), ("c", 0), ("ct", 2)])
    def test_statistic_matches_statsmodels(self, regression, lags):
        y = np.cumsum(np.random.default_rng(3).standard_normal(250))
        ours = adf_test(y, lags=lags, regression=regression)
        ref = adfuller(y, maxlag=lags, autolag=None, regression=regression)[0]
        assert ours.statistic == pytest.approx(ref, rel=1e-9)

    def test_stationary_rejected(self):
        y = np.random.default_rng(4).standard_normal(250)
        assert adf_test(y).reject_5pct

    def test_scale_invariance(self):
        y = np.cumsum(np.random.default_rng(5).standard_normal(250))
        a = adf_test(y).statistic
        for c in (1e-6, 1e6):
            assert abs(adf_test(c * y).statistic - a) < 1e-10 * max(1, abs(a))

    @pytest.mark.parametrize("y", [np.ones(50), np.arange(5.0)])
    def test_degenerate(self, y):
        with pytest.raises(DomainError):
            adf_test(y)


class TestRecovery:
    def test_synthetic_formed_price(self):
        truth = FormedPriceTruth(kappa=5e-5, phi=1e-10, E0=1e5, tau=1e-3)
        z3, z2 = [], []
        for seed in range(20):
            rng = np.random.default_rng(seed)
            t = 10.0 * np.arange(180)
            lam = random_flow(rng, 180).astype(float)
            p = formed_price_series(lam, t, truth, 100.0, rng)
            fit = ols_fit(build_covariates(lam, t, target=p))
            z3.append((fit.coef("S3") - truth.a3) / fit.se("S3"))
            z2.append((fit.coef("S2") - truth.a2) / fit.se("S2"))
        assert np.mean(np.abs(z3) < 3) > 0.85 and np.mean(np.abs(z2) < 3) > 0.85
        assert abs(np.mean(z3)) < 1.0 and abs(np.mean(z2)) < 1.0


class TestReport:
    def records(self):
        out = []
        for day, r2s in (("2014-11-03", [0.5, 0.7]), ("2014-11-04", [0.6])):
            for w, r2 in enumerate(r2s):
                out.append(FitRecord("GOOG", day, w, "mfg_ti", {"S3": 2 * r2}, r2, r2 - 0.01, -4.0, True, 1e-7))
        return out

    def test_aggregate(self):
        summary = aggregate_report(self.records())
        row = summary[(summary.quantity == "r2")].iloc[0]
        assert row["mean"] == pytest.approx(0.6) and row["std"] == pytest.approx(0.1) and row["count"] == 3

    def test_order_independent(self):
        recs = self.records()
        a = aggregate_report(recs)
        b = aggregate_report(recs[::-1])
        pd.testing.assert_frame_equal(a, b)

    def test_single_fit_std_zero(self):
        summary = aggregate_report(self.records()[:1])
        assert (summary["std"] == 0).all()

    def test_empty(self):
        with pytest.raises(DomainError):
            aggregate_report([])

    def test_json_round_trip(self):
        rec = self.records()[0]
        assert FitRecord.from_json(rec.to_json()) == rec

    def test_wide_table(self):
        wide = report_table(aggregate_report(self.records()))
        assert {"mfg_ti", "mfg_ti_std"} <= set(wide.columns)

    def test_squared_rel_diff(self):
        series, mean = squared_rel_diff([1.1, 2.0], [1.0, 2.0])
        assert series[0] == pytest.approx(0.01) and mean == pytest.approx(0.005)
        with pytest.raises(DomainError):
            squared_rel_diff([1.0], [0.0])
