"""Windowed regressions on a synthetic trading day whose midprice follows the formed price."""

# %% setup
import numpy as np

from flowprice.analysis import analyze_day
from flowprice.regress import aggregate_report, report_table
from flowprice.synthetic import synthetic_day

day = synthetic_day(seed=0)
print(f"{len(day.trades)} trades, {len(day.book)} book snapshots, {day.grid.n_windows} windows")
print("true a3 = 2 kappa =", day.truth.a3, "  true a2 = -2 phi =", day.truth.a2)

# %% fit the six models on every window
results = analyze_day(day.trades, day.book, day.grid, stock="SYNTH", day="2014-11-03", jobs=4)
records = [r for res in results for r in res.records]

a3 = np.array([r.coeffs["S3"] for r in records if r.model == "mfg_ti"])
print(f"a3 across windows: mean {a3.mean():.4e}, std {a3.std(ddof=1):.1e}")

# %% summary table: mean R^2 per model
summary = aggregate_report(records)
r2 = summary[summary.quantity == "r2"].set_index("model")["mean"]
print(r2.round(4).to_string())

# %% the same numbers in the wide report layout written by `flowprice analyze`
wide = report_table(summary)
print(wide[wide.quantity.isin(["r2", "adj_r2", "sq_rel_diff"])].to_string(index=False))
