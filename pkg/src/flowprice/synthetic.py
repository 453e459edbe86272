"""Synthetic trading days whose midprice obeys the formed-price formula exactly (plus noise).

Within window ``i`` the order flow is ``Lambda_k = -TI_k`` and the midprice at
the right end of bucket ``k`` is

    p_k = p_i + 2 phi E0 t_k - 2 phi S2_k + 2 kappa (Lambda_k - Lambda_0) + tau * eps_k

with ``t_k`` in seconds from the window start, so a regression of the midprice
on the standard covariates should return ``a2 = -2 phi`` and ``a3 = 2 kappa``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import memory_integral
from .orderflow import BookTape, TradeTape, WindowGrid, build_windows

SPREAD = 0.01
MS = 1_000_000  # trade times are whole milliseconds so ISO output is lossless


@dataclass(frozen=True)
class FormedPriceTruth:
    kappa: float
    phi: float
    E0: float
    tau: float

    @property
    def a2(self) -> float:
        return -2.0 * self.phi

    @property
    def a3(self) -> float:
        return 2.0 * self.kappa


def formed_price_series(lam, times, truth: FormedPriceTruth, level: float, rng=None) -> np.ndarray:
    """Formed-price target on a window, with ``N(0, tau^2)`` noise when ``rng`` is given."""
    lam = np.asarray(lam, dtype=float)
    t = np.asarray(times, dtype=float)
    dt = t[1] - t[0]
    p = level + 2 * truth.phi * truth.E0 * t - 2 * truth.phi * memory_integral(lam, dt) \
        + 2 * truth.kappa * (lam - lam[0])
    if rng is not None and truth.tau > 0:
        p = p + truth.tau * rng.standard_normal(p.size)
    return p


def random_flow(rng, n: int, scale: float = 200.0) -> np.ndarray:
    """Integer order-flow series: a slow sinusoid plus an AR(1) wobble."""
    k = np.arange(n)
    phase, cycles = rng.uniform(0, 2 * np.pi), rng.uniform(0.5, 2.0)
    ar = np.empty(n)
    ar[0] = rng.standard_normal()
    for j in range(1, n):
        ar[j] = 0.8 * ar[j - 1] + rng.standard_normal()
    return np.round(scale * np.sin(2 * np.pi * cycles * k / n + phase) + 0.25 * scale * ar).astype(np.int64)


@dataclass(frozen=True, eq=False)
class SyntheticDay:
    grid: WindowGrid
    trades: TradeTape
    book: BookTape
    truth: FormedPriceTruth
    flows: list = field(default_factory=list)
    midprices: list = field(default_factory=list)


def synthetic_day(seed: int = 0, day_start: str = "2014-11-03T09:30:00", day_len="6h",
                  window_len="30min", subinterval="10s", kappa: float = 5e-5, phi: float = 1e-10,
                  E0: float = 1e5, tau: float = 1e-3, p_start: float = 100.0) -> SyntheticDay:
    """Trades and snapshots for a day on which the midprice follows the formed price.

    Every node carries a book snapshot; bucket ``k`` gets a buy and (usually) a
    sell whose difference is ``TI_k``, plus one quantity-only snapshot inside
    the bucket so OFI is non-trivial.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    grid = build_windows(day_start, day_len, window_len, subinterval)
    truth = FormedPriceTruth(kappa, phi, E0, tau)
    n = grid.n_buckets
    sub = grid.subinterval

    trade_rows: list[tuple[int, float, int, int]] = []
    snaps: list[tuple[int, float, int, int]] = [(grid.day_start, p_start, *rng.integers(1, 500, 2))]
    flows, mids = [], []
    level = p_start
    for w in range(grid.n_windows):
        nodes = grid.nodes(w)
        times = grid.node_seconds(w)[:-1]
        lam = random_flow(rng, n)
        mid = formed_price_series(lam, times, truth, level, rng)
        flows.append(lam)
        mids.append(mid)
        prev_mid = snaps[-1][1]
        for k in range(n):
            ti = -int(lam[k])
            extra = int(rng.integers(0, 60))
            buy, sell = (ti + extra, extra) if ti >= 0 else (extra, extra - ti)
            for vol, sign in ((buy, 1), (sell, -1)):
                if vol > 0:
                    # the last bucket edge is included to exercise the right-closed convention
                    offset = sub if rng.random() < 0.05 else MS * int(rng.integers(1, sub // MS))
                    trade_rows.append((int(nodes[k]) + offset, prev_mid, vol, sign))
            inner = int(nodes[k]) + int(rng.integers(1, sub))
            snaps.append((inner, prev_mid, *rng.integers(1, 500, 2)))
            snaps.append((int(nodes[k + 1]), float(mid[k]), *rng.integers(1, 500, 2)))
            prev_mid = float(mid[k])
        level = mid[-1] + 0.02 * rng.standard_normal()

    trade_rows.sort(key=lambda r: r[0])
    ts, px, vol, sign = (np.array(c) for c in zip(*trade_rows))
    trades = TradeTape.from_arrays(ts.astype(np.int64), np.round(px, 6), vol.astype(np.int64), sign.astype(np.int8))
    s_ts, s_mid, s_bq, s_aq = (np.array(c) for c in zip(*snaps))
    book = BookTape.from_arrays(s_ts.astype(np.int64), s_mid - SPREAD / 2, s_bq.astype(np.int64),
                                s_mid + SPREAD / 2, s_aq.astype(np.int64))
    return SyntheticDay(grid, trades, book, truth, flows, mids)


def write_fixture(day: SyntheticDay, trades_path, book_path) -> None:
    """Trades with ISO timestamps, book with integer nanoseconds (both formats get exercised)."""
    import pandas as pd

    from .persist import atomic_write_text

    iso = pd.to_datetime(day.trades.ts, unit="ns").strftime("%Y-%m-%dT%H:%M:%S.%f")
    side = np.where(day.trades.sign > 0, "B", "S")
    lines = ["ts,price,volume,side"]
    lines += [f"{t},{p:.6f},{v},{s}" for t, p, v, s in zip(iso, day.trades.price, day.trades.volume, side)]
    atomic_write_text(trades_path, "\n".join(lines) + "\n")
    b = day.book
    lines = ["ts,bid_px,bid_qty,ask_px,ask_qty"]
    lines += [f"{t},{float(bp)!r},{bq},{float(ap)!r},{aq}" for t, bp, bq, ap, aq in zip(b.ts, b.bid_px, b.bid_qty, b.ask_px, b.ask_qty)]
    atomic_write_text(book_path, "\n".join(lines) + "\n")
