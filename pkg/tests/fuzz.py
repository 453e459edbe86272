"""Random trade and book files for exercising the ingestion and metric code."""

import numpy as np
import pandas as pd

SECOND = 1_000_000_000
DAY_START = int(pd.Timestamp("2014-11-03T14:30:00").value)


def fuzz_timestamps(rng, n, start, span, sub, snap=0.1, dup=0.05):
    """Sorted ns timestamps: a share snapped exactly onto bucket nodes, some repeated."""
    ts = rng.integers(start - 5 * SECOND, start + span + 5 * SECOND, size=n)
    on_node = rng.random(n) < snap
    ts[on_node] = start + sub * rng.integers(0, span // sub + 1, size=on_node.sum())
    repeat = np.flatnonzero(rng.random(n) < dup)
    repeat = repeat[repeat > 0]
    ts = np.sort(ts)
    ts[repeat] = ts[repeat - 1]
    return np.sort(ts, kind="stable")


def _format(ts, iso):
    if iso:
        return [pd.Timestamp(int(t)).isoformat() for t in ts]
    return [str(int(t)) for t in ts]


def fuzz_trades(rng, n, start, span, sub):
    ts = fuzz_timestamps(rng, n, start, span, sub)
    return {
        "ts": ts,
        "price": np.round(100 + rng.standard_normal(n), 2),
        "volume": rng.integers(1, 1000, size=n),
        "is_buy": rng.random(n) < 0.5,
    }


def fuzz_book(rng, n, start, span, sub):
    ts = fuzz_timestamps(rng, n - 1, start, span, sub)
    ts = np.concatenate([[start - 10 * SECOND], ts])  # seed snapshot before the first window
    steps = rng.choice([-1, 0, 0, 0, 1], size=n)
    bid = 10_000 + np.cumsum(steps)
    spread = rng.choice([0, 1, 1, 2], size=n)
    return {
        "ts": ts,
        "bid_px": bid / 100.0,
        "bid_qty": rng.integers(0, 500, size=n),
        "ask_px": (bid + spread) / 100.0,
        "ask_qty": rng.integers(0, 500, size=n),
    }


def write_trades(path, tape, iso):
    side = np.where(tape["is_buy"], "B", "S")
    frame = pd.DataFrame({"ts": _format(tape["ts"], iso), "price": tape["price"],
                          "volume": tape["volume"], "side": side})
    frame.to_csv(path, index=False)


def write_book(path, book, iso):
    frame = pd.DataFrame({"ts": _format(book["ts"], iso), "bid_px": book["bid_px"], "bid_qty": book["bid_qty"],
                          "ask_px": book["ask_px"], "ask_qty": book["ask_qty"]})
    frame.to_csv(path, index=False)
