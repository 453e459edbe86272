"""Trade and top-of-book ingestion, windowing, and order-flow metrics.

Timestamps are integer nanoseconds since the epoch throughout. Buckets are
left-open, right-closed: bucket ``k`` of a window collects events with
``t_k < ts <= t_{k+1}``, so an event exactly on a window start belongs to the
previous window's last bucket.
"""

from __future__ import annotations

import csv
import math
import os
import re
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import ConfigurationError, DataValidationError, DomainError, MissingSeedError

TRADE_COLUMNS = ("ts", "price", "volume", "side")
BOOK_COLUMNS = ("ts", "bid_px", "bid_qty", "ask_px", "ask_qty")
SERIES_COLUMNS = ("k", "t", "TI", "OFI", "lambda")

_INT_RE = re.compile(r"^[+-]?\d+$")


def to_ns(value) -> int:
    """Duration or timestamp to integer nanoseconds.

    Accepts integers (already ns), ``datetime.timedelta``, ``numpy.timedelta64``
    and strings understood by ``pandas.Timedelta`` (``"30min"``, ``"10s"``).
    """
    if isinstance(value, (bool, np.bool_)):
        raise ConfigurationError(f"not a duration: {value!r}")
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, float) and value.is_integer():
        return int(value)
    try:
        return int(pd.Timedelta(value).value)
    except (ValueError, TypeError):
        raise ConfigurationError(f"cannot interpret {value!r} as a duration") from None


def parse_timestamp(text: str) -> int:
    """ISO-8601 (naive taken as UTC) or integer-nanosecond timestamp."""
    text = text.strip()
    if _INT_RE.match(text):
        return int(text)
    ts = pd.Timestamp(text)
    if ts is pd.NaT:
        raise ValueError("missing timestamp")
    if ts.tzinfo is not None:
        ts = ts.tz_convert("UTC").tz_localize(None)
    return int(ts.value)


# -- tapes -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TradeTape:
    """Trades sorted by timestamp; ``sign`` is +1 for buys and -1 for sells.

    ``volume`` is int64 when every input volume was integral, float otherwise.
    """

    ts: np.ndarray
    price: np.ndarray
    volume: np.ndarray
    sign: np.ndarray
    skipped: int = 0

    def __len__(self):
        return self.ts.size

    @classmethod
    def from_arrays(cls, ts, price, volume, side, skipped: int = 0) -> "TradeTape":
        ts = np.asarray(ts, dtype=np.int64)
        sign = np.asarray(side)
        if sign.dtype.kind in "USO":
            sign = np.where(sign == "B", 1, np.where(sign == "S", -1, 0))
        sign = sign.astype(np.int8)
        if np.any(sign == 0):
            raise DomainError("trade side must be buy or sell")
        volume = _exact(volume)
        if np.any(volume <= 0):
            raise DomainError("trade volumes must be positive")
        order = np.argsort(ts, kind="stable")
        return cls(ts[order], np.asarray(price, float)[order], volume[order], sign[order], skipped)

    @property
    def signed_volume(self) -> np.ndarray:
        return self.sign.astype(self.volume.dtype) * self.volume


@dataclass(frozen=True, eq=False)
class BookTape:
    """Top-of-book snapshots sorted by timestamp."""

    ts: np.ndarray
    bid_px: np.ndarray
    bid_qty: np.ndarray
    ask_px: np.ndarray
    ask_qty: np.ndarray
    skipped: int = 0

    def __len__(self):
        return self.ts.size

    @classmethod
    def from_arrays(cls, ts, bid_px, bid_qty, ask_px, ask_qty, skipped: int = 0) -> "BookTape":
        ts = np.asarray(ts, dtype=np.int64)
        bid_px, ask_px = np.asarray(bid_px, float), np.asarray(ask_px, float)
        bid_qty, ask_qty = _exact(bid_qty), _exact(ask_qty)
        if np.any(bid_px > ask_px):
            raise DomainError("crossed book: bid above ask")
        if np.any(bid_qty < 0) or np.any(ask_qty < 0):
            raise DomainError("negative quote size")
        order = np.argsort(ts, kind="stable")
        return cls(ts[order], bid_px[order], bid_qty[order], ask_px[order], ask_qty[order], skipped)

    @property
    def mid(self) -> np.ndarray:
        return 0.5 * (self.bid_px + self.ask_px)


def _exact(values) -> np.ndarray:
    """Integer array when every value is integral, float array otherwise."""
    arr = np.asarray(values)
    if arr.dtype.kind in "iu":
        return arr.astype(np.int64)
    arr = arr.astype(float)
    if arr.size and np.all(np.isfinite(arr)) and np.all(arr == np.round(arr)) and np.all(np.abs(arr) < 2**53):
        return arr.astype(np.int64)
    return arr


# -- CSV ingestion ---------------------------------------------------------


def _parse_number(text: str, what: str):
    text = text.strip()
    if _INT_RE.match(text):
        return int(text)
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(f"{what} is not finite")
    return value


class _Reader:
    """Row iterator enforcing the header, a single timestamp format and row validation."""

    def __init__(self, path, columns, skip_bad):
        self.path = os.fspath(path)
        self.columns = columns
        self.skip_bad = skip_bad
        self.skipped = 0
        self.ts_kind = None

    def rows(self):
        with open(self.path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or tuple(h.strip() for h in header) != self.columns:
                raise DataValidationError(f"expected header {','.join(self.columns)}", row=1, path=self.path)
            for lineno, row in enumerate(reader, start=2):
                if not row or all(not cell.strip() for cell in row):
                    continue
                try:
                    if len(row) != len(self.columns):
                        raise ValueError(f"expected {len(self.columns)} fields, got {len(row)}")
                    if any(not cell.strip() for cell in row):
                        raise ValueError("missing field")
                    yield lineno, self._timestamp(row[0], lineno), row
                except DataValidationError:
                    raise
                except ValueError as exc:
                    self.reject(lineno, str(exc))

    def reject(self, lineno, message):
        if not self.skip_bad:
            raise DataValidationError(message, row=lineno, path=self.path)
        self.skipped += 1

    def _timestamp(self, text, lineno):
        kind = "int" if _INT_RE.match(text.strip()) else "iso"
        if self.ts_kind is None:
            self.ts_kind = kind
        elif kind != self.ts_kind:
            # a file mixing formats is never partially trusted
            raise DataValidationError(
                f"timestamp format changes from {self.ts_kind} to {kind}", row=lineno, path=self.path
            )
        return parse_timestamp(text)


def read_trades(path, skip_bad: bool = False) -> TradeTape:
    """Read ``ts,price,volume,side`` with ``side`` in ``{B, S}``."""
    reader = _Reader(path, TRADE_COLUMNS, skip_bad)
    ts, price, volume, sign = [], [], [], []
    for lineno, t, row in reader.rows():
        try:
            p = _parse_number(row[1], "price")
            v = _parse_number(row[2], "volume")
            side = row[3].strip()
            if p <= 0:
                raise ValueError("price must be positive")
            if v <= 0:
                raise ValueError("volume must be positive")
            if side not in ("B", "S"):
                raise ValueError(f"side must be B or S, got {side!r}")
        except ValueError as exc:
            reader.reject(lineno, str(exc))
            continue
        ts.append(t)
        price.append(float(p))
        volume.append(v)
        sign.append(1 if side == "B" else -1)
    return TradeTape.from_arrays(
        np.array(ts, dtype=np.int64), np.array(price, dtype=float), _volume_array(volume),
        np.array(sign, dtype=np.int8), reader.skipped,
    )


def read_book(path, skip_bad: bool = False) -> BookTape:
    """Read ``ts,bid_px,bid_qty,ask_px,ask_qty``; crossed or incomplete rows are rejected."""
    reader = _Reader(path, BOOK_COLUMNS, skip_bad)
    cols = [[] for _ in range(5)]
    for lineno, t, row in reader.rows():
        try:
            bid_px = float(_parse_number(row[1], "bid_px"))
            bid_qty = _parse_number(row[2], "bid_qty")
            ask_px = float(_parse_number(row[3], "ask_px"))
            ask_qty = _parse_number(row[4], "ask_qty")
            if bid_qty < 0 or ask_qty < 0:
                raise ValueError("negative quote size")
            if bid_px > ask_px:
                raise ValueError(f"crossed book: bid {bid_px} > ask {ask_px}")
        except ValueError as exc:
            reader.reject(lineno, str(exc))
            continue
        for col, value in zip(cols, (t, bid_px, bid_qty, ask_px, ask_qty)):
            col.append(value)
    return BookTape.from_arrays(
        np.array(cols[0], dtype=np.int64), np.array(cols[1], dtype=float), _volume_array(cols[2]),
        np.array(cols[3], dtype=float), _volume_array(cols[4]), reader.skipped,
    )


def _volume_array(values) -> np.ndarray:
    if all(isinstance(v, int) for v in values):
        return np.array(values, dtype=np.int64)
    return np.array(values, dtype=float)


# -- windows ---------------------------------------------------------------


@dataclass(frozen=True)
class WindowGrid:
    """Consecutive windows of ``window_len`` split into buckets of ``subinterval`` (all ns)."""

    day_start: int
    window_len: int
    subinterval: int
    n_windows: int

    def __post_init__(self):
        if self.window_len <= 0 or self.subinterval <= 0 or self.n_windows < 1:
            raise ConfigurationError("window and subinterval lengths must be positive")
        if self.window_len % self.subinterval:
            raise ConfigurationError(
                f"subinterval {self.subinterval} ns does not divide window length {self.window_len} ns"
            )

    @property
    def n_buckets(self) -> int:
        return self.window_len // self.subinterval

    def window_start(self, window: int) -> int:
        self._check(window)
        return self.day_start + window * self.window_len

    def nodes(self, window: int) -> np.ndarray:
        """``n_buckets + 1`` node timestamps ``t_{i,0..n}`` of a window."""
        return self.window_start(window) + self.subinterval * np.arange(self.n_buckets + 1, dtype=np.int64)

    def node_seconds(self, window: int) -> np.ndarray:
        """Node times in seconds relative to the window start."""
        return self.subinterval * 1e-9 * np.arange(self.n_buckets + 1)

    def _check(self, window):
        if not 0 <= window < self.n_windows:
            raise DomainError(f"window index {window} out of range 0..{self.n_windows - 1}")


def build_windows(day_start, day_len="6h", window_len="30min", subinterval="10s") -> WindowGrid:
    start = to_ns(day_start) if not isinstance(day_start, str) else parse_timestamp(day_start)
    day, win, sub = to_ns(day_len), to_ns(window_len), to_ns(subinterval)
    if min(day, win, sub) <= 0:
        raise ConfigurationError("durations must be positive")
    if day % win:
        raise ConfigurationError(f"window length {win} ns does not divide day length {day} ns")
    return WindowGrid(start, win, sub, day // win)


def _bucket_of(ts: np.ndarray, nodes: np.ndarray):
    """Indices of events inside ``(nodes[0], nodes[-1]]`` and their bucket numbers."""
    lo = np.searchsorted(ts, nodes[0], side="right")
    hi = np.searchsorted(ts, nodes[-1], side="right")
    bucket = np.searchsorted(nodes, ts[lo:hi], side="left") - 1
    return lo, hi, bucket


def trade_imbalance(trades: TradeTape, grid: WindowGrid, window: int) -> np.ndarray:
    """Buy minus sell volume per bucket (exact integers for integral volumes)."""
    nodes = grid.nodes(window)
    lo, hi, bucket = _bucket_of(trades.ts, nodes)
    out = np.zeros(grid.n_buckets, dtype=trades.volume.dtype)
    np.add.at(out, bucket, trades.signed_volume[lo:hi])
    return out


def ofi_contributions(book: BookTape) -> np.ndarray:
    """``e_n`` for each consecutive snapshot pair ``(n-1, n)``; entry 0 is unused (zero)."""
    bp, bq, ap, aq = book.bid_px, book.bid_qty, book.ask_px, book.ask_qty
    e = np.zeros(len(book), dtype=np.result_type(bq.dtype, aq.dtype))
    if len(book) < 2:
        return e
    e[1:] = (
        (bp[1:] >= bp[:-1]) * bq[1:]
        - (bp[1:] <= bp[:-1]) * bq[:-1]
        - (ap[1:] <= ap[:-1]) * aq[1:]
        + (ap[1:] >= ap[:-1]) * aq[:-1]
    )
    return e


def ofi_series(book: BookTape, grid: WindowGrid, window: int, contributions=None) -> np.ndarray:
    """Order flow imbalance per bucket, each pair attributed by its later timestamp.

    A snapshot at or before the window start is required to seed the first pair.
    """
    nodes = grid.nodes(window)
    lo, hi, bucket = _bucket_of(book.ts, nodes)
    if lo == 0:
        raise MissingSeedError(f"no book snapshot at or before the start of window {window}")
    e = ofi_contributions(book) if contributions is None else contributions
    out = np.zeros(grid.n_buckets, dtype=e.dtype)
    np.add.at(out, bucket, e[lo:hi])
    return out


def lambda_series(metric) -> np.ndarray:
    """Order flow is the opposite of the traders' net buying."""
    return -np.asarray(metric)


def midprice_series(book: BookTape, grid: WindowGrid, window: int) -> np.ndarray:
    """Mid quote in force at the right end of each bucket (last snapshot at or before it)."""
    ends = grid.nodes(window)[1:]
    idx = np.searchsorted(book.ts, ends, side="right") - 1
    if np.any(idx < 0):
        raise MissingSeedError(f"no book snapshot before the first bucket end of window {window}")
    return book.mid[idx]


# -- output ----------------------------------------------------------------


def window_series_frame(trades: TradeTape, book: BookTape, grid: WindowGrid, window: int,
                        metric: str = "TI") -> pd.DataFrame:
    """Per-window series table ``k,t,TI,OFI,lambda``; ``lambda`` negates ``metric``."""
    ti = trade_imbalance(trades, grid, window)
    ofi = ofi_series(book, grid, window)
    chosen = {"TI": ti, "OFI": ofi}.get(metric)
    if chosen is None:
        raise ConfigurationError(f"metric must be TI or OFI, got {metric!r}")
    return pd.DataFrame({
        "k": np.arange(grid.n_buckets),
        "t": grid.node_seconds(window)[:-1],
        "TI": ti,
        "OFI": ofi,
        "lambda": lambda_series(chosen),
    }, columns=list(SERIES_COLUMNS))


def iso_from_ns(ns: int) -> str:
    return pd.Timestamp(ns).isoformat()
