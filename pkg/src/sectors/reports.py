"""Sector time-series products and constituent/weight tables."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import PriceTable, TickerInfo


class ReportError(ValueError):
    pass


@dataclass(frozen=True)
class IndexSeries:
    dates: list[str]
    values: np.ndarray  # T x n
    kind: str  # cumulative_log_return | unweighted_price_index
    annualization_days: int = 250


def cumulative_returns(
    E: np.ndarray,
    annualization_days: int = 250,
    dates: list[str] | None = None,
) -> IndexSeries:
    """Annualized cumulative log returns: prefix sums of E scaled by 1/sqrt(days).

    E has one row per return (one fewer than the price history), so the
    series is indexed by return rows: value at row 0 covers the first
    trading-day pair.
    """
    if annualization_days < 1:
        raise ReportError("annualization_days must be >= 1")
    E = np.atleast_2d(np.asarray(E, dtype=float))
    values = np.cumsum(E, axis=0) / math.sqrt(annualization_days)
    T = values.shape[0]
    return IndexSeries(
        dates=dates if dates is not None else [str(t) for t in range(T)],
        values=values,
        kind="cumulative_log_return",
        annualization_days=annualization_days,
    )


def price_index(prices: PriceTable, C: np.ndarray, tickers: list[str] | None = None) -> IndexSeries:
    """Unweighted sector price index: the matrix product prices @ C."""
    C = np.asarray(C, dtype=float)
    if tickers is not None and list(tickers) != list(prices.tickers):
        missing = sorted(set(tickers) ^ set(prices.tickers))
        raise ReportError(f"ticker mismatch between prices and model: {missing}")
    if C.shape[0] != len(prices.tickers):
        raise ReportError(
            f"C has {C.shape[0]} rows but price table has {len(prices.tickers)} tickers"
        )
    return IndexSeries(
        dates=list(prices.dates),
        values=prices.prices @ C,
        kind="unweighted_price_index",
    )


def top_constituents(
    C: np.ndarray,
    factor: int,
    k: int,
    metadata: dict[str, TickerInfo] | None = None,
    tickers: list[str] | None = None,
) -> list[dict]:
    """Top-k stocks of a factor ranked by C, with percent of the sector.

    Columns of C sum to 1, so each entry is the fraction of the sector
    attributable to the stock. Ties are broken by ticker order.
    """
    C = np.asarray(C, dtype=float)
    S, n = C.shape
    if not 0 <= factor < n:
        raise ReportError(f"factor {factor} out of range [0, {n})")
    if k > S:
        raise ReportError(f"k={k} exceeds {S} stocks")
    tickers = tickers or [f"s{j}" for j in range(S)]
    metadata = metadata or {}
    order = sorted(range(S), key=lambda s: (-C[s, factor], tickers[s]))[:k]
    rows = []
    for rank, s in enumerate(order, start=1):
        info = metadata.get(tickers[s], TickerInfo(ticker=tickers[s]))
        rows.append(
            {
                "factor": factor,
                "rank": rank,
                "ticker": tickers[s],
                "name": info.name,
                "listed_sector": info.listed_sector,
                "percent": 100.0 * C[s, factor],
            }
        )
    return rows


def weights_report(
    W: np.ndarray,
    metadata: dict[str, TickerInfo] | None = None,
    tickers: list[str] | None = None,
) -> list[dict]:
    """Per-stock sector decomposition, factors sorted by descending weight."""
    W = np.asarray(W, dtype=float)
    n, S = W.shape
    tickers = tickers or [f"s{j}" for j in range(S)]
    metadata = metadata or {}
    rows = []
    for s in range(S):
        order = sorted(range(n), key=lambda f: (-W[f, s], f))
        info = metadata.get(tickers[s], TickerInfo(ticker=tickers[s]))
        rows.append(
            {
                "ticker": tickers[s],
                "name": info.name,
                "listed_sector": info.listed_sector,
                "weights": [(f, float(W[f, s])) for f in order],
                "dominant_factor": order[0],
            }
        )
    return rows


def write_index_csv(series: IndexSeries, path) -> None:
    """`date,factor_1..factor_n` export with a kind comment header."""
    T, n = series.values.shape
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            f"# kind={series.kind} annualization_days={series.annualization_days}\n"
        )
        fh.write("date," + ",".join(f"factor_{f+1}" for f in range(n)) + "\n")
        for t in range(T):
            row = ",".join(f"{v:.17g}" for v in series.values[t])
            fh.write(f"{series.dates[t]},{row}\n")


def write_constituents_csv(rows: list[dict], path) -> None:
    """`factor,rank,ticker,name,listed_sector,percent` export, percent at 2 decimals."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("factor,rank,ticker,name,listed_sector,percent\n")
        for r in rows:
            fh.write(
                f"{r['factor'] + 1},{r['rank']},{r['ticker']},{r['name']},"
                f"{r['listed_sector']},{r['percent']:.2f}\n"
            )


def write_weights_csv(rows: list[dict], n: int, path) -> None:
    """Per-stock weight table: one row per stock, one column per factor."""
    with open(path, "w", encoding="utf-8") as fh:
        header = ",".join(f"factor_{f+1}" for f in range(n))
        fh.write(f"ticker,name,listed_sector,dominant_factor,{header}\n")
        for r in rows:
            by_factor = dict(r["weights"])
            vals = ",".join(f"{by_factor[f]:.17g}" for f in range(n))
            fh.write(
                f"{r['ticker']},{r['name']},{r['listed_sector']},"
                f"{r['dominant_factor'] + 1},{vals}\n"
            )
