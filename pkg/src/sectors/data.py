"""Price ingestion, gap repair, and the returns preprocessing pipeline.

The pipeline is: load_prices -> interpolate_missing -> log_returns ->
normalize -> remove_market_mean (or remove_market_svd). Every step is a
pure function; matrices are never mutated in place.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd


class DataError(ValueError):
    """Raised for malformed inputs or pipeline precondition violations."""


@dataclass(frozen=True)
class TickerInfo:
    ticker: str
    name: str = ""
    listed_sector: str = ""
    market_cap: float | None = None


@dataclass(frozen=True)
class PriceTable:
    """Trading-day x ticker matrix of adjusted closing prices.

    ``prices`` is T x S; NaN marks a missing observation until
    :func:`interpolate_missing` repairs it. Ticker order is the order of
    first appearance in the source and is the canonical column order for
    every downstream matrix.
    """

    dates: list[str]
    tickers: list[str]
    prices: np.ndarray
    metadata: dict[str, TickerInfo] = field(default_factory=dict)

    def __post_init__(self):
        prices = np.asarray(self.prices, dtype=float)
        object.__setattr__(self, "prices", prices)
        if prices.shape != (len(self.dates), len(self.tickers)):
            raise DataError(
                f"prices shape {prices.shape} does not match "
                f"{len(self.dates)} dates x {len(self.tickers)} tickers"
            )
        if len(set(self.tickers)) != len(self.tickers):
            raise DataError("duplicate tickers")
        if any(a >= b for a, b in zip(self.dates, self.dates[1:])):
            raise DataError("dates must be strictly increasing")

    @property
    def missing_mask(self) -> np.ndarray:
        return np.isnan(self.prices)


RETURN_STAGES = ("raw_log", "normalized", "market_removed")
MARKET_METHODS = ("none", "cross_sectional_mean", "svd_projection")


@dataclass(frozen=True)
class ReturnsMatrix:
    """T x S returns with provenance of how far through the pipeline it is."""

    values: np.ndarray
    stage: str = "raw_log"
    market_method: str = "none"
    tickers: list[str] | None = None
    dates: list[str] | None = None
    window_center: int | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.ndim != 2:
            raise DataError("returns must be a 2-D matrix")
        if self.stage not in RETURN_STAGES:
            raise DataError(f"unknown stage {self.stage!r}")
        if self.market_method not in MARKET_METHODS:
            raise DataError(f"unknown market_method {self.market_method!r}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def _parse_dates(raw) -> list[str]:
    parsed = pd.to_datetime(raw, format="ISO8601", errors="coerce")
    if parsed.isna().any():
        bad = raw[parsed.isna()].iloc[0]
        raise DataError(f"unparseable date {bad!r}")
    return [d.strftime("%Y-%m-%d") for d in parsed]


def load_prices(source, layout: str = "long") -> PriceTable:
    """Read a long or wide CSV of adjusted closes into a PriceTable.

    Long layout: columns (date, ticker, adjusted_close). Wide layout: a
    date column followed by one column per ticker; empty cells are
    missing. Duplicate (date, ticker) pairs and non-positive prices are
    rejected.
    """
    if layout not in ("long", "wide"):
        raise DataError(f"unknown layout {layout!r}")
    df = pd.read_csv(source)

    if layout == "long":
        required = {"date", "ticker", "adjusted_close"}
        if not required.issubset(df.columns):
            raise DataError(f"long CSV must have columns {sorted(required)}")
        dup = df.duplicated(subset=["date", "ticker"], keep=False)
        if dup.any():
            rows = (df.index[dup] + 2).tolist()[:2]  # header is line 1
            pair = df.loc[df.index[dup][0], ["date", "ticker"]].tolist()
            raise DataError(
                f"duplicate (date, ticker) pair {tuple(pair)} at rows {rows}"
            )
        df["date"] = _parse_dates(df["date"])
        df["ticker"] = df["ticker"].astype(str)
        bad = df["adjusted_close"] <= 0
        if bad.any():
            r = df[bad].iloc[0]
            raise DataError(
                f"non-positive price {r['adjusted_close']} at "
                f"({r['date']}, {r['ticker']})"
            )
        tickers = list(dict.fromkeys(df["ticker"]))
        dates = sorted(set(df["date"]))
        wide = df.pivot(index="date", columns="ticker", values="adjusted_close")
        wide = wide.reindex(index=dates, columns=tickers)
        return PriceTable(dates=dates, tickers=tickers, prices=wide.to_numpy())

    date_col = df.columns[0]
    dates_parsed = _parse_dates(df[date_col])
    tickers = [str(c) for c in df.columns[1:]]
    order = np.argsort(dates_parsed, kind="stable")
    if len(set(dates_parsed)) != len(dates_parsed):
        seen: dict[str, int] = {}
        for i, d in enumerate(dates_parsed):
            if d in seen:
                raise DataError(
                    f"duplicate (date, ticker) pair: date {d} at rows "
                    f"{[seen[d] + 2, i + 2]}"
                )
            seen[d] = i
    prices = df.iloc[order, 1:].to_numpy(dtype=float)
    dates = [dates_parsed[i] for i in order]
    if np.any(prices <= 0):
        t, s = np.argwhere(prices <= 0)[0]
        raise DataError(
            f"non-positive price at ({dates[t]}, {tickers[s]})"
        )
    return PriceTable(dates=dates, tickers=tickers, prices=prices)


def load_metadata(source) -> dict[str, TickerInfo]:
    """Read the `ticker,name,listed_sector,market_cap` metadata CSV."""
    df = pd.read_csv(source)
    if "ticker" not in df.columns:
        raise DataError("metadata CSV must have a ticker column")
    out = {}
    for _, row in df.iterrows():
        cap = row.get("market_cap")
        out[str(row["ticker"])] = TickerInfo(
            ticker=str(row["ticker"]),
            name=str(row.get("name", "") or ""),
            listed_sector=str(row.get("listed_sector", "") or ""),
            market_cap=None if cap is None or pd.isna(cap) else float(cap),
        )
    return out


def interpolate_missing(table: PriceTable) -> PriceTable:
    """Fill interior missing prices by linear interpolation over trading days.

    Leading or trailing gaps are an error: only interior gaps have two
    observed neighbors to interpolate between. Observed cells are
    returned bit-identical.
    """
    prices = table.prices.copy()
    t_idx = np.arange(prices.shape[0], dtype=float)
    for s, ticker in enumerate(table.tickers):
        col = prices[:, s]
        missing = np.isnan(col)
        if not missing.any():
            continue
        if missing[0] or missing[-1]:
            raise DataError(
                f"ticker {ticker}: leading/trailing missing prices cannot "
                "be interpolated"
            )
        col[missing] = np.interp(t_idx[missing], t_idx[~missing], col[~missing])
    if np.any(prices <= 0) or not np.all(np.isfinite(prices)):
        raise DataError("repaired prices must be finite and positive")
    return replace(table, prices=prices)


def log_returns(table: PriceTable) -> ReturnsMatrix:
    """Daily log returns: row t is log(P[t+1]) - log(P[t])."""
    prices = table.prices
    if prices.shape[0] < 2:
        raise DataError("need at least two dates to compute returns")
    if np.any(~np.isfinite(prices)) or np.any(prices <= 0):
        raise DataError("prices must be finite and positive; repair gaps first")
    values = np.diff(np.log(prices), axis=0)
    return ReturnsMatrix(
        values=values,
        stage="raw_log",
        tickers=list(table.tickers),
        dates=list(table.dates[1:]),
    )


def normalize(returns: ReturnsMatrix) -> ReturnsMatrix:
    """Demean each column and divide by its population standard deviation."""
    if returns.stage != "raw_log":
        raise DataError(f"normalize expects stage raw_log, got {returns.stage}")
    r = returns.values
    mean = r.mean(axis=0)
    sigma = r.std(axis=0)  # population sd, no Bessel correction
    zero = sigma <= 0
    if zero.any():
        s = int(np.argmax(zero))
        name = returns.tickers[s] if returns.tickers else f"column {s}"
        raise DataError(f"zero-variance series for {name}")
    return replace(returns, values=(r - mean) / sigma, stage="normalized")


def remove_market_mean(returns: ReturnsMatrix) -> ReturnsMatrix:
    """Subtract the cross-sectional mean from every row."""
    if returns.stage != "normalized":
        raise DataError(
            f"market removal expects stage normalized, got {returns.stage}"
        )
    r = returns.values
    return replace(
        returns,
        values=r - r.mean(axis=1, keepdims=True),
        stage="market_removed",
        market_method="cross_sectional_mean",
    )


def remove_market_svd(returns: ReturnsMatrix) -> ReturnsMatrix:
    """Project out the top singular component (the market mode)."""
    if returns.stage != "normalized":
        raise DataError(
            f"market removal expects stage normalized, got {returns.stage}"
        )
    r = returns.values
    u, s, vt = np.linalg.svd(r, full_matrices=False)
    if len(s) > 1 and s[0] - s[1] < 1e-12:
        raise DataError("market mode ambiguous: top two singular values equal")
    cleaned = r - s[0] * np.outer(u[:, 0], vt[0])
    return replace(
        returns,
        values=cleaned,
        stage="market_removed",
        market_method="svd_projection",
    )


def preprocess(table: PriceTable, market_method: str = "cross_sectional_mean") -> ReturnsMatrix:
    """Full pipeline from a gap-repaired PriceTable to market-removed returns."""
    rets = normalize(log_returns(interpolate_missing(table)))
    if market_method == "cross_sectional_mean":
        return remove_market_mean(rets)
    if market_method == "svd_projection":
        return remove_market_svd(rets)
    raise DataError(f"unknown market_method {market_method!r}")


def write_returns_csv(returns: ReturnsMatrix, path) -> None:
    """Wide CSV export with a comment header recording provenance."""
    T, S = returns.shape
    tickers = returns.tickers or [f"s{j}" for j in range(S)]
    dates = returns.dates or [str(t) for t in range(T)]
    buf = io.StringIO()
    buf.write(
        f"# stage={returns.stage} market_method={returns.market_method}"
    )
    if returns.window_center is not None:
        buf.write(f" window_center={returns.window_center}")
    buf.write("\n")
    buf.write("date," + ",".join(tickers) + "\n")
    for t in range(T):
        row = ",".join(format(v, ".17g") for v in returns.values[t])
        buf.write(f"{dates[t]},{row}\n")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(buf.getvalue())


def read_returns_csv(path) -> ReturnsMatrix:
    """Inverse of :func:`write_returns_csv`."""
    fields: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        pos = fh.tell()
        line = fh.readline()
        while line.startswith("#"):
            fields.update(
                kv.split("=", 1) for kv in line.lstrip("#").split() if "=" in kv
            )
            pos = fh.tell()
            line = fh.readline()
        if "stage" not in fields:
            raise DataError("returns CSV must carry a stage provenance comment")
        fh.seek(pos)
        df = pd.read_csv(fh, float_precision="round_trip")
    center = fields.get("window_center")
    return ReturnsMatrix(
        values=df.iloc[:, 1:].to_numpy(dtype=float),
        stage=fields.get("stage", "raw_log"),
        market_method=fields.get("market_method", "none"),
        tickers=[str(c) for c in df.columns[1:]],
        dates=[str(d) for d in df.iloc[:, 0]],
        window_center=None if center is None else int(center),
    )
