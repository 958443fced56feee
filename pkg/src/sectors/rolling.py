"""Gaussian rolling-window weight tracking and the constant-weight noise control."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .archetypes import FitOptions, _check_stochastic, _solve_weights
from .data import ReturnsMatrix


class RollingError(ValueError):
    pass


@dataclass(frozen=True)
class WindowSpec:
    sigma: float = 250.0
    step: int = 50
    mu_start: int = 0
    mu_end: int = 5000

    def __post_init__(self):
        if self.sigma <= 0:
            raise RollingError("sigma must be positive")
        if self.step < 1:
            raise RollingError("step must be >= 1")
        if self.mu_start > self.mu_end:
            raise RollingError("mu_start must be <= mu_end")


@dataclass(frozen=True)
class RollingResult:
    centers: list[int]
    weights: list[np.ndarray]  # n x S, one per center
    sse_per_center: list[float]
    warm_start: bool = False


def gaussian_window(mu: int, sigma: float, T: int) -> np.ndarray:
    """Unnormalized Gaussian weights exp(-(t-mu)^2 / (2 sigma^2)), peak 1."""
    if T < 1:
        raise RollingError("T must be >= 1")
    tau = np.arange(T, dtype=float)
    return np.exp(-((tau - mu) ** 2) / (2.0 * sigma**2))


def windowed_returns(R: ReturnsMatrix, mu: int, sigma: float) -> ReturnsMatrix:
    """Multiply every column by the Gaussian window centered at mu.

    The windowed matrix is not re-normalized to unit variance; it feeds the
    fixed-corner weight solve directly.
    """
    if R.stage != "market_removed":
        raise RollingError(
            f"windowing expects market_removed returns, got stage {R.stage!r}"
        )
    g = gaussian_window(mu, sigma, R.values.shape[0])
    return replace(R, values=R.values * g[:, None], window_center=mu)


def rolling_weights(
    R: ReturnsMatrix,
    C: np.ndarray,
    spec: WindowSpec | None = None,
    opts: FitOptions | None = None,
    warm_start: bool = False,
) -> RollingResult:
    """Re-solve the weights at every window center with corners fixed.

    Centers run from mu_start to mu_end in steps of ``spec.step``, clamped
    to the data range. With ``warm_start`` each center is initialized from
    the previous solution (serial only); the subproblem is convex so the
    converged weights agree with a cold start within tolerance.
    """
    spec = spec or WindowSpec()
    opts = opts or FitOptions()
    C = np.asarray(C, dtype=float)
    T = R.values.shape[0]
    mu_end = spec.mu_end
    if mu_end > T - 1:
        warnings.warn(
            f"mu_end={mu_end} exceeds last row {T - 1}; clamping", stacklevel=2
        )
        mu_end = T - 1
    mu_start = max(spec.mu_start, 0)
    centers = list(range(mu_start, mu_end + 1, spec.step))
    if not centers:
        raise RollingError("empty window-center grid")

    weights = []
    sses = []
    prev_W = None
    for mu in centers:
        Rmu = windowed_returns(R, mu, spec.sigma)
        W = _solve_weights(Rmu.values, C, opts, W0=prev_W if warm_start else None)
        resid = Rmu.values - Rmu.values @ C @ W
        weights.append(W)
        sses.append(float(np.einsum("ij,ij->", resid, resid)))
        if warm_start:
            prev_W = W
    return RollingResult(
        centers=centers, weights=weights, sse_per_center=sses, warm_start=warm_start
    )


def simulate_constant_company(
    w: np.ndarray, E: np.ndarray, noise_sd: float, seed: int = 0
) -> np.ndarray:
    """Synthetic stock with time-constant weights: E @ w plus Gaussian noise."""
    w = np.asarray(w, dtype=float)
    if noise_sd < 0:
        raise RollingError("noise_sd must be non-negative")
    _check_stochastic(w[:, None], 0, "w")
    series = E @ w
    if noise_sd > 0:
        series = series + np.random.default_rng(seed).normal(
            0.0, noise_sd, size=series.shape
        )
    return series


@dataclass(frozen=True)
class FlowComparison:
    centers: list[int]
    abs_diff: np.ndarray        # centers x n x S, |W_real - W_sim|
    max_abs_diff: np.ndarray    # n x S
    mean_abs_diff: np.ndarray   # n x S
    real_time_sd: np.ndarray    # n x S, sd of each weight trajectory
    sim_time_sd: np.ndarray     # n x S


def compare_flows(real: RollingResult, simulated: RollingResult) -> FlowComparison:
    """Per-weight trajectory divergences between real and simulated flows.

    The simulated input is the constant-weight noise baseline; trajectories
    whose |delta W| clearly exceed the baseline's time variability are
    signal rather than noise.
    """
    if real.centers != simulated.centers:
        raise RollingError("window-center grids differ")
    if real.weights[0].shape != simulated.weights[0].shape:
        raise RollingError("factor/stock dimensions differ")
    Wr = np.stack(real.weights)
    Ws = np.stack(simulated.weights)
    diff = np.abs(Wr - Ws)
    return FlowComparison(
        centers=list(real.centers),
        abs_diff=diff,
        max_abs_diff=diff.max(axis=0),
        mean_abs_diff=diff.mean(axis=0),
        real_time_sd=Wr.std(axis=0),
        sim_time_sd=Ws.std(axis=0),
    )


def write_rolling_csv(result: RollingResult, tickers: list[str], path) -> None:
    """Long CSV export: `mu,ticker,factor,weight`."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("mu,ticker,factor,weight\n")
        for mu, W in zip(result.centers, result.weights):
            n, S = W.shape
            for s in range(S):
                for f in range(n):
                    fh.write(f"{mu},{tickers[s]},{f + 1},{W[f, s]:.17g}\n")


def trajectories_json(result: RollingResult, tickers: list[str]) -> dict:
    """Per-stock weight trajectories for flow plotting."""
    n = result.weights[0].shape[0]
    return {
        "centers": result.centers,
        "warm_start": result.warm_start,
        "factors": [f"factor_{f + 1}" for f in range(n)],
        "stocks": {
            tickers[s]: [
                [float(W[f, s]) for W in result.weights] for f in range(n)
            ]
            for s in range(len(tickers))
        },
    }


def write_trajectories_json(result: RollingResult, tickers: list[str], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(trajectories_json(result, tickers), fh, indent=2, sort_keys=True)
        fh.write("\n")
