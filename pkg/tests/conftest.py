import numpy as np
import pytest

from sectors.data import ReturnsMatrix


def planted_panel(
    T=400,
    S=50,
    n=3,
    seed=7,
    noise_sd=0.0,
    corner_scale=2.0,
    include_corners=True,
):
    """Synthetic panel: orthogonal corner series mixed by a stochastic W.

    The first n stocks are pure corners (when ``include_corners``), so the
    planted archetypes lie in the convex hull of the data and exact
    recovery is attainable. Returns (R, corners, W_true).
    """
    rng = np.random.default_rng(seed)
    corners, _ = np.linalg.qr(rng.normal(size=(T, n)))
    corners *= corner_scale * np.sqrt(T)  # per-element sd ~ corner_scale
    W = np.zeros((n, S))
    if include_corners:
        W[:, :n] = np.eye(n)
        W[:, n:] = rng.dirichlet(np.ones(n), size=S - n).T
    else:
        W = rng.dirichlet(np.ones(n), size=S).T
    R = corners @ W
    if noise_sd > 0:
        R = R + rng.normal(0.0, noise_sd, size=R.shape)
    return R, corners, W


def as_market_removed(values, tickers=None) -> ReturnsMatrix:
    """Wrap a synthetic matrix as if it had been through the full pipeline."""
    values = np.asarray(values, dtype=float)
    return ReturnsMatrix(
        values=values,
        stage="market_removed",
        market_method="cross_sectional_mean",
        tickers=tickers or [f"s{j}" for j in range(values.shape[1])],
    )


@pytest.fixture(scope="session")
def planted3():
    R, corners, W = planted_panel()
    return as_market_removed(R), corners, W


@pytest.fixture(scope="session")
def planted3_model(planted3):
    from sectors.archetypes import FitOptions, pcha_fit

    R, _, _ = planted3
    return pcha_fit(R, 3, FitOptions(tolerance=1e-12, max_iterations=5000))
