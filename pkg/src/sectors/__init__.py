"""Canonical sector decomposition of stock price returns.

Library + CLI that factorizes a panel of price histories into
column-stochastic archetypes (R ~ R C W), validates against random-matrix
noise bounds, and tracks sector weights through Gaussian rolling windows.
"""

from .archetypes import (
    ArchetypeModel,
    FitOptions,
    align_factors,
    furthest_sum_init,
    pcha_fit,
    r2,
    solve_archetypes_fixed_W,
    solve_weights_fixed_C,
    sweep_n,
)
from .data import (
    PriceTable,
    ReturnsMatrix,
    interpolate_missing,
    load_metadata,
    load_prices,
    log_returns,
    normalize,
    preprocess,
    remove_market_mean,
    remove_market_svd,
)
from .hierarchy import (
    SectorFlowMap,
    composition_report,
    fit_sector_map,
    node_sizes,
    propagate_sizes,
    sankey_export,
)
from .reports import IndexSeries, cumulative_returns, price_index, top_constituents, weights_report
from .rolling import (
    RollingResult,
    WindowSpec,
    compare_flows,
    gaussian_window,
    rolling_weights,
    simulate_constant_company,
    windowed_returns,
)
from .spectra import (
    SvdSpectrum,
    WishartBound,
    count_above_bound,
    eigenplane_projection,
    explainable_variation,
    svd,
    wishart_bounds,
)

__version__ = "0.1.0"
