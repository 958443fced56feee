"""Constrained factorization R ~ R C W on the column simplex.

Both factors are column-stochastic: archetypes E = R C are convex
combinations of data columns and every column of R is approximated by a
convex combination of archetypes. Optimization is alternating projected
gradient with a halving/doubling backtracking step, so the sum of squared
errors never increases.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import ReturnsMatrix
from .spectra import count_above_bound, explainable_variation, svd, wishart_bounds


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class FitOptions:
    tolerance: float = 1e-7
    max_iterations: int = 500
    seed: int = 0
    init: str = "furthest_sum"
    inner_steps: int = 10

    def __post_init__(self):
        if self.tolerance <= 0:
            raise FitError("tolerance must be positive")
        if self.max_iterations < 1:
            raise FitError("max_iterations must be >= 1")
        if self.init not in ("furthest_sum", "random_columns"):
            raise FitError(f"unknown init {self.init!r}")


@dataclass(frozen=True)
class ArchetypeModel:
    n: int
    C: np.ndarray  # S x n, column-stochastic
    W: np.ndarray  # n x S, column-stochastic
    E: np.ndarray  # T x n, equals R @ C
    sse: float
    r2: float
    iterations: int
    converged: bool
    seed: int
    tickers: list[str] | None = None
    factor_names: list[str] = field(default_factory=list)
    sse_history: tuple[float, ...] = ()  # SSE after each outer iteration

    @property
    def degenerate_factors(self) -> list[int]:
        """Factors whose total participation is negligible (near-empty sectors)."""
        row_sums = self.W.sum(axis=1)
        return [int(f) for f in np.flatnonzero(row_sums < 1e-6 * self.W.shape[1])]


def project_columns_to_simplex(X: np.ndarray) -> np.ndarray:
    """Euclidean projection of each column onto the probability simplex."""
    d, m = X.shape
    sorted_desc = -np.sort(-X, axis=0)
    cumsum = np.cumsum(sorted_desc, axis=0)
    ks = np.arange(1, d + 1)[:, None]
    cond = sorted_desc - (cumsum - 1.0) / ks > 0
    rho = d - np.argmax(cond[::-1], axis=0) - 1
    theta = (cumsum[rho, np.arange(m)] - 1.0) / (rho + 1)
    return np.maximum(X - theta, 0.0)


def _as_values(R) -> np.ndarray:
    return R.values if isinstance(R, ReturnsMatrix) else np.asarray(R, dtype=float)


def furthest_sum_init(R, n: int, seed: int = 0) -> list[int]:
    """FurthestSum seeding: greedily pick mutually distant data columns.

    Starts from a seeded random column, grows the set by maximizing the sum
    of Euclidean distances to the chosen columns, then replaces the random
    starter with one more greedy pick. Exact duplicates of already chosen
    columns are skipped while alternatives remain.
    """
    X = _as_values(R)
    S = X.shape[1]
    if not 1 <= n <= S:
        raise FitError(f"n={n} out of range [1, {S}]")
    if n == S:
        return list(range(S))
    sq = np.sum(X**2, axis=0)
    dist = np.sqrt(np.maximum(sq[:, None] + sq[None, :] - 2.0 * (X.T @ X), 0.0))

    rng = np.random.default_rng(seed)
    starter = int(rng.integers(S))
    chosen = [starter]

    def next_pick() -> int:
        totals = dist[:, chosen].sum(axis=1)
        totals[chosen] = -np.inf
        # skip exact duplicates of chosen columns when possible
        dup = dist[:, chosen].min(axis=1) < 1e-12
        masked = np.where(dup, -np.inf, totals)
        if np.isfinite(masked).any():
            return int(np.argmax(masked))
        return int(np.argmax(totals))

    while len(chosen) < n + 1:
        chosen.append(next_pick())
    chosen.pop(0)
    return chosen


def _sse(R: np.ndarray, E: np.ndarray, W: np.ndarray) -> float:
    resid = R - E @ W
    return float(np.einsum("ij,ij->", resid, resid))


def _pg_steps(X, grad_fn, sse_fn, step, n_steps, max_halvings=30):
    """Backtracked projected-gradient steps: halve until SSE drops, double on success."""
    sse = sse_fn(X)
    for _ in range(n_steps):
        g = grad_fn(X)
        accepted = False
        for _ in range(max_halvings):
            candidate = project_columns_to_simplex(X - step * g)
            cand_sse = sse_fn(candidate)
            if cand_sse < sse:
                X, sse = candidate, cand_sse
                step *= 2.0
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
    return X, step, sse


def _check_stochastic(M: np.ndarray, axis: int, what: str) -> None:
    if np.any(M < -1e-12):
        raise FitError(f"{what} must be non-negative")
    if np.max(np.abs(M.sum(axis=axis) - 1.0)) > 1e-8:
        raise FitError(f"{what} columns must sum to 1")


def pcha_fit(
    R,
    n: int,
    opts: FitOptions | None = None,
    require_stage: bool = True,
) -> ArchetypeModel:
    """Alternating projected-gradient fit of R ~ R C W.

    Stops when the change in SSE per matrix element between outer
    iterations falls below ``opts.tolerance``. Pass
    ``require_stage=False`` to factorize returns that did not go through
    the market-removal pipeline.
    """
    opts = opts or FitOptions()
    if require_stage and isinstance(R, ReturnsMatrix) and R.stage != "market_removed":
        raise FitError(
            f"expected market_removed returns, got stage {R.stage!r} "
            "(pass require_stage=False to override)"
        )
    X = _as_values(R)
    if not np.all(np.isfinite(X)):
        raise FitError("returns contain non-finite entries")
    T, S = X.shape
    if not 1 <= n <= S:
        raise FitError(f"n={n} out of range [1, {S}]")

    if opts.init == "furthest_sum":
        idx = furthest_sum_init(X, n, opts.seed)
    else:
        idx = list(np.random.default_rng(opts.seed).choice(S, size=n, replace=False))
    C = np.zeros((S, n))
    C[idx, np.arange(n)] = 1.0
    W = np.full((n, S), 1.0 / n)

    step_c = step_w = 1.0
    sse = _sse(X, X @ C, W)
    history = []
    iterations = 0
    converged = False
    for iterations in range(1, opts.max_iterations + 1):
        prev = sse

        def grad_c(Cc):
            resid = X @ Cc @ W - X
            return 2.0 * X.T @ resid @ W.T

        C, step_c, sse = _pg_steps(
            C, grad_c, lambda Cc: _sse(X, X @ Cc, W), step_c, opts.inner_steps
        )
        E = X @ C

        def grad_w(Ww):
            return 2.0 * E.T @ (E @ Ww - X)

        W, step_w, sse = _pg_steps(
            W, grad_w, lambda Ww: _sse(X, E, Ww), step_w, opts.inner_steps
        )
        history.append(sse)
        if abs(prev - sse) / (T * S) < opts.tolerance:
            converged = True
            break

    E = X @ C
    sse = _sse(X, E, W)
    sst = float(np.einsum("ij,ij->", X, X))
    _check_stochastic(C, 0, "C")
    _check_stochastic(W, 0, "W")
    tickers = R.tickers if isinstance(R, ReturnsMatrix) else None
    return ArchetypeModel(
        n=n,
        C=C,
        W=W,
        E=E,
        sse=sse,
        r2=1.0 - sse / sst,
        iterations=iterations,
        converged=converged,
        seed=opts.seed,
        tickers=list(tickers) if tickers else None,
        factor_names=[f"factor_{f+1}" for f in range(n)],
        sse_history=tuple(history),
    )


def solve_weights_fixed_C(R, C: np.ndarray, opts: FitOptions | None = None) -> np.ndarray:
    """Optimal column-stochastic W for frozen archetype mixture C.

    The subproblem is convex, so the converged W does not depend on the
    initialization. ``opts.init`` is ignored; pass a warm start via the
    dedicated keyword in :func:`sectors.rolling.rolling_weights`.
    """
    return _solve_weights(
        _as_values(R), np.asarray(C, dtype=float), opts or FitOptions()
    )


def _solve_weights(
    X: np.ndarray,
    C: np.ndarray,
    opts: FitOptions,
    W0: np.ndarray | None = None,
) -> np.ndarray:
    T, S = X.shape
    if C.shape[0] != S:
        raise FitError(f"C has {C.shape[0]} rows, returns have {S} columns")
    _check_stochastic(C, 0, "C")
    n = C.shape[1]
    E = X @ C
    W = np.full((n, S), 1.0 / n) if W0 is None else W0.copy()

    def grad(Ww):
        return 2.0 * E.T @ (E @ Ww - X)

    step = 1.0
    sse = _sse(X, E, W)
    for _ in range(opts.max_iterations):
        prev = sse
        W, step, sse = _pg_steps(
            W, grad, lambda Ww: _sse(X, E, Ww), step, opts.inner_steps
        )
        if abs(prev - sse) / (T * S) < opts.tolerance:
            break
    _check_stochastic(W, 0, "W")
    return W


def solve_archetypes_fixed_W(R, W: np.ndarray, opts: FitOptions | None = None) -> np.ndarray:
    """Optimal column-stochastic C for frozen weights W (e.g. one-hot labels)."""
    opts = opts or FitOptions()
    X = _as_values(R)
    W = np.asarray(W, dtype=float)
    T, S = X.shape
    if W.shape[1] != S:
        raise FitError(f"W has {W.shape[1]} columns, returns have {S}")
    _check_stochastic(W, 0, "W")
    row_sums = W.sum(axis=1)
    if np.any(row_sums == 0):
        f = int(np.argmax(row_sums == 0))
        raise FitError(f"factor {f} has zero total weight: archetype unidentifiable")
    n = W.shape[0]
    C = np.full((S, n), 1.0 / S)

    def grad(Cc):
        resid = X @ Cc @ W - X
        return 2.0 * X.T @ resid @ W.T

    step = 1.0
    sse = _sse(X, X @ C, W)
    for _ in range(opts.max_iterations):
        prev = sse
        C, step, sse = _pg_steps(
            C, grad, lambda Cc: _sse(X, X @ Cc, W), step, opts.inner_steps
        )
        if abs(prev - sse) / (T * S) < opts.tolerance:
            break
    _check_stochastic(C, 0, "C")
    return C


def r2(model: ArchetypeModel, R) -> float:
    """Coefficient of determination 1 - SSE/SST of the reconstruction."""
    X = _as_values(R)
    sst = float(np.einsum("ij,ij->", X, X))
    if sst == 0.0:
        raise FitError("returns matrix has zero norm")
    return 1.0 - _sse(X, model.E, model.W) / sst


def align_factors(E_fitted: np.ndarray, E_reference: np.ndarray) -> np.ndarray:
    """Greedy factor permutation matching fitted to reference archetype series.

    Matches columns by maximal Pearson correlation without replacement;
    returns ``perm`` such that ``E_fitted[:, perm[j]]`` corresponds to
    ``E_reference[:, j]``.
    """
    n = E_reference.shape[1]
    corr = np.corrcoef(E_reference.T, E_fitted.T)[:n, n:]
    perm = np.full(n, -1)
    taken = np.zeros(E_fitted.shape[1], dtype=bool)
    for _ in range(n):
        masked = np.where(taken[None, :] | (perm[:, None] >= 0), -np.inf, corr)
        i, j = np.unravel_index(np.argmax(masked), masked.shape)
        perm[i] = j
        taken[j] = True
    return perm


@dataclass(frozen=True)
class SweepResult:
    models: list[ArchetypeModel]
    table: list[dict]  # rows: n, r2, r2_over_explainable


def sweep_n(R, n_range: tuple[int, int], opts: FitOptions | None = None) -> SweepResult:
    """One fit per rank in [n_lo, n_hi], with the shared-seed policy.

    Each rank reruns FurthestSum with the same seed so adjacent-rank models
    are comparable. The table reports r-squared and its share of the
    RMT-explainable variation of R.
    """
    opts = opts or FitOptions()
    X = _as_values(R)
    n_lo, n_hi = n_range
    if not 1 <= n_lo <= n_hi <= X.shape[1]:
        raise FitError(f"n_range {n_range} out of bounds for S={X.shape[1]}")

    spectrum = svd(X)
    bound = wishart_bounds(*X.shape)
    exclude = isinstance(R, ReturnsMatrix) and R.market_method == "none"
    stiff = count_above_bound(spectrum, bound, exclude_market=exclude)
    total_sq = float(np.einsum("ij,ij->", X, X))
    ev = (
        explainable_variation(spectrum, stiff, total_sq, exclude_market=exclude)
        if stiff >= 1
        else float("nan")
    )

    models = []
    table = []
    for n in range(n_lo, n_hi + 1):
        model = pcha_fit(R, n, opts, require_stage=False)
        models.append(model)
        table.append(
            {
                "n": n,
                "r2": model.r2,
                "explainable_variation": ev,
                "r2_over_explainable": model.r2 / ev if ev == ev else float("nan"),
            }
        )
    return SweepResult(models=models, table=table)


def model_to_dict(model: ArchetypeModel, tolerance: float | None = None) -> dict:
    """JSON-ready model record; C and W are stored column-major."""
    S = model.C.shape[0]
    return {
        "n": model.n,
        "seed": model.seed,
        "tolerance": tolerance,
        "iterations": model.iterations,
        "converged": model.converged,
        "sse": model.sse,
        "r2": model.r2,
        "tickers": model.tickers or [f"s{j}" for j in range(S)],
        "C": [model.C[:, f].tolist() for f in range(model.n)],
        "W": [model.W[:, s].tolist() for s in range(S)],
        "factor_names": model.factor_names,
    }


def write_model_json(model: ArchetypeModel, path, tolerance: float | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model, tolerance), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_model_json(path) -> ArchetypeModel:
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    C = np.array(d["C"]).T
    W = np.array(d["W"]).T
    return ArchetypeModel(
        n=d["n"],
        C=C,
        W=W,
        E=np.zeros((0, d["n"])),  # E is data-dependent; recompute as R @ C
        sse=d["sse"],
        r2=d["r2"],
        iterations=d["iterations"],
        converged=d["converged"],
        seed=d["seed"],
        tickers=list(d["tickers"]),
        factor_names=list(d["factor_names"]),
    )


def write_matrix_csv(M: np.ndarray, row_labels, col_labels, path, corner="") -> None:
    """Labelled CSV export used for C and W matrices."""
    M = np.asarray(M)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(corner + "," + ",".join(map(str, col_labels)) + "\n")
        for i, label in enumerate(row_labels):
            fh.write(str(label) + "," + ",".join(f"{v:.17g}" for v in M[i]) + "\n")
