"""SVD spectra, Wishart noise bounds, and eigenplane projections."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np


class SpectraError(ValueError):
    pass


@dataclass(frozen=True)
class SvdSpectrum:
    """Descending singular values with their orthonormal vector pairs."""

    singular_values: np.ndarray
    left_vectors: np.ndarray   # T x k
    right_vectors: np.ndarray  # S x k
    source_shape: tuple[int, int]

    def reconstruct(self) -> np.ndarray:
        return (self.left_vectors * self.singular_values) @ self.right_vectors.T


@dataclass(frozen=True)
class WishartBound:
    """Hard-edge singular-value bounds sqrt(alpha) +/- sqrt(beta) of a pure-noise matrix."""

    lower: float
    upper: float
    alpha: int
    beta: int


def svd(matrix: np.ndarray, k: int | None = None) -> SvdSpectrum:
    """Top-k SVD with a deterministic sign convention.

    The sign of each pair (u_i, v_i) is fixed so that the largest-magnitude
    component of the right vector is positive, making repeated calls
    bit-identical.
    """
    matrix = np.asarray(matrix, dtype=float)
    if not np.all(np.isfinite(matrix)):
        raise SpectraError("matrix contains non-finite entries")
    T, S = matrix.shape
    kmax = min(T, S)
    if k is None:
        k = kmax
    if not 1 <= k <= kmax:
        raise SpectraError(f"k={k} out of range [1, {kmax}]")
    u, s, vt = np.linalg.svd(matrix, full_matrices=False)
    v = vt.T
    # sign convention: largest |component| of each right vector made positive
    pivots = np.argmax(np.abs(v), axis=0)
    signs = np.sign(v[pivots, np.arange(v.shape[1])])
    signs[signs == 0] = 1.0
    u = u * signs
    v = v * signs
    return SvdSpectrum(
        singular_values=s[:k].copy(),
        left_vectors=u[:, :k].copy(),
        right_vectors=v[:, :k].copy(),
        source_shape=(T, S),
    )


def wishart_bounds(alpha: int, beta: int) -> WishartBound:
    """Singular-value edges sqrt(alpha) +/- sqrt(beta) for an alpha x beta noise matrix."""
    if alpha <= 0 or beta <= 0:
        raise SpectraError("matrix dimensions must be positive")
    if alpha < beta:
        alpha, beta = beta, alpha
    return WishartBound(
        lower=math.sqrt(alpha) - math.sqrt(beta),
        upper=math.sqrt(alpha) + math.sqrt(beta),
        alpha=alpha,
        beta=beta,
    )


def count_above_bound(
    spectrum: SvdSpectrum, bound: WishartBound, exclude_market: bool = False
) -> int:
    """Number of singular values strictly above the noise edge.

    With ``exclude_market`` the largest value (the market mode) is skipped
    before counting.
    """
    values = spectrum.singular_values
    if values.size == 0:
        raise SpectraError("empty spectrum")
    if exclude_market:
        values = values[1:]
    return int(np.sum(values > bound.upper))


def explainable_variation(
    spectrum: SvdSpectrum,
    k: int,
    total_sq: float,
    exclude_market: bool = False,
) -> float:
    """Fraction of squared Frobenius norm carried by the k stiffest modes.

    Uses the identity ||M||_F^2 = sum of squared singular values; the sum
    starts at the second value when the market mode is excluded.
    """
    if k < 1:
        raise SpectraError("k must be >= 1")
    first = 1 if exclude_market else 0
    values = spectrum.singular_values[first : first + k]
    if values.size < k:
        raise SpectraError(
            f"k={k} exceeds available singular values ({values.size})"
        )
    return float(np.sum(values**2) / total_sq)


def eigenplane_projection(basis_source: np.ndarray, data: np.ndarray) -> np.ndarray:
    """Project data columns onto the left singular basis of ``basis_source``.

    Returns the n x S coordinate matrix v = X^T data; consecutive row pairs
    of v are the 2-D eigenplanes used for simplex visualization.
    """
    basis_source = np.asarray(basis_source, dtype=float)
    data = np.asarray(data, dtype=float)
    if basis_source.shape[0] != data.shape[0]:
        raise SpectraError(
            f"row mismatch: basis {basis_source.shape[0]} vs data {data.shape[0]}"
        )
    spec = svd(basis_source)
    return spec.left_vectors.T @ data


def write_spectrum_csv(spectrum: SvdSpectrum, bound: WishartBound, path) -> None:
    """`index,singular_value,above_bound` export."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("index,singular_value,above_bound\n")
        for i, s in enumerate(spectrum.singular_values):
            fh.write(f"{i},{s:.17g},{int(s > bound.upper)}\n")


def histogram_json(
    spectrum: SvdSpectrum, bound: WishartBound, bins: int = 50
) -> dict:
    """Binned singular-value counts plus the noise edges, for plotting."""
    counts, edges = np.histogram(spectrum.singular_values, bins=bins)
    return {
        "bin_edges": [float(e) for e in edges],
        "counts": [int(c) for c in counts],
        "wishart_lower": bound.lower,
        "wishart_upper": bound.upper,
    }


def write_histogram_json(
    spectrum: SvdSpectrum, bound: WishartBound, path, bins: int = 50
) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(histogram_json(spectrum, bound, bins), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_eigenplane_csv(coords: np.ndarray, tickers: list[str], path) -> None:
    """`ticker,coord_1..coord_n` export of projection coordinates."""
    n, S = coords.shape
    if len(tickers) != S:
        raise SpectraError("ticker count does not match coordinate columns")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("ticker," + ",".join(f"coord_{i+1}" for i in range(n)) + "\n")
        for j, t in enumerate(tickers):
            fh.write(t + "," + ",".join(f"{c:.17g}" for c in coords[:, j]) + "\n")
