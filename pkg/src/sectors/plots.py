"""Matplotlib rendering of the delimited outputs to figure files.

Each function takes already-computed artifacts and writes one PNG next to
the CSV/JSON it visualizes. Rendering is best-effort presentation; the
delimited files remain the canonical outputs.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .hierarchy import SankeyGraph
from .reports import IndexSeries
from .rolling import RollingResult
from .spectra import SvdSpectrum, WishartBound


def save_spectrum_histogram(
    spectrum: SvdSpectrum, bound: WishartBound, path, bins: int = 50
) -> None:
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.hist(spectrum.singular_values, bins=bins, color="steelblue", alpha=0.8)
    ax.axvline(bound.upper, color="crimson", ls="--", label="noise edge")
    ax.set_xlabel("singular value")
    ax.set_ylabel("count")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_eigenplane_scatter(coords: np.ndarray, path, pair: tuple[int, int] = (0, 1)) -> None:
    i, j = pair
    fig, ax = plt.subplots(figsize=(5.5, 5.5))
    ax.scatter(coords[i], coords[j], s=12, alpha=0.6)
    ax.set_xlabel(f"coord {i + 1}")
    ax.set_ylabel(f"coord {j + 1}")
    ax.axhline(0, color="gray", lw=0.5)
    ax.axvline(0, color="gray", lw=0.5)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_index_lines(series: IndexSeries, path) -> None:
    T, n = series.values.shape
    fig, ax = plt.subplots(figsize=(8, 4.5))
    x = np.arange(T)
    for f in range(n):
        ax.plot(x, series.values[:, f], lw=1.2, label=f"factor {f + 1}")
    ax.set_xlabel("trading day")
    ax.set_ylabel(series.kind.replace("_", " "))
    ax.legend(fontsize=8, ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_sweep_curve(table: list[dict], path) -> None:
    ns = [row["n"] for row in table]
    r2s = [row["r2"] for row in table]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(ns, r2s, "o-", color="steelblue")
    ax.set_xlabel("number of factors")
    ax.set_ylabel("r squared")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_weight_pies(W: np.ndarray, tickers: list[str], path, max_stocks: int = 12) -> None:
    n, S = W.shape
    count = min(S, max_stocks)
    cols = min(4, count)
    rows = (count + cols - 1) // cols
    fig, axes = plt.subplots(rows, cols, figsize=(3 * cols, 3 * rows))
    axes = np.atleast_1d(axes).ravel()
    colors = plt.cm.tab10(np.linspace(0, 1, n))
    for s in range(count):
        axes[s].pie(np.maximum(W[:, s], 0.0), colors=colors)
        axes[s].set_title(tickers[s], fontsize=9)
    for ax in axes[count:]:
        ax.axis("off")
    fig.legend(
        [plt.Rectangle((0, 0), 1, 1, fc=c) for c in colors],
        [f"factor {f + 1}" for f in range(n)],
        loc="lower center",
        ncol=min(n, 5),
        fontsize=8,
    )
    fig.tight_layout(rect=(0, 0.06, 1, 1))
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_flow_stack(
    result: RollingResult, tickers: list[str], stock: int, path
) -> None:
    W = np.stack(result.weights)  # centers x n x S
    n = W.shape[1]
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.stackplot(
        result.centers,
        [W[:, f, stock] for f in range(n)],
        labels=[f"factor {f + 1}" for f in range(n)],
    )
    ax.set_xlabel("window center (trading day)")
    ax.set_ylabel("weight")
    ax.set_ylim(0, 1)
    ax.set_title(tickers[stock])
    ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_sankey_links(graph: SankeyGraph, path) -> None:
    """Schematic level-to-level flow rendering of the Sankey data."""
    fig, ax = plt.subplots(figsize=(8, 5))
    ypos: dict[tuple[int, int], float] = {}
    by_level: dict[int, list[dict]] = {}
    for node in graph.nodes:
        by_level.setdefault(node["level"], []).append(node)
    level_x = {lvl: i for i, lvl in enumerate(sorted(by_level))}
    for lvl, nodes in by_level.items():
        total = sum(nd["size"] for nd in nodes) or 1.0
        y = 0.0
        for nd in nodes:
            h = nd["size"] / total
            ypos[(lvl, nd["factor"])] = y + h / 2
            ax.add_patch(
                plt.Rectangle(
                    (level_x[lvl] - 0.04, y), 0.08, h * 0.95, fc="steelblue"
                )
            )
            y += h
    max_val = max((lk["value"] for lk in graph.links), default=1.0)
    for lk in graph.links:
        s = (lk["source"]["level"], lk["source"]["factor"])
        t = (lk["target"]["level"], lk["target"]["factor"])
        ax.plot(
            [level_x[s[0]], level_x[t[0]]],
            [ypos[s], ypos[t]],
            color="gray",
            alpha=0.6,
            lw=0.5 + 4.0 * lk["value"] / max_val,
        )
    ax.set_xticks(list(level_x.values()))
    ax.set_xticklabels([f"n={lvl}" for lvl in sorted(by_level)])
    ax.set_yticks([])
    ax.set_xlim(-0.5, len(by_level) - 0.5)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
