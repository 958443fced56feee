"""Sum-to-one least-squares maps between decompositions of adjacent rank."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


class HierarchyError(ValueError):
    pass


@dataclass(frozen=True)
class SectorFlowMap:
    """Map S expressing each target archetype as a sum-to-one mix of source ones.

    ``matrix`` is source_n x target_n; E_target ~ E_source @ matrix. Entries
    may be negative: only the sum-to-one constraint is imposed by the fit.
    """

    source_n: int
    target_n: int
    matrix: np.ndarray
    residual: float


@dataclass(frozen=True)
class SankeyGraph:
    levels: list[int]
    nodes: list[dict]          # {level, factor, size}
    links: list[dict]          # {source: {level, factor}, target: {...}, value}
    clipped_mass: list[float]  # one entry per level transition


def fit_sector_map(E_target: np.ndarray, E_source: np.ndarray) -> SectorFlowMap:
    """Least squares ||E_target - E_source S||_F^2 with columns of S summing to 1.

    Solved per target column by Lagrange elimination of the equality
    constraint (KKT system); no sign constraint is imposed.
    """
    E_target = np.atleast_2d(np.asarray(E_target, dtype=float))
    E_source = np.atleast_2d(np.asarray(E_source, dtype=float))
    if E_target.shape[0] != E_source.shape[0]:
        raise HierarchyError(
            f"row mismatch: target {E_target.shape[0]} vs source {E_source.shape[0]}"
        )
    b = E_source.shape[1]
    a = E_target.shape[1]

    gram = E_source.T @ E_source
    kkt = np.zeros((b + 1, b + 1))
    kkt[:b, :b] = 2.0 * gram
    kkt[:b, b] = 1.0
    kkt[b, :b] = 1.0
    cond = np.linalg.cond(kkt)
    if not np.isfinite(cond) or cond > 1e12:
        raise HierarchyError(
            f"constrained system singular or near-singular (KKT condition {cond:.3g}); "
            "source archetypes are rank deficient"
        )
    rhs = np.zeros((b + 1, a))
    rhs[:b] = 2.0 * E_source.T @ E_target
    rhs[b] = 1.0
    S = np.linalg.solve(kkt, rhs)[:b]
    residual = float(np.linalg.norm(E_target - E_source @ S))
    return SectorFlowMap(source_n=b, target_n=a, matrix=S, residual=residual)


def node_sizes(W: np.ndarray) -> np.ndarray:
    """Row sums of W: total market participation per factor."""
    W = np.asarray(W, dtype=float)
    if np.any(W < -1e-12):
        raise HierarchyError("W must be non-negative")
    if np.max(np.abs(W.sum(axis=0) - 1.0)) > 1e-8:
        raise HierarchyError("W columns must sum to 1")
    return W.sum(axis=1)


def propagate_sizes(
    sizes_top: np.ndarray, chain: list[SectorFlowMap]
) -> list[np.ndarray]:
    """Push the top-rank size vector down the chain of flow maps.

    ``chain`` is ordered from the highest-rank transition downward; each
    map's matrix multiplies the current size vector. Returns sizes per
    level starting with the top.
    """
    sizes = [np.asarray(sizes_top, dtype=float)]
    for fmap in chain:
        if fmap.matrix.shape[1] != sizes[-1].shape[0]:
            raise HierarchyError(
                f"map {fmap.source_n}x{fmap.target_n} does not compose with "
                f"size vector of length {sizes[-1].shape[0]}"
            )
        sizes.append(fmap.matrix @ sizes[-1])
    return sizes


def sankey_export(
    chain: list[SectorFlowMap], sizes_per_level: list[np.ndarray]
) -> SankeyGraph:
    """Sankey node/link data with negative flow coefficients clipped.

    Link value is S[f_src, f_tgt] * size[f_tgt]; negative coefficients are
    omitted and their mass accounted per transition in ``clipped_mass``.
    """
    if len(sizes_per_level) != len(chain) + 1:
        raise HierarchyError("need one size vector per level")
    levels = [len(s) for s in sizes_per_level]
    nodes = [
        {"level": lvl, "factor": f, "size": float(sizes[f])}
        for lvl, sizes in zip(levels, sizes_per_level)
        for f in range(len(sizes))
    ]
    links = []
    clipped = []
    for i, fmap in enumerate(chain):
        top_level, low_level = levels[i], levels[i + 1]
        top_sizes = sizes_per_level[i]
        mass = 0.0
        for f_tgt in range(fmap.target_n):
            for f_src in range(fmap.source_n):
                coeff = fmap.matrix[f_src, f_tgt]
                value = coeff * float(top_sizes[f_tgt])
                if coeff < 0:
                    mass += -value
                    continue
                if value == 0.0:
                    continue
                links.append(
                    {
                        "source": {"level": low_level, "factor": f_src},
                        "target": {"level": top_level, "factor": f_tgt},
                        "value": float(value),
                    }
                )
        clipped.append(mass)
    return SankeyGraph(levels=levels, nodes=nodes, links=links, clipped_mass=clipped)


def sankey_to_dict(graph: SankeyGraph) -> dict:
    return {
        "levels": graph.levels,
        "nodes": graph.nodes,
        "links": graph.links,
        "clipped_mass": graph.clipped_mass,
    }


def write_sankey_json(graph: SankeyGraph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(sankey_to_dict(graph), fh, indent=2, sort_keys=True)
        fh.write("\n")


def composition_report(fmap: SectorFlowMap, direction: str = "target_in_source") -> list[dict]:
    """Normalized composition fractions of each factor in terms of the other rank.

    ``target_in_source`` tabulates columns of S. The reverse direction
    requires a separate fit with roles swapped; this function only
    normalizes and tabulates the map it is given.
    """
    if direction not in ("target_in_source", "source_in_target"):
        raise HierarchyError(f"unknown direction {direction!r}")
    M = fmap.matrix if direction == "target_in_source" else fmap.matrix.T
    rows = []
    for f in range(M.shape[1]):
        col = M[:, f]
        total = col.sum()
        fractions = col / total if total != 0 else col
        for comp in range(M.shape[0]):
            rows.append(
                {
                    "factor": f,
                    "component_factor": comp,
                    "fraction": float(fractions[comp]),
                }
            )
    return rows


def write_composition_csv(rows_per_level: dict[int, list[dict]], path) -> None:
    """`level,factor,component_factor,fraction` export."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("level,factor,component_factor,fraction\n")
        for level in sorted(rows_per_level):
            for row in rows_per_level[level]:
                fh.write(
                    f"{level},{row['factor']},{row['component_factor']},"
                    f"{row['fraction']:.17g}\n"
                )
