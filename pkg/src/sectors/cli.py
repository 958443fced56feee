"""`sectors` command line: the pipeline as file-to-file subcommands.

Stages communicate through persisted CSV/JSON artifacts so every
intermediate is inspectable and re-runnable. Option precedence is
flags > config file > defaults; the effective config is dumped beside the
outputs and its hash is stamped into every artifact.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import archetypes, data, hierarchy, plots, reports, rolling, spectra

# keys that name files; excluded from the config hash so reruns into a
# different directory stay byte-identical
_PATH_KEYS = {"out", "prices", "metadata", "returns", "model", "models", "config"}

_DEFAULTS = {
    "layout": "long",
    "market_method": "cross_sectional_mean",
    "n": 8,
    "n_min": 2,
    "n_max": 9,
    "tolerance": 1e-7,
    "max_iterations": 500,
    "init": "furthest_sum",
    "seed": 0,
    "sigma": 250.0,
    "step": 50,
    "mu_start": 0,
    "mu_end": 5000,
    "warm_start": False,
    "annualization_days": 250,
    "top_k": 20,
    "figures": True,
}


class CliError(ValueError):
    pass


def _effective_config(args: argparse.Namespace) -> dict:
    config = dict(_DEFAULTS)
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            config.update(json.load(fh))
    for key, value in vars(args).items():
        if key in ("command", "func"):
            continue
        if value is not None:
            config[key] = value
    return config


def _config_hash(config: dict) -> str:
    hashable = {
        k: v for k, v in sorted(config.items()) if k not in _PATH_KEYS
    }
    return hashlib.sha256(
        json.dumps(hashable, sort_keys=True).encode()
    ).hexdigest()[:16]


def _prepare_out(config: dict) -> tuple[Path, str]:
    out = Path(config.get("out") or ".")
    out.mkdir(parents=True, exist_ok=True)
    h = _config_hash(config)
    dump = {k: v for k, v in sorted(config.items()) if k != "config"}
    dump["config_hash"] = h
    with open(out / "config.json", "w", encoding="utf-8") as fh:
        json.dump(dump, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    return out, h


def _stamp_csv(path: Path, h: str, seed) -> None:
    text = path.read_text(encoding="utf-8")
    path.write_text(f"# config_hash={h} seed={seed}\n" + text, encoding="utf-8")


def _stamp_json(path: Path, h: str, seed) -> None:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    payload["config_hash"] = h
    payload["seed"] = payload.get("seed", seed)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fit_options(config: dict) -> archetypes.FitOptions:
    return archetypes.FitOptions(
        tolerance=float(config["tolerance"]),
        max_iterations=int(config["max_iterations"]),
        seed=int(config["seed"]),
        init=config["init"],
    )


def _load_model_and_returns(config: dict):
    rets = data.read_returns_csv(config["returns"])
    model = archetypes.read_model_json(config["model"])
    if rets.tickers and model.tickers and rets.tickers != model.tickers:
        raise CliError(
            f"returns carry {len(rets.tickers)} tickers but the model was fit "
            f"on {len(model.tickers)}; artifacts do not match"
        )
    return model, rets


def cmd_ingest(config: dict) -> None:
    out, h = _prepare_out(config)
    table = data.load_prices(config["prices"], layout=config["layout"])
    if config.get("metadata"):
        table = data.PriceTable(
            dates=table.dates,
            tickers=table.tickers,
            prices=table.prices,
            metadata=data.load_metadata(config["metadata"]),
        )
    rets = data.preprocess(table, market_method=config["market_method"])
    data.write_returns_csv(rets, out / "returns.csv")
    _stamp_csv(out / "returns.csv", h, config["seed"])
    provenance = {
        "rows": rets.shape[0],
        "columns": rets.shape[1],
        "stage": rets.stage,
        "market_method": rets.market_method,
        "dropped_tickers": [],
        "config_hash": h,
        "seed": config["seed"],
    }
    with open(out / "provenance.json", "w", encoding="utf-8") as fh:
        json.dump(provenance, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_factor(config: dict) -> None:
    out, h = _prepare_out(config)
    rets = data.read_returns_csv(config["returns"])
    opts = _fit_options(config)
    model = archetypes.pcha_fit(rets, int(config["n"]), opts)
    archetypes.write_model_json(model, out / "model.json", tolerance=opts.tolerance)
    _stamp_json(out / "model.json", h, config["seed"])
    tickers = model.tickers or [f"s{j}" for j in range(model.C.shape[0])]
    archetypes.write_matrix_csv(
        model.C, tickers, model.factor_names, out / "C.csv", corner="ticker"
    )
    archetypes.write_matrix_csv(
        model.W, model.factor_names, tickers, out / "W.csv", corner="factor"
    )
    for name in ("C.csv", "W.csv"):
        _stamp_csv(out / name, h, config["seed"])


def cmd_sweep(config: dict) -> None:
    out, h = _prepare_out(config)
    rets = data.read_returns_csv(config["returns"])
    opts = _fit_options(config)
    result = archetypes.sweep_n(
        rets, (int(config["n_min"]), int(config["n_max"])), opts
    )
    for model in result.models:
        path = out / f"model_n{model.n}.json"
        archetypes.write_model_json(model, path, tolerance=opts.tolerance)
        _stamp_json(path, h, config["seed"])
    with open(out / "sweep.csv", "w", encoding="utf-8") as fh:
        fh.write("n,r2,explainable_variation,r2_over_explainable\n")
        for row in result.table:
            fh.write(
                f"{row['n']},{row['r2']:.17g},{row['explainable_variation']:.17g},"
                f"{row['r2_over_explainable']:.17g}\n"
            )
    _stamp_csv(out / "sweep.csv", h, config["seed"])
    if config["figures"]:
        plots.save_sweep_curve(result.table, out / "sweep.png")


def cmd_roll(config: dict) -> None:
    out, h = _prepare_out(config)
    model, rets = _load_model_and_returns(config)
    spec = rolling.WindowSpec(
        sigma=float(config["sigma"]),
        step=int(config["step"]),
        mu_start=int(config["mu_start"]),
        mu_end=int(config["mu_end"]),
    )
    result = rolling.rolling_weights(
        rets, model.C, spec, _fit_options(config),
        warm_start=bool(config["warm_start"]),
    )
    tickers = rets.tickers or [f"s{j}" for j in range(rets.shape[1])]
    rolling.write_rolling_csv(result, tickers, out / "rolling.csv")
    _stamp_csv(out / "rolling.csv", h, config["seed"])
    rolling.write_trajectories_json(result, tickers, out / "trajectories.json")
    _stamp_json(out / "trajectories.json", h, config["seed"])
    if config["figures"]:
        for s in range(min(4, len(tickers))):
            plots.save_flow_stack(result, tickers, s, out / f"flow_{tickers[s]}.png")


def cmd_hierarchy(config: dict) -> None:
    out, h = _prepare_out(config)
    rets = data.read_returns_csv(config["returns"])
    models = [archetypes.read_model_json(p) for p in config["models"]]
    models.sort(key=lambda m: m.n, reverse=True)
    if len(models) < 2:
        raise CliError("hierarchy needs at least two models of different rank")
    if len({m.n for m in models}) != len(models):
        raise CliError("hierarchy models must have distinct ranks")
    E = {m.n: rets.values @ m.C for m in models}
    chain = [
        hierarchy.fit_sector_map(E[hi.n], E[lo.n])
        for hi, lo in zip(models, models[1:])
    ]
    sizes = hierarchy.propagate_sizes(hierarchy.node_sizes(models[0].W), chain)
    graph = hierarchy.sankey_export(chain, sizes)
    hierarchy.write_sankey_json(graph, out / "sankey.json")
    _stamp_json(out / "sankey.json", h, config["seed"])
    compositions = {
        hi.n: hierarchy.composition_report(fmap)
        for (hi, fmap) in zip(models, chain)
    }
    hierarchy.write_composition_csv(compositions, out / "composition.csv")
    _stamp_csv(out / "composition.csv", h, config["seed"])
    if config["figures"]:
        plots.save_sankey_links(graph, out / "sankey.png")


def cmd_spectra(config: dict) -> None:
    out, h = _prepare_out(config)
    rets = data.read_returns_csv(config["returns"])
    spectrum = spectra.svd(rets.values)
    bound = spectra.wishart_bounds(*rets.shape)
    spectra.write_spectrum_csv(spectrum, bound, out / "spectrum.csv")
    _stamp_csv(out / "spectrum.csv", h, config["seed"])
    spectra.write_histogram_json(spectrum, bound, out / "histogram.json")
    _stamp_json(out / "histogram.json", h, config["seed"])
    if config.get("model"):
        model = archetypes.read_model_json(config["model"])
        coords = spectra.eigenplane_projection(rets.values @ model.C, rets.values)
        tickers = rets.tickers or [f"s{j}" for j in range(rets.shape[1])]
        spectra.write_eigenplane_csv(coords, tickers, out / "eigenplanes.csv")
        _stamp_csv(out / "eigenplanes.csv", h, config["seed"])
        if config["figures"] and coords.shape[0] >= 2:
            plots.save_eigenplane_scatter(coords, out / "eigenplane_1_2.png")
    if config["figures"]:
        plots.save_spectrum_histogram(spectrum, bound, out / "spectrum.png")


def cmd_index(config: dict) -> None:
    out, h = _prepare_out(config)
    table = data.interpolate_missing(
        data.load_prices(config["prices"], layout=config["layout"])
    )
    model = archetypes.read_model_json(config["model"])
    series = reports.price_index(table, model.C, tickers=model.tickers)
    reports.write_index_csv(series, out / "price_index.csv")
    _stamp_csv(out / "price_index.csv", h, config["seed"])
    figures = [("price_index", series)]
    if config.get("returns"):
        rets = data.read_returns_csv(config["returns"])
        cumulative = reports.cumulative_returns(
            rets.values @ model.C,
            annualization_days=int(config["annualization_days"]),
            dates=rets.dates,
        )
        reports.write_index_csv(cumulative, out / "cumulative_returns.csv")
        _stamp_csv(out / "cumulative_returns.csv", h, config["seed"])
        figures.append(("cumulative_returns", cumulative))
    if config["figures"]:
        for name, s in figures:
            plots.save_index_lines(s, out / f"{name}.png")


def cmd_report(config: dict) -> None:
    out, h = _prepare_out(config)
    model = archetypes.read_model_json(config["model"])
    metadata = (
        data.load_metadata(config["metadata"]) if config.get("metadata") else {}
    )
    tickers = model.tickers
    weight_rows = reports.weights_report(model.W, metadata, tickers)
    reports.write_weights_csv(weight_rows, model.n, out / "weights.csv")
    _stamp_csv(out / "weights.csv", h, config["seed"])
    constituent_rows = []
    k = min(int(config["top_k"]), model.C.shape[0])
    for f in range(model.n):
        constituent_rows.extend(
            reports.top_constituents(model.C, f, k, metadata, tickers)
        )
    reports.write_constituents_csv(constituent_rows, out / "constituents.csv")
    _stamp_csv(out / "constituents.csv", h, config["seed"])
    if config["figures"]:
        plots.save_weight_pies(model.W, tickers, out / "weight_pies.png")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int, help="random seed recorded in artifacts")
    p.add_argument("--out", help="output directory")
    p.add_argument(
        "--no-figures", dest="figures", action="store_const", const=False,
        help="skip rendering PNG figures",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sectors",
        description="Canonical sector decomposition of stock price returns",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="prices -> market-removed returns matrix")
    p.add_argument("--prices", required=True)
    p.add_argument("--metadata")
    p.add_argument("--layout", choices=("long", "wide"))
    p.add_argument(
        "--market-method", dest="market_method",
        choices=("cross_sectional_mean", "svd_projection"),
    )
    _add_common(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("factor", help="fit one archetypal decomposition")
    p.add_argument("--returns", required=True)
    p.add_argument("--n", type=int)
    p.add_argument("--tolerance", type=float)
    p.add_argument("--max-iterations", dest="max_iterations", type=int)
    p.add_argument("--init", choices=("furthest_sum", "random_columns"))
    _add_common(p)
    p.set_defaults(func=cmd_factor)

    p = sub.add_parser("sweep", help="fit a range of ranks and tabulate r2")
    p.add_argument("--returns", required=True)
    p.add_argument("--n-min", dest="n_min", type=int)
    p.add_argument("--n-max", dest="n_max", type=int)
    p.add_argument("--tolerance", type=float)
    p.add_argument("--max-iterations", dest="max_iterations", type=int)
    p.add_argument("--init", choices=("furthest_sum", "random_columns"))
    _add_common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("roll", help="Gaussian rolling-window weights, corners fixed")
    p.add_argument("--returns", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--sigma", type=float)
    p.add_argument("--step", type=int)
    p.add_argument("--mu-start", dest="mu_start", type=int)
    p.add_argument("--mu-end", dest="mu_end", type=int)
    p.add_argument("--tolerance", type=float)
    p.add_argument("--max-iterations", dest="max_iterations", type=int)
    p.add_argument(
        "--warm-start", dest="warm_start", action="store_const", const=True
    )
    _add_common(p)
    p.set_defaults(func=cmd_roll)

    p = sub.add_parser("hierarchy", help="flow maps between adjacent-rank models")
    p.add_argument("--returns", required=True)
    p.add_argument("--models", nargs="+", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_hierarchy)

    p = sub.add_parser("spectra", help="singular spectrum and noise bounds")
    p.add_argument("--returns", required=True)
    p.add_argument("--model", help="optional model for eigenplane coordinates")
    _add_common(p)
    p.set_defaults(func=cmd_spectra)

    p = sub.add_parser("index", help="sector price indices from a fitted model")
    p.add_argument("--prices", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--layout", choices=("long", "wide"))
    p.add_argument("--returns", help="optional returns for cumulative series")
    p.add_argument(
        "--annualization-days", dest="annualization_days", type=int
    )
    _add_common(p)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("report", help="weights and constituent tables")
    p.add_argument("--model", required=True)
    p.add_argument("--metadata")
    p.add_argument("--top-k", dest="top_k", type=int)
    _add_common(p)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _effective_config(args)
        args.func(config)
    except (
        data.DataError,
        reports.ReportError,
        CliError,
        FileNotFoundError,
        json.JSONDecodeError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (
        archetypes.FitError,
        spectra.SpectraError,
        hierarchy.HierarchyError,
        rolling.RollingError,
        np.linalg.LinAlgError,
        FloatingPointError,
    ) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
