"""End-to-end recipes that regenerate the plot data behind each figure panel."""

from __future__ import annotations

import json
import logging
from dataclasses import replace
from pathlib import Path

from .config import SCALES, RunConfig, save_run_config
from .dataset import DEFAULT_TIMES, FeatureSchema, GridConfig, generate, project
from .evaluation import (
    KnnSettings,
    data_structure_map,
    evaluate_scenario,
    mse_vs_nd,
    segmentation_fraction,
    split_config,
    write_curve,
    write_map,
    write_report,
    write_scatter,
)

log = logging.getLogger(__name__)

FIGURES = ("2a", "2b", "2c", "2d", "2e", "3maps", "3h")
SCATTER_ND = (1, 3, 5)
NOISE = 0.03
DEFAULT_SEED = 20211

# name -> (model, observable, relative noise, gamma known)
SCENARIOS = {
    "baseline": ("jc", "sz", 0.0, True),
    "sz_known": ("jc", "sz", NOISE, True),
    "sz_unknown": ("jc", "sz", NOISE, False),
    "sy_unknown": ("jc", "sy", NOISE, False),
    "rabi_sz_unknown": ("rabi", "sz", NOISE, False),
    "rabi_sy_unknown": ("rabi", "sy", NOISE, False),
}

SCATTER_FIGS = {"2a": "baseline", "2b": "sz_known", "2c": "sz_unknown", "2d": "sy_unknown"}
CURVE_FIGS = {
    "2e": ("baseline", "sz_known", "sz_unknown", "sy_unknown"),
    "3h": ("sz_unknown", "sy_unknown", "rabi_sz_unknown", "rabi_sy_unknown"),
}


def scenario_grid(name: str, scale: str = "desk", seed: int = DEFAULT_SEED,
                  n_T: int | None = None, n_gamma: int | None = None) -> GridConfig:
    model, obs, noise, known = SCENARIOS[name]
    sT, sg = SCALES[scale]
    n_T = n_T or sT
    gamma_range = (1.0, 1.0, 1) if known else (0.1, 2.0, n_gamma or sg)
    return GridConfig(model=model, T_range=(0.1, 2.0, n_T), gamma_range=gamma_range,
                      schema=FeatureSchema.uniform(DEFAULT_TIMES, obs), noise_rel_std=noise, seed=seed)


def descriptor(name: str, grid: GridConfig) -> dict:
    model, obs, noise, known = SCENARIOS[name]
    return {"name": name, "model": model, "observable": obs, "noise_rel_std": noise,
            "gamma_known": known, "T_range": list(grid.T_range), "gamma_range": list(grid.gamma_range)}


def _dump(obj, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def _scatter(fig: str, grid: GridConfig, name: str, out: Path, knn: KnnSettings,
             threads: int | None) -> dict:
    ds = generate(grid, threads)
    train, val = split_config(ds, grid)
    summary = {}
    for n_d in SCATTER_ND:
        idx = list(range(n_d))
        stem = f"{fig}_{name}_nd{n_d}"
        rep = evaluate_scenario(project(train, idx), project(val, idx), knn, grid.seed,
                                {**descriptor(name, grid), "n_d": n_d}, threads)
        write_scatter(rep, out / f"{stem}.csv")
        write_report(rep, out / f"{stem}_report.json")
        # same scenario as a standalone run config: generate/train/predict reproduce it
        sub = replace(grid, schema=grid.schema.select(idx))
        save_run_config(RunConfig(sub, knn, name=stem), out / f"{stem}_config.json")
        summary[f"nd{n_d}"] = {"mse": rep.mse, "k": rep.k, "n_val": rep.n_val}
    return summary


def _curves(fig: str, names, scale: str, seed: int, out: Path, knn: KnnSettings,
            threads: int | None) -> dict:
    summary = {}
    for name in names:
        grid = scenario_grid(name, scale, seed)
        curve = mse_vs_nd(generate(grid, threads), grid, knn,
                          scenario=descriptor(name, grid), threads=threads)
        write_curve(curve, out / f"{fig}_{name}.csv")
        summary[name] = {"n_d": curve.n_d, "mse": curve.mse, "k": [r.k for r in curve.reports]}
    return summary


def _maps(scale: str, seed: int, out: Path, threads: int | None) -> dict:
    summary = {}
    for model in ("jc", "rabi"):
        grid = replace(scenario_grid("sz_unknown", scale, seed), model=model, noise_rel_std=0.0)
        for t in DEFAULT_TIMES:
            pts = data_structure_map(grid, t, threads)
            write_map(pts, out / f"3maps_{model}_t{t:g}.csv")
            summary[f"{model}_t{t:g}"] = {"segmentation": segmentation_fraction(pts)}
    return summary


def reproduce(fig: str, scale: str = "desk", out_dir: str | Path = ".", seed: int = DEFAULT_SEED,
              threads: int | None = None, knn: KnnSettings = KnnSettings()) -> dict:
    """Run the scenarios behind ``fig`` and write its plot-data files into ``out_dir``."""
    if fig not in FIGURES:
        raise KeyError(f"unknown figure {fig!r}; valid ids: {', '.join(FIGURES)}")
    if scale not in SCALES:
        raise KeyError(f"unknown scale {scale!r}; valid scales: {', '.join(SCALES)}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    log.info("reproducing figure %s at %s scale", fig, scale)

    if fig in SCATTER_FIGS:
        name = SCATTER_FIGS[fig]
        results = _scatter(fig, scenario_grid(name, scale, seed), name, out, knn, threads)
    elif fig in CURVE_FIGS:
        results = _curves(fig, CURVE_FIGS[fig], scale, seed, out, knn, threads)
    else:
        results = _maps(scale, seed, out, threads)

    summary = {"figure": fig, "scale": scale, "seed": seed, "knn": knn.to_json(), "results": results}
    _dump(summary, out / f"{fig}_summary.json")
    return summary
