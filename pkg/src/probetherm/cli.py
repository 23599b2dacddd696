"""Command-line entry point: generate, train, predict, evaluate, cv, reproduce.

Exit codes: 0 success, 1 configuration or usage error, 2 data or numerical
failure.  Progress goes to stderr; machine output to stdout or files.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import SCALES, ConfigError, RunConfig, load_run_config, rescale
from .dataset import GridConfig, default_threads, generate, read_dataset, write_dataset
from .dynamics import CorruptStateError, DiagonalizationError, TruncationError
from .evaluation import (
    EvalReport,
    KnnSettings,
    choose_k,
    evaluate_scenario,
    mse,
    split_config,
    write_report,
    write_scatter,
)
from .figures import DEFAULT_SEED, FIGURES, reproduce
from .knn import cross_validate, fit, load_model, predict_batch, save_model

log = logging.getLogger("probetherm")


class DataError(Exception):
    """Malformed input data or a numerical failure (exit code 2)."""


class UsageError(Exception):
    """Bad arguments detected after parsing (exit code 1)."""


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _run_config(args) -> RunConfig:
    cfg = load_run_config(args.config) if getattr(args, "config", None) else RunConfig()
    grid = cfg.grid
    if getattr(args, "seed", None) is not None:
        grid = replace(grid, seed=args.seed)
    if getattr(args, "scale", None):
        grid = rescale(grid, args.scale)
    return replace(cfg, grid=grid)


def _knn_settings(args, cfg: RunConfig) -> KnnSettings:
    knn = cfg.knn
    if getattr(args, "k", None) is not None:
        knn = replace(knn, k=args.k)
    elif getattr(args, "cv", None):
        knn = replace(knn, k=None, k_candidates=tuple(args.cv))
    if getattr(args, "folds", None):
        knn = replace(knn, folds=args.folds)
    if getattr(args, "standardize", False):
        knn = replace(knn, standardize=True)
    return knn


def _load_dataset(path):
    try:
        return read_dataset(path)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as err:
        raise DataError(f"malformed dataset {path}: {err}") from None


def _dataset_grid(manifest: dict, args) -> GridConfig | None:
    """Grid config governing the split: --config wins, then the manifest."""
    if getattr(args, "config", None):
        grid = load_run_config(args.config).grid
    elif manifest.get("config"):
        try:
            grid = GridConfig.from_json(manifest["config"])
        except (ValueError, TypeError) as err:
            raise DataError(f"manifest config invalid: {err}") from None
    else:
        return None
    if getattr(args, "seed", None) is not None:
        grid = replace(grid, seed=args.seed)
    return grid


def _train_val(ds, manifest, args):
    grid = _dataset_grid(manifest, args)
    if grid is None or getattr(args, "no_split", False):
        return ds, None, grid
    train, val = split_config(ds, grid)
    return train, val, grid


def _write_lines(lines, out: str | None) -> None:
    text = "".join(line + "\n" for line in lines)
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------- commands

def cmd_generate(args) -> int:
    cfg = _run_config(args)
    grid = cfg.grid
    n_cols = grid.schema.n_d + 3
    if args.dry_run:
        print(json.dumps({"rows": grid.n_rows, "columns": n_cols,
                          "memory_bytes": grid.n_rows * n_cols * 8,
                          "csv_bytes_estimate": grid.n_rows * n_cols * 24}))
        return 0
    out = args.out or cfg.output.get("dataset") or "dataset.csv"
    ds = generate(grid, args.threads)
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    write_dataset(ds, out, grid)
    log.info("wrote %d rows to %s", len(ds), out)
    return 0


def cmd_train(args) -> int:
    ds, manifest = _load_dataset(args.dataset)
    cfg = load_run_config(args.config) if args.config else RunConfig()
    knn = _knn_settings(args, cfg)
    train, val, grid = _train_val(ds, manifest, args)
    seed = grid.seed if grid is not None else DEFAULT_SEED
    k, scores = choose_k(train, knn, seed)
    model = fit(train, k, knn.standardize)
    out = args.out or cfg.output.get("model") or "model.json"
    save_model(model, out)
    if args.validation_out and val is not None:
        write_dataset(val, args.validation_out, grid, {"split": "validation"})
    print(json.dumps({"k": k, "cv_scores": scores, "n_train": len(train)}))
    return 0


def _read_observations(path: str, n_d: int) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().strip()
    cols = first.split(",")
    try:
        [float(c) for c in cols]
        has_header = False
    except ValueError:
        has_header = True
    data = np.loadtxt(path, delimiter=",", skiprows=1 if has_header else 0, ndmin=2)
    if has_header and cols[:1] == ["f0"]:
        feats = [i for i, c in enumerate(cols) if c.startswith("f") and c[1:].isdigit()]
        data = data[:, feats]
    if data.shape[1] != n_d:
        raise DataError(f"observations have {data.shape[1]} features, model expects N_d={n_d}")
    return data


def cmd_predict(args) -> int:
    try:
        model = load_model(args.model)
    except (OSError, ValueError, KeyError) as err:
        raise DataError(f"cannot load model {args.model}: {err}") from None
    n_d = model.schema.n_d
    if args.vector is not None:
        try:
            obs = np.array([[float(v) for v in args.vector.split(",")]])
        except ValueError:
            raise DataError(f"cannot parse observation vector {args.vector!r}") from None
        if obs.shape[1] != n_d:
            raise DataError(f"observation has {obs.shape[1]} features, model expects N_d={n_d}")
    elif args.observations:
        try:
            obs = _read_observations(args.observations, n_d)
        except (OSError, ValueError) as err:
            raise DataError(f"cannot read observations: {err}") from None
    else:
        raise UsageError("give --observations FILE or --vector V1,V2,...")
    labels, temps = predict_batch(model, obs, args.threads)
    _write_lines(["label,temperature"] + [f"{int(l)},{format(float(t), '.17g')}"
                                          for l, t in zip(labels, temps)], args.out)
    return 0


def cmd_evaluate(args) -> int:
    ds, manifest = _load_dataset(args.dataset)
    cfg = load_run_config(args.config) if args.config else RunConfig()
    train, val, grid = _train_val(ds, manifest, args)
    if val is None:
        raise DataError("dataset manifest carries no grid config to split by; pass --config")
    scenario = {"dataset": str(args.dataset), "n_d": ds.schema.n_d}
    if args.model:
        try:
            model = load_model(args.model)
        except (OSError, ValueError, KeyError) as err:
            raise DataError(f"cannot load model {args.model}: {err}") from None
        labels, t_pred = predict_batch(model, val.features, args.threads)
        rep = EvalReport(t_pred, val.temperatures, val.gammas, mse(t_pred, val.temperatures),
                         model.k, scenario, None, labels)
    else:
        rep = evaluate_scenario(train, val, _knn_settings(args, cfg), grid.seed, scenario, args.threads)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_report(rep, out / "report.json")
        write_scatter(rep, out / "scatter.csv")
    print(json.dumps({"mse": rep.mse, "n_val": rep.n_val, "k": rep.k}))
    return 0


def cmd_cv(args) -> int:
    ds, manifest = _load_dataset(args.dataset)
    cfg = load_run_config(args.config) if args.config else RunConfig()
    knn = _knn_settings(args, cfg)
    train, _, grid = _train_val(ds, manifest, args)
    seed = grid.seed if grid is not None else DEFAULT_SEED
    best, scores = cross_validate(train, knn.k_candidates, knn.folds, seed, knn.standardize)
    _write_lines(["k,score"] + [f"{k},{format(float(s), '.17g')}"
                                for k, s in zip(knn.k_candidates, scores)], None)
    log.info("best k = %d", best)
    return 0


def cmd_reproduce(args) -> int:
    if args.figure not in FIGURES:
        raise UsageError(f"unknown figure id {args.figure!r}; valid ids: {', '.join(FIGURES)}")
    knn = KnnSettings()
    if args.config:
        knn = load_run_config(args.config).knn
    summary = reproduce(args.figure, args.scale, args.out, args.seed if args.seed is not None
                        else DEFAULT_SEED, args.threads, knn)
    log.info("summary: %s", json.dumps(summary["results"])[:500])
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="probetherm",
                                description="Probe thermometry by nearest-neighbour classification")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-q", "--quiet", action="store_true", help="only report errors")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", help="run config JSON")
        sp.add_argument("--seed", type=int, help="override the grid seed")
        sp.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: $PROBETHERM_THREADS or all cores)")

    def knn_flags(sp):
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--k", type=int, help="fixed number of neighbours")
        g.add_argument("--cv", type=_int_list, help="cross-validate over these k, e.g. 1,3,5,9")
        sp.add_argument("--folds", type=int, help="cross-validation folds")
        sp.add_argument("--standardize", action="store_true", help="z-score features")

    sp = sub.add_parser("generate", help="simulate a labeled dataset")
    common(sp)
    sp.add_argument("--scale", choices=sorted(SCALES), help="override grid point counts")
    sp.add_argument("--out", help="dataset CSV path (manifest goes next to it)")
    sp.add_argument("--dry-run", action="store_true", help="report size, write nothing")
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("train", help="fit a KNN model on the training split")
    sp.add_argument("dataset")
    common(sp)
    knn_flags(sp)
    sp.add_argument("--out", help="model JSON path")
    sp.add_argument("--validation-out", help="also write the (noisy) validation rows here")
    sp.add_argument("--no-split", action="store_true", help="train on every row")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("predict", help="predict temperatures for observations")
    sp.add_argument("model")
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--observations", help="CSV of observation vectors (dataset CSVs work)")
    g.add_argument("--vector", help="a single comma-separated observation; write --vector=V1,V2 "
                   "when V1 is negative")
    sp.add_argument("--out", help="write CSV here instead of stdout")
    sp.add_argument("--threads", type=int, default=None)
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("evaluate", help="split, fit, predict and score a dataset")
    sp.add_argument("dataset")
    common(sp)
    knn_flags(sp)
    sp.add_argument("--model", help="score this model instead of fitting one")
    sp.add_argument("--out", help="directory for report.json and scatter.csv")
    sp.set_defaults(func=cmd_evaluate, no_split=False)

    sp = sub.add_parser("cv", help="cross-validation scores on the training split")
    sp.add_argument("dataset")
    common(sp)
    knn_flags(sp)
    sp.add_argument("--no-split", action="store_true", help="cross-validate over every row")
    sp.set_defaults(func=cmd_cv)

    sp = sub.add_parser("reproduce", help="regenerate plot data for a figure")
    sp.add_argument("figure", help=f"one of {', '.join(FIGURES)}")
    common(sp)
    sp.add_argument("--scale", choices=sorted(SCALES), default="desk")
    sp.add_argument("--out", default="figures", help="output directory")
    sp.set_defaults(func=cmd_reproduce)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if getattr(args, "threads", None) is None and hasattr(args, "threads"):
        args.threads = default_threads()
    try:
        return args.func(args)
    except (ConfigError, UsageError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except (DataError, TruncationError, DiagonalizationError, CorruptStateError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except ValueError as err:
        # remaining value errors come from data that failed a contract
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
