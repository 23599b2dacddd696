"""MSE reports, MSE-vs-N_d curves and two-observable data-structure maps."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .dataset import Dataset, FeatureSchema, GridConfig, generate, project, split
from .dynamics import Observable
from .knn import DEFAULT_FOLDS, DEFAULT_K_CANDIDATES, cross_validate, fit, predict_batch, squared_distances

log = logging.getLogger(__name__)

REPORT_FORMAT = "probetherm-report/1"


def mse(t_pred, t_real) -> float:
    """Mean squared temperature error over the validation set."""
    t_pred = np.asarray(t_pred, dtype=float)
    t_real = np.asarray(t_real, dtype=float)
    if t_pred.size == 0:
        raise ValueError("mse of an empty validation set")
    if t_pred.shape != t_real.shape:
        raise ValueError("prediction and truth differ in length")
    return float(np.mean((t_pred - t_real) ** 2))


@dataclass(frozen=True)
class KnnSettings:
    """Fixed ``k``, or cross-validation over ``k_candidates`` when ``k`` is None."""

    k: int | None = None
    k_candidates: tuple[int, ...] = DEFAULT_K_CANDIDATES
    folds: int = DEFAULT_FOLDS
    standardize: bool = False

    def to_json(self) -> dict:
        return {"k": self.k, "cv": list(self.k_candidates), "folds": self.folds,
                "standardize": self.standardize}


@dataclass
class EvalReport:
    t_pred: np.ndarray
    t_real: np.ndarray
    gamma: np.ndarray
    mse: float
    k: int
    scenario: dict = field(default_factory=dict)
    cv_scores: dict[str, float] | None = None
    labels: np.ndarray | None = None

    @property
    def n_val(self) -> int:
        return self.t_pred.size

    def to_json(self) -> dict:
        return {
            "format_version": REPORT_FORMAT,
            "scenario": self.scenario,
            "k": self.k,
            "cv_scores": self.cv_scores,
            "mse": self.mse,
            "n_val": self.n_val,
            "pairs": [[p, r, g] for p, r, g in
                      zip(self.t_pred.tolist(), self.t_real.tolist(), self.gamma.tolist())],
        }


@dataclass
class MseCurve:
    n_d: list[int]
    mse: list[float]
    scenario: dict = field(default_factory=dict)
    reports: list[EvalReport] = field(default_factory=list, repr=False)

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.n_d, self.n_d[1:])):
            raise ValueError("N_d values must be strictly increasing")

    def at(self, n_d: int) -> float:
        return self.mse[self.n_d.index(n_d)]


def choose_k(train: Dataset, knn: KnnSettings, seed: int) -> tuple[int, dict[str, float] | None]:
    """Fixed k, or the cross-validated best with its per-candidate scores."""
    if knn.k is not None:
        return knn.k, None
    # drop candidates the fold sizes cannot support
    smallest_fold_train = len(train) - -(-len(train) // knn.folds)
    ks = [k for k in knn.k_candidates if k <= smallest_fold_train] or [1]
    best, scores = cross_validate(train, ks, knn.folds, seed, knn.standardize)
    return best, {str(k): float(s) for k, s in zip(ks, scores)}


def evaluate_scenario(train: Dataset, validation: Dataset, knn: KnnSettings = KnnSettings(),
                      seed: int = 0, scenario: dict | None = None,
                      threads: int | None = None) -> EvalReport:
    if train.schema != validation.schema:
        raise ValueError("train and validation schemas differ")
    k, scores = choose_k(train, knn, seed)
    model = fit(train, k, knn.standardize)
    labels, t_pred = predict_batch(model, validation.features, threads)
    return EvalReport(t_pred, validation.temperatures.copy(), validation.gammas.copy(),
                      mse(t_pred, validation.temperatures), k, dict(scenario or {}), scores, labels)


def split_config(dataset: Dataset, config: GridConfig) -> tuple[Dataset, Dataset]:
    return split(dataset, config.split_fraction, config.seed, config.noise_rel_std, config.noise_target)


def mse_vs_nd(dataset: Dataset, config: GridConfig, knn: KnnSettings = KnnSettings(),
              n_d_values: Sequence[int] | None = None, scenario: dict | None = None,
              threads: int | None = None) -> MseCurve:
    """MSE when only the first N_d schema entries are observed.

    The split and the noise draws happen once on the full schema, so every
    point of the curve is scored on the same validation rows.
    """
    full = dataset.schema.n_d
    if full < 2:
        raise ValueError("need a schema with at least two entries")
    n_d_values = list(n_d_values or range(1, full + 1))
    train, val = split_config(dataset, config)
    reports = []
    for n_d in n_d_values:
        idx = list(range(n_d))
        desc = {**(scenario or {}), "n_d": n_d}
        rep = evaluate_scenario(project(train, idx), project(val, idx), knn, config.seed, desc, threads)
        log.info("%s N_d=%d k=%d mse=%.4g", desc.get("name", ""), n_d, rep.k, rep.mse)
        reports.append(rep)
    return MseCurve(n_d_values, [r.mse for r in reports], dict(scenario or {}), reports)


def data_structure_map(config: GridConfig, t: float, threads: int | None = None) -> np.ndarray:
    """Rows of (<sigma_y>_t, <sigma_z>_t, T) over the config's (T, gamma) grid."""
    cfg = replace(config, schema=FeatureSchema(((t, Observable.Y), (t, Observable.Z))))
    ds = generate(cfg, threads)
    return np.column_stack([ds.features, ds.temperatures])


def segmentation_fraction(points: np.ndarray, rel_tol: float = 0.1) -> float:
    """Share of points whose nearest other point in the (sy, sz) plane has a
    temperature within ``rel_tol`` of the temperature range."""
    xy, T = points[:, :2], points[:, 2]
    span = T.max() - T.min()
    nearest = np.empty(len(T), dtype=int)
    step = 512
    for i in range(0, len(T), step):
        d = squared_distances(xy, xy[i:i + step])
        rows = np.arange(d.shape[0])
        d[rows, i + rows] = np.inf
        nearest[i:i + step] = np.argmin(d, axis=1)
    return float(np.mean(np.abs(T[nearest] - T) < rel_tol * span))


# ---------------------------------------------------------------- plot data

def _write_csv(path: Path, header: Iterable[str], rows: Iterable[Iterable]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format(v, ".17g") if isinstance(v, float) else v for v in row])


def write_report(report: EvalReport, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_json(), fh, indent=1)
        fh.write("\n")


def write_scatter(report: EvalReport, path: str | Path) -> None:
    _write_csv(Path(path), ["T_real", "T_pred"],
               zip(report.t_real.tolist(), report.t_pred.tolist()))


def write_curve(curve: MseCurve, path: str | Path) -> None:
    _write_csv(Path(path), ["Nd", "mse"], zip(curve.n_d, curve.mse))


def write_map(points: np.ndarray, path: str | Path) -> None:
    _write_csv(Path(path), ["sy", "sz", "T"], points.tolist())
