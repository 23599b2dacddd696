"""Exact k-nearest-neighbour temperature classifier.

Neighbours are ranked by squared Euclidean distance, ties broken by the
lower training-row index.  Votes are a plain majority; when several labels
share the top count, the one held by the nearest neighbour wins.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import Dataset, FeatureSchema, TemperatureBinning, default_threads, fold_assignment

MODEL_FORMAT = "probetherm-knn/1"
DEFAULT_K_CANDIDATES = (1, 3, 5, 9, 15, 25, 45)
DEFAULT_FOLDS = 5
_CHUNK_ELEMS = 1 << 22


@dataclass(frozen=True)
class KnnModel:
    features: np.ndarray
    labels: np.ndarray
    k: int
    binning: TemperatureBinning
    schema: FeatureSchema
    center: np.ndarray | None = None
    scale: np.ndarray | None = None

    def __post_init__(self):
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError("features and labels differ in row count")
        if not 1 <= self.k <= self.features.shape[0]:
            raise ValueError(f"k={self.k} outside [1, {self.features.shape[0]}]")
        for arr in (self.features, self.labels, self.center, self.scale):
            if arr is not None:
                arr.setflags(write=False)

    @property
    def n_train(self) -> int:
        return self.features.shape[0]

    @property
    def standardized(self) -> bool:
        return self.center is not None

    def transform(self, X: np.ndarray) -> np.ndarray:
        if self.center is None:
            return X
        return (X - self.center) / self.scale


def squared_distances(X: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """``D[i, j] = |Q[i] - X[j]|^2`` summed feature by feature, in feature order."""
    d = np.zeros((Q.shape[0], X.shape[0]))
    for j in range(X.shape[1]):
        diff = Q[:, j, None] - X[None, :, j]
        d += diff * diff
    return d


def _rank(d: np.ndarray, k: int) -> np.ndarray:
    m, n = d.shape
    if k >= n:
        return np.argsort(d, axis=1, kind="stable")[:, :k]
    part = np.sort(np.argpartition(d, k - 1, axis=1)[:, :k], axis=1)
    vals = np.take_along_axis(d, part, axis=1)
    kth = vals.max(axis=1)
    out = np.take_along_axis(part, np.argsort(vals, axis=1, kind="stable"), axis=1)
    # argpartition picks arbitrarily among distances equal to the k-th one
    ambiguous = np.flatnonzero((d <= kth[:, None]).sum(axis=1) > k)
    for r in ambiguous:
        cand = np.flatnonzero(d[r] <= kth[r])
        out[r] = cand[np.argsort(d[r, cand], kind="stable")[:k]]
    return out


def k_nearest(X: np.ndarray, Q: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` nearest rows of ``X`` for every query, nearest first."""
    if Q.shape[0] == 0:
        return np.empty((0, k), dtype=int)
    step = max(1, _CHUNK_ELEMS // max(X.shape[0], 1))
    return np.concatenate([_rank(squared_distances(X, Q[i:i + step]), k)
                           for i in range(0, Q.shape[0], step)])


def vote(neighbor_labels: np.ndarray) -> np.ndarray:
    """Majority label per row of nearest-first neighbour labels."""
    L = np.atleast_2d(neighbor_labels)
    counts = (L[:, :, None] == L[:, None, :]).sum(axis=2)
    first_top = np.argmax(counts == counts.max(axis=1, keepdims=True), axis=1)
    return L[np.arange(L.shape[0]), first_top]


def fit(train: Dataset, k: int, standardize: bool = False) -> KnnModel:
    if len(train) == 0:
        raise ValueError("cannot fit on an empty dataset")
    if not 1 <= k <= len(train):
        raise ValueError(f"k={k} outside [1, {len(train)}]")
    X = np.array(train.features, dtype=float)
    center = scale = None
    if standardize:
        center = X.mean(axis=0)
        scale = X.std(axis=0)
        scale[scale == 0] = 1.0
        X = (X - center) / scale
    return KnnModel(X, np.array(train.labels, dtype=int), int(k), train.binning, train.schema,
                    center, scale)


def _check_queries(model: KnnModel, Q) -> np.ndarray:
    Q = np.asarray(Q, dtype=float)
    if Q.ndim == 1:
        Q = Q[None, :]
    if Q.ndim != 2 or Q.shape[1] != model.schema.n_d:
        raise ValueError(f"observation has {Q.shape[-1]} features, model expects N_d={model.schema.n_d}")
    return Q


def predict(model: KnnModel, query) -> tuple[int, float]:
    labels, temps = predict_batch(model, [np.asarray(query, dtype=float)], threads=1)
    return int(labels[0]), float(temps[0])


def predict_batch(model: KnnModel, queries, threads: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    Q = model.transform(_check_queries(model, queries))
    threads = threads or default_threads()

    def work(block):
        return vote(model.labels[k_nearest(model.features, block, model.k)])

    if threads > 1 and Q.shape[0] > 256:
        blocks = np.array_split(Q, threads * 4)
        with ThreadPoolExecutor(threads) as pool:
            labels = np.concatenate(list(pool.map(work, blocks)))
    elif Q.shape[0]:
        labels = work(Q)
    else:
        labels = np.empty(0, dtype=int)
    return labels, model.binning.decode(labels)


def cross_validate(train: Dataset, k_candidates: Sequence[int] = DEFAULT_K_CANDIDATES,
                   folds: int = DEFAULT_FOLDS, seed: int = 0,
                   standardize: bool = False) -> tuple[int, np.ndarray]:
    """Pick k by minimum mean decoded-temperature MSE over ``folds`` folds.

    Ties go to the smaller k.  Returns ``(best_k, scores)`` with scores in
    the order of ``k_candidates``.
    """
    ks = [int(k) for k in k_candidates]
    if not ks:
        raise ValueError("no k candidates")
    if folds < 2 or folds > len(train):
        raise ValueError(f"fold count {folds} invalid for {len(train)} rows")
    fold_of = fold_assignment(len(train), folds, seed)
    smallest = min(int((fold_of != f).sum()) for f in range(folds))
    if min(ks) < 1 or max(ks) > smallest:
        raise ValueError(f"k candidates must lie in [1, {smallest}] (smallest fold-train size)")

    per_fold = np.empty((folds, len(ks)))
    for f in range(folds):
        tr, va = train.take(np.flatnonzero(fold_of != f)), train.take(np.flatnonzero(fold_of == f))
        model = fit(tr, 1, standardize)
        nbr = k_nearest(model.features, model.transform(va.features), max(ks))
        nbr_labels = model.labels[nbr]
        for j, k in enumerate(ks):
            pred = train.binning.decode(vote(nbr_labels[:, :k]))
            per_fold[f, j] = np.mean((pred - va.temperatures) ** 2)
    scores = per_fold.mean(axis=0)
    best = min(range(len(ks)), key=lambda j: (scores[j], ks[j]))
    return ks[best], scores


def save_model(model: KnnModel, path: str | Path) -> None:
    doc = {
        "format_version": MODEL_FORMAT,
        "k": model.k,
        "schema": model.schema.to_json(),
        "binning": model.binning.to_json(),
        "n_train": model.n_train,
        "features": model.features.tolist(),
        "labels": model.labels.tolist(),
        "standardize": None if model.center is None else
        {"center": model.center.tolist(), "scale": model.scale.tolist()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, separators=(",", ":"))
        fh.write("\n")


def load_model(path: str | Path) -> KnnModel:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format_version") != MODEL_FORMAT:
        raise ValueError(f"unsupported model format {doc.get('format_version')!r}")
    schema = FeatureSchema.from_json(doc["schema"])
    X = np.array(doc["features"], dtype=float).reshape(doc["n_train"], schema.n_d)
    std = doc.get("standardize")
    return KnnModel(X, np.array(doc["labels"], dtype=int), int(doc["k"]),
                    TemperatureBinning.from_json(doc["binning"]), schema,
                    None if std is None else np.array(std["center"]),
                    None if std is None else np.array(std["scale"]))
