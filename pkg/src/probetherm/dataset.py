"""Labeled observation datasets over (temperature, coupling) grids.

Randomness comes from counter-based Philox4x64 streams.  A stream is
keyed by ``(seed mod 2**64, purpose)`` and its counter starts at
``(0, 0, 0, index)``, so every row owns a disjoint stream and parallel
generation reproduces serial generation bit for bit.
"""

from __future__ import annotations

import enum
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .dynamics import (
    CONVERGENCE_TOL,
    DEFAULT_TAIL_TOL,
    HamiltonianSpec,
    Model,
    Observable,
    ProbeState,
    TruncationError,
    build_hamiltonian,
    default_cutoff,
    diagonalize,
    fock_responses,
    gibbs_populations,
    truncation_drift,
)

log = logging.getLogger(__name__)

DATASET_FORMAT = "probetherm-dataset/1"
DEFAULT_TIMES = (1.6, 2.5, 4.0, 6.7, 10.4, 16.7, 26.7)
THREADS_ENV = "PROBETHERM_THREADS"

# stream purposes
_NOISE, _SPLIT, _FOLDS = 1, 2, 3


def stream(seed: int, purpose: int, index: int = 0) -> np.random.Generator:
    bitgen = np.random.Philox(key=[seed % 2**64, purpose], counter=[0, 0, 0, index])
    return np.random.Generator(bitgen)


def default_threads() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


class NoiseTarget(str, enum.Enum):
    VALIDATION = "validation"
    BOTH = "both"
    NONE = "none"


@dataclass(frozen=True)
class FeatureSchema:
    entries: tuple[tuple[float, Observable], ...]

    def __post_init__(self):
        entries = tuple((float(t), Observable(o)) for t, o in self.entries)
        if not entries:
            raise ValueError("feature schema must not be empty")
        if any(t < 0 for t, _ in entries):
            raise ValueError("feature times must be non-negative")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def uniform(cls, times: Iterable[float], obs: Observable | str = Observable.Z) -> "FeatureSchema":
        return cls(tuple((t, Observable(obs)) for t in times))

    @property
    def n_d(self) -> int:
        return len(self.entries)

    @property
    def times(self) -> list[float]:
        return [t for t, _ in self.entries]

    @property
    def observables(self) -> list[str]:
        return [o.value for _, o in self.entries]

    def select(self, indices: Sequence[int]) -> "FeatureSchema":
        return FeatureSchema(tuple(self.entries[i] for i in indices))

    def to_json(self) -> dict:
        return {"times": self.times, "observables": self.observables}

    @classmethod
    def from_json(cls, d: dict) -> "FeatureSchema":
        if len(d["times"]) != len(d["observables"]):
            raise ValueError("schema times and observables differ in length")
        return cls(tuple(zip(d["times"], d["observables"])))


@dataclass(frozen=True)
class TemperatureBinning:
    edges: np.ndarray
    centers: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float)
        centers = np.asarray(self.centers, dtype=float)
        if edges.size != centers.size + 1:
            raise ValueError("need exactly one more edge than centers")
        if centers.size > 1 and np.any(np.diff(edges) <= 0):
            raise ValueError("bin edges must be strictly increasing")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "centers", centers)

    @property
    def n_classes(self) -> int:
        return self.centers.size

    def encode(self, T) -> np.ndarray:
        T = np.asarray(T, dtype=float)
        lo, hi = self.edges[0], self.edges[-1]
        slack = 1e-12 * max(abs(lo), abs(hi), 1.0)
        if np.any(T < lo - slack) or np.any(T > hi + slack):
            raise ValueError(f"temperature outside the binned range [{lo}, {hi}]")
        return np.searchsorted(self.edges[1:-1], T, side="right")

    def decode(self, labels) -> np.ndarray:
        return self.centers[np.asarray(labels, dtype=int)]

    def width(self, label: int) -> float:
        return float(self.edges[label + 1] - self.edges[label])

    def to_json(self) -> dict:
        return {"edges": self.edges.tolist(), "centers": self.centers.tolist()}

    @classmethod
    def from_json(cls, d: dict) -> "TemperatureBinning":
        return cls(np.array(d["edges"], dtype=float), np.array(d["centers"], dtype=float))


def bin_temperatures(temperatures, n_bins: int = 0) -> TemperatureBinning:
    """Equal-width bins over the temperature range.

    ``n_bins=0`` gives one class per distinct temperature, with bin edges at
    the midpoints between neighbours; decoding then returns the exact value.
    """
    T = np.unique(np.asarray(temperatures, dtype=float))
    if T.size == 0:
        raise ValueError("no temperatures to bin")
    if n_bins == 0:
        edges = np.concatenate([[T[0]], 0.5 * (T[1:] + T[:-1]), [T[-1]]])
        return TemperatureBinning(edges, T)
    if n_bins < 2:
        raise ValueError(f"n_bins must be 0 or >= 2, got {n_bins}")
    if T.size == 1:
        raise ValueError("equal-width bins need a non-degenerate temperature range")
    edges = np.linspace(T[0], T[-1], n_bins + 1)
    return TemperatureBinning(edges, 0.5 * (edges[1:] + edges[:-1]))


@dataclass(frozen=True)
class GridConfig:
    model: Model = Model.JC
    T_range: tuple[float, float, int] = (0.1, 2.0, 1000)
    gamma_range: tuple[float, float, int] = (0.1, 2.0, 100)
    schema: FeatureSchema = field(default_factory=lambda: FeatureSchema.uniform(DEFAULT_TIMES))
    noise_rel_std: float = 0.03
    noise_target: NoiseTarget = NoiseTarget.VALIDATION
    split_fraction: float = 0.7
    seed: int = 20211
    omega: float = 1.0
    qubit_gap: float = 1.0
    cutoff: int | None = None
    n_bins: int = 0
    probe: tuple[float, float, float] = (1.0, 0.0, 0.0)  # Bloch vector, |+> by default
    tail_tol: float = DEFAULT_TAIL_TOL
    check_truncation: bool = True

    def __post_init__(self):
        object.__setattr__(self, "model", Model(self.model))
        object.__setattr__(self, "noise_target", NoiseTarget(self.noise_target))
        if isinstance(self.schema, dict):
            object.__setattr__(self, "schema", FeatureSchema.from_json(self.schema))
        for name in ("T_range", "gamma_range"):
            lo, hi, n = getattr(self, name)
            if int(n) != n or n < 1:
                raise ValueError(f"{name}: point count must be a positive integer, got {n}")
            if hi < lo:
                raise ValueError(f"{name}: upper bound {hi} below lower bound {lo}")
            object.__setattr__(self, name, (float(lo), float(hi), int(n)))
        if not self.T_range[0] > 0:
            raise ValueError(f"T_range: temperatures must be positive, got {self.T_range[0]}")
        if not self.gamma_range[0] >= 0:
            raise ValueError(f"gamma_range: couplings must be non-negative, got {self.gamma_range[0]}")
        if not 0 < self.split_fraction < 1:
            raise ValueError(f"split_fraction must lie in (0, 1), got {self.split_fraction}")
        if not self.noise_rel_std >= 0:
            raise ValueError(f"noise_rel_std must be non-negative, got {self.noise_rel_std}")
        object.__setattr__(self, "probe", tuple(float(c) for c in self.probe))

    @property
    def temperatures(self) -> np.ndarray:
        lo, hi, n = self.T_range
        return np.linspace(lo, hi, n) if n > 1 else np.array([lo])

    @property
    def gammas(self) -> np.ndarray:
        lo, hi, n = self.gamma_range
        return np.linspace(lo, hi, n) if n > 1 else np.array([lo])

    @property
    def n_rows(self) -> int:
        return self.T_range[2] * self.gamma_range[2]

    @property
    def effective_cutoff(self) -> int:
        return self.cutoff if self.cutoff is not None else default_cutoff(self.model)

    def hamiltonian(self, gamma: float) -> HamiltonianSpec:
        return HamiltonianSpec(self.model, self.omega, self.qubit_gap, float(gamma), self.effective_cutoff)

    def probe_state(self) -> ProbeState:
        return ProbeState.from_bloch(*self.probe)

    def to_json(self) -> dict:
        d = asdict(self)
        d["model"] = self.model.value
        d["noise_target"] = self.noise_target.value
        d["schema"] = self.schema.to_json()
        d["T_range"] = list(self.T_range)
        d["gamma_range"] = list(self.gamma_range)
        d["probe"] = list(self.probe)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "GridConfig":
        d = dict(d)
        if "schema" in d:
            d["schema"] = FeatureSchema.from_json(d["schema"])
        for key in ("T_range", "gamma_range", "probe"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass
class Dataset:
    """Rows are parallel arrays; ``row_ids`` index the generating grid."""

    schema: FeatureSchema
    features: np.ndarray
    temperatures: np.ndarray
    gammas: np.ndarray
    labels: np.ndarray
    binning: TemperatureBinning
    row_ids: np.ndarray

    def __post_init__(self):
        n = self.features.shape[0]
        if self.features.ndim != 2 or self.features.shape[1] != self.schema.n_d:
            raise ValueError(f"features must have shape (n, {self.schema.n_d})")
        for name in ("temperatures", "gammas", "labels", "row_ids"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"{name} must have {n} entries")

    def __len__(self) -> int:
        return self.features.shape[0]

    def take(self, rows: np.ndarray) -> "Dataset":
        return Dataset(self.schema, self.features[rows], self.temperatures[rows],
                       self.gammas[rows], self.labels[rows], self.binning, self.row_ids[rows])


def _features_for_gamma(config: GridConfig, gamma: float, pops: np.ndarray) -> np.ndarray:
    spec = config.hamiltonian(gamma)
    eig = diagonalize(build_hamiltonian(spec))
    G = fock_responses(spec, config.probe_state(), config.schema.entries, eig)
    # column by column, so a feature never depends on which other entries share the schema
    return np.stack([pops @ G[:, j] for j in range(G.shape[1])], axis=1)


def thermal_matrix(config: GridConfig) -> np.ndarray:
    """Truncated Gibbs populations, one row per grid temperature."""
    cutoff = config.effective_cutoff
    return np.stack([gibbs_populations(config.omega, T, cutoff, config.tail_tol).populations
                     for T in config.temperatures])


def generate(config: GridConfig, threads: int | None = None) -> Dataset:
    """Noiseless dataset, one row per (gamma, T) grid point, gamma-major."""
    if config.n_rows == 0:
        raise ValueError("empty parameter grid")
    Ts, gammas = config.temperatures, config.gammas
    pops = thermal_matrix(config)
    if config.check_truncation:
        drift = truncation_drift(config.hamiltonian(gammas.max()), Ts.max(),
                                 config.probe_state(), config.schema.entries)
        if drift > CONVERGENCE_TOL:
            raise TruncationError(
                f"features move by {drift:.3g} when the cutoff {config.effective_cutoff} grows by 10")

    threads = threads or default_threads()
    log.info("generating %d rows (%s, %d gammas x %d temperatures) on %d threads",
             config.n_rows, config.model.value, gammas.size, Ts.size, threads)
    if threads > 1 and gammas.size > 1:
        with ThreadPoolExecutor(threads) as pool:
            blocks = list(pool.map(lambda g: _features_for_gamma(config, g, pops), gammas))
    else:
        blocks = [_features_for_gamma(config, g, pops) for g in gammas]

    features = np.concatenate(blocks, axis=0)
    temperatures = np.tile(Ts, gammas.size)
    gamma_col = np.repeat(gammas, Ts.size)
    binning = bin_temperatures(Ts, config.n_bins)
    return Dataset(config.schema, features, temperatures, gamma_col,
                   binning.encode(temperatures), binning, np.arange(features.shape[0]))


def add_noise(features, rel_std: float, rng: np.random.Generator) -> np.ndarray:
    """Gaussian noise with standard deviation ``rel_std * |x|`` around each entry."""
    x = np.asarray(features, dtype=float)
    if rel_std < 0:
        raise ValueError(f"rel_std must be non-negative, got {rel_std}")
    if rel_std == 0:
        return x.copy()
    return x + rel_std * np.abs(x) * rng.standard_normal(x.shape)


def noisy_rows(dataset: Dataset, rel_std: float, seed: int) -> np.ndarray:
    """Noisy copy of the features; each row draws from its own stream keyed by row id."""
    out = np.empty_like(dataset.features)
    for i, rid in enumerate(dataset.row_ids):
        out[i] = add_noise(dataset.features[i], rel_std, stream(seed, _NOISE, int(rid)))
    return out


def split(dataset: Dataset, fraction: float, seed: int, noise_rel_std: float = 0.0,
          noise_target: NoiseTarget | str = NoiseTarget.VALIDATION) -> tuple[Dataset, Dataset]:
    """Uniform random train/validation partition, noise applied per ``noise_target``."""
    if not 0 < fraction < 1:
        raise ValueError(f"split fraction must lie in (0, 1), got {fraction}")
    n = len(dataset)
    if n < 2:
        raise ValueError("need at least two rows to split")
    n_train = min(max(int(round(fraction * n)), 1), n - 1)
    perm = stream(seed, _SPLIT).permutation(n)
    train = dataset.take(np.sort(perm[:n_train]))
    val = dataset.take(np.sort(perm[n_train:]))

    target = NoiseTarget(noise_target)
    if noise_rel_std > 0 and target is not NoiseTarget.NONE:
        val = replace(val, features=noisy_rows(val, noise_rel_std, seed))
        if target is NoiseTarget.BOTH:
            train = replace(train, features=noisy_rows(train, noise_rel_std, seed))
    return train, val


def project(dataset: Dataset, indices: Sequence[int]) -> Dataset:
    idx = [int(i) for i in indices]
    if not idx:
        raise ValueError("projection needs at least one feature index")
    if min(idx) < -dataset.schema.n_d or max(idx) >= dataset.schema.n_d:
        raise IndexError(f"feature index out of range for N_d={dataset.schema.n_d}")
    idx = [i % dataset.schema.n_d for i in idx]
    return replace(dataset, schema=dataset.schema.select(idx), features=dataset.features[:, idx])


def fold_assignment(n: int, folds: int, seed: int) -> np.ndarray:
    """Fold index per row, near-equal fold sizes."""
    perm = stream(seed, _FOLDS).permutation(n)
    out = np.empty(n, dtype=int)
    out[perm] = np.arange(n) % folds
    return out


# ---------------------------------------------------------------- file format

def manifest_path(csv_path: str | Path) -> Path:
    return Path(csv_path).with_suffix(".json")


def write_dataset(dataset: Dataset, path: str | Path, config: GridConfig | None = None,
                  extra: dict | None = None) -> None:
    """CSV rows plus a JSON sidecar manifest next to it."""
    path = Path(path)
    n_d = dataset.schema.n_d
    header = ",".join([f"f{i}" for i in range(n_d)] + ["temperature", "gamma", "label"])
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for x, T, g, lab in zip(dataset.features, dataset.temperatures, dataset.gammas, dataset.labels):
            fh.write(",".join(format(v, ".17g") for v in (*x, T, g)) + f",{int(lab)}\n")
    manifest = {
        "format_version": DATASET_FORMAT,
        "n_rows": len(dataset),
        "schema": dataset.schema.to_json(),
        "binning": dataset.binning.to_json(),
        "config": config.to_json() if config is not None else None,
        "seed": config.seed if config is not None else None,
    }
    if not np.array_equal(dataset.row_ids, np.arange(len(dataset))):
        manifest["row_ids"] = dataset.row_ids.tolist()
    if extra:
        manifest.update(extra)
    with open(manifest_path(path), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


def read_manifest(path: str | Path) -> dict:
    with open(manifest_path(path), encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format_version") != DATASET_FORMAT:
        raise ValueError(f"unsupported dataset format {manifest.get('format_version')!r}")
    return manifest


def read_dataset(path: str | Path) -> tuple[Dataset, dict]:
    manifest = read_manifest(path)
    schema = FeatureSchema.from_json(manifest["schema"])
    n_d = schema.n_d
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    expected = [f"f{i}" for i in range(n_d)] + ["temperature", "gamma", "label"]
    if header != expected:
        raise ValueError(f"unexpected CSV header {header}")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[0] != manifest["n_rows"] or data.shape[1] != n_d + 3:
        raise ValueError("CSV shape disagrees with manifest")
    row_ids = np.array(manifest.get("row_ids", np.arange(data.shape[0])), dtype=int)
    ds = Dataset(schema, data[:, :n_d].copy(), data[:, n_d].copy(), data[:, n_d + 1].copy(),
                 data[:, n_d + 2].astype(int), TemperatureBinning.from_json(manifest["binning"]), row_ids)
    return ds, manifest
