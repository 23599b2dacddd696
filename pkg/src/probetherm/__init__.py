"""Probe-based quantum thermometry with a k-nearest-neighbour temperature classifier."""

__version__ = "0.1.0"

from .dataset import (
    Dataset,
    FeatureSchema,
    GridConfig,
    NoiseTarget,
    TemperatureBinning,
    add_noise,
    bin_temperatures,
    generate,
    project,
    split,
)
from .dynamics import (
    HamiltonianSpec,
    Model,
    Observable,
    ProbeState,
    TruncationError,
    build_hamiltonian,
    diagonalize,
    evolve_probe,
    expectation,
    gibbs_populations,
    trajectory,
)
from .evaluation import EvalReport, KnnSettings, MseCurve, evaluate_scenario, mse, mse_vs_nd
from .knn import KnnModel, cross_validate, fit, predict, predict_batch
