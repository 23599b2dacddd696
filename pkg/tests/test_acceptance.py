"""Acceptance criteria, one test per criterion at its stated tolerance.

Each test attaches a short measurement to its pass/fail line, printed in the
"acceptance criteria" section of the pytest terminal summary.
"""

import math

import numpy as np
import pytest

from probetherm.dataset import DEFAULT_TIMES, generate, project
from probetherm.dynamics import (
    HamiltonianSpec,
    Model,
    Observable,
    ProbeState,
    build_hamiltonian,
    diagonalize,
    evolve_joint,
    excitation_number,
    gibbs_populations,
    trajectory,
    truncation_drift,
)
from probetherm.evaluation import (
    KnnSettings,
    data_structure_map,
    evaluate_scenario,
    mse_vs_nd,
    segmentation_fraction,
    split_config,
)
from probetherm.figures import reproduce, scenario_grid
from probetherm.knn import fit, predict_batch

from test_knn import brute_force, make

PLUS = ProbeState.plus()
FLUCTUATION = 1.10


def detail(record, text):
    record("detail", text)


def non_increasing(values, allowance=FLUCTUATION):
    return all(b <= a * allowance for a, b in zip(values, values[1:]))


@pytest.fixture(scope="module")
def fig2e(tmp_path_factory):
    out = tmp_path_factory.mktemp("fig2e_run1")
    return out, reproduce("2e", "desk", out)


# ---------------------------------------------------------------- 1

@pytest.mark.criterion(1, "vacuum Rabi oscillation oracle")
def test_criterion_01_vacuum_oracle(record_property):
    spec = HamiltonianSpec(Model.JC, omega=1.0, qubit_gap=1.0, gamma=1.0)
    times = (0.5, math.pi / 2, 1.6, 2.5)
    got = trajectory(spec, 0.1, PLUS, [(t, Observable.Z) for t in times])
    err = max(abs(v + math.sin(t) ** 2) for v, t in zip(got, times))
    detail(record_property, f"max |err| {err:.2e}, tol 2e-3")
    assert err <= 2e-3


# ---------------------------------------------------------------- 2

@pytest.mark.criterion(2, "Gibbs occupation and cutoff convergence")
def test_criterion_02_gibbs_and_convergence(record_property):
    occ = gibbs_populations(1.0, 2.0, 60).mean_occupation
    occ_err = abs(occ - 1 / (math.exp(0.5) - 1))
    entries = [(t, o) for t in DEFAULT_TIMES for o in Observable]
    drift = max(truncation_drift(HamiltonianSpec(gamma=g, cutoff=60), T, PLUS, entries, extra=10)
                for g in (0.1, 1.0, 2.0) for T in (0.1, 1.0, 2.0))
    detail(record_property, f"occupation err {occ_err:.1e} (tol 1e-6), cutoff 60->70 drift {drift:.1e} "
                            "(tol 1e-8)")
    assert occ_err <= 1e-6
    assert drift < 1e-8


# ---------------------------------------------------------------- 3

@pytest.mark.criterion(3, "unitarity suite over 20 random (T, gamma)")
def test_criterion_03_unitarity(record_property):
    rng = np.random.default_rng(3)
    times = np.linspace(0.0, 26.7, 9)
    worst = 0.0
    rabi_spread = []
    for T, gamma in zip(rng.uniform(0.1, 2.0, 20), rng.uniform(0.1, 2.0, 20)):
        for model in Model:
            spec = HamiltonianSpec(model, gamma=float(gamma))
            H = build_hamiltonian(spec)
            eig = diagonalize(H)
            N = excitation_number(spec.cutoff)
            system = gibbs_populations(1.0, float(T), spec.cutoff)
            rho0 = evolve_joint(spec, system, PLUS, 0.0, eig).rho
            p0, e0, n0 = (np.trace(rho0 @ rho0).real, np.trace(H @ rho0).real,
                          np.trace(N @ rho0).real)
            n_vals = []
            for t in times:
                rho = evolve_joint(spec, system, PLUS, float(t), eig).rho
                n_t = np.trace(N @ rho).real
                n_vals.append(n_t)
                devs = [abs(np.trace(rho) - 1), abs(np.trace(rho @ rho).real - p0),
                        abs(np.trace(H @ rho).real - e0), max(0.0, -np.linalg.eigvalsh(rho).min())]
                if model is Model.JC:
                    devs.append(abs(n_t - n0))
                worst = max(worst, *devs)
            if model is Model.RABI:
                rabi_spread.append(max(n_vals) - min(n_vals))
    detail(record_property, f"worst deviation {worst:.1e} (tol 1e-9), "
                            f"smallest Rabi excitation swing {min(rabi_spread):.2e}")
    assert worst <= 1e-9
    assert min(rabi_spread) > 1e-6


# ---------------------------------------------------------------- 4

@pytest.mark.criterion(4, "KNN agrees with brute force on 200 instances")
def test_criterion_04_knn_oracle(record_property):
    mismatches = 0
    for instance in range(200):
        rng = np.random.default_rng(50_000 + instance)
        n, d = int(rng.integers(1, 60)), int(rng.integers(1, 6))
        X = rng.integers(-4, 5, size=(n, d)).astype(float)
        y = rng.integers(0, 5, size=n)
        y[0] = 4
        k = int(rng.integers(1, n + 1))
        Q = rng.integers(-4, 5, size=(12, d)).astype(float)
        labels, _ = predict_batch(fit(make(X, y), k), Q)
        mismatches += labels.tolist() != [brute_force(X, y, q, k) for q in Q]
    detail(record_property, f"{mismatches} mismatching instances")
    assert mismatches == 0


# ---------------------------------------------------------------- 5

@pytest.mark.criterion(5, "noiseless single-feature predictions within one class bin")
def test_criterion_05_near_certainty(record_property):
    cfg = scenario_grid("baseline", "desk", n_T=200)
    train, val = split_config(generate(cfg), cfg)
    assert cfg.schema.entries[0] == (1.6, Observable.Z)
    rep = evaluate_scenario(project(train, [0]), project(val, [0]), KnnSettings(), cfg.seed)
    share = float(np.mean(np.abs(rep.labels - val.labels) <= 1))
    detail(record_property, f"{share:.1%} within one bin over {rep.n_val} points, need >= 95%")
    assert share >= 0.95


# ---------------------------------------------------------------- 6

@pytest.mark.criterion(6, "noisy fixed-gamma precision gain from N_d=1 to N_d=5")
def test_criterion_06_precision_gain(record_property):
    ratios = {}
    for scale, n_T in (("desk", 300), ("full", 1000)):
        cfg = scenario_grid("sz_known", scale, n_T=n_T)
        curve = mse_vs_nd(generate(cfg), cfg, KnnSettings(), [1, 5])
        ratios[scale] = curve.at(1) / curve.at(5)
    detail(record_property, f"MSE(1)/MSE(5) desk {ratios['desk']:.2f} (need >= 20), "
                            f"full {ratios['full']:.2f} (need >= 50)")
    assert ratios["desk"] >= 20
    assert ratios["full"] >= 50


# ---------------------------------------------------------------- 7

@pytest.mark.criterion(7, "MSE non-increasing in N_d for the four scenarios")
def test_criterion_07_monotone_curves(fig2e, record_property):
    results = fig2e[1]["results"]
    assert set(results) == {"baseline", "sz_known", "sz_unknown", "sy_unknown"}
    worst = {name: max(b / a for a, b in zip(r["mse"], r["mse"][1:])) for name, r in results.items()}
    detail(record_property, "largest step ratio " +
           ", ".join(f"{n} {v:.3f}" for n, v in worst.items()) + " (allowed 1.10)")
    for name, r in results.items():
        assert r["n_d"] == list(range(1, 8))
        assert non_increasing(r["mse"]), name


# ---------------------------------------------------------------- 8

@pytest.mark.criterion(8, "unknown gamma converges to the known-gamma error")
def test_criterion_08_unknown_gamma_convergence(fig2e, record_property):
    results = fig2e[1]["results"]
    known, unknown = results["sz_known"]["mse"][-1], results["sz_unknown"]["mse"][-1]
    detail(record_property, f"N_d=7 unknown/known {unknown / known:.2f} (need <= 3)")
    assert unknown <= 3 * known


# ---------------------------------------------------------------- 9

@pytest.mark.criterion(9, "Rabi curves decrease and sit above JC at N_d 5..7")
def test_criterion_09_rabi_comparison(tmp_path, record_property):
    results = reproduce("3h", "desk", tmp_path)["results"]
    notes = []
    for obs in ("sz", "sy"):
        jc, rabi = results[f"{obs}_unknown"]["mse"], results[f"rabi_{obs}_unknown"]["mse"]
        notes.append(f"{obs}: Rabi/JC at N_d=5,6,7 " +
                     "/".join(f"{rabi[i] / jc[i]:.2f}" for i in (4, 5, 6)))
        assert non_increasing(rabi), obs
        assert all(rabi[i] >= jc[i] for i in (4, 5, 6)), obs
    detail(record_property, "; ".join(notes))


# ---------------------------------------------------------------- 10

@pytest.mark.criterion(10, "(sy, sz) map segments by temperature at t=1.6")
def test_criterion_10_segmentation(record_property):
    cfg = scenario_grid("sz_unknown", "desk")
    frac = segmentation_fraction(data_structure_map(cfg, 1.6))
    detail(record_property, f"{frac:.1%} of {cfg.n_rows} points, need >= 90%")
    assert frac >= 0.90


# ---------------------------------------------------------------- 11

@pytest.mark.criterion(11, "reproduce 2e is byte-identical across runs")
def test_criterion_11_determinism(fig2e, tmp_path, record_property):
    first, _ = fig2e
    reproduce("2e", "desk", tmp_path)
    names = sorted(p.name for p in first.iterdir())
    assert names == sorted(p.name for p in tmp_path.iterdir())
    differing = [n for n in names if (first / n).read_bytes() != (tmp_path / n).read_bytes()]
    detail(record_property, f"{len(names)} files compared, {len(differing)} differ")
    assert not differing
