"""Qubit probe coupled to a thermal bosonic mode.

Joint Hilbert space is the product basis |n> (x) |s>, Fock number ``n``
major and probe level ``s`` minor.  The probe basis is ordered
(|e>, |g>) so the probe matrices are the textbook Pauli matrices with
sigma_z|e> = +|e>, and |+> = (|e> + |g>)/sqrt(2).

Units: mode frequency omega = 1 by default, k_B = hbar = 1.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

DEFAULT_CUTOFF = 60
RABI_CUTOFF = 150  # counter-rotating terms spread the state far up the Fock ladder
DEFAULT_TAIL_TOL = 1e-9
CONVERGENCE_TOL = 1e-8


class TruncationError(ValueError):
    """Fock cutoff too small for the requested temperature."""


class DiagonalizationError(RuntimeError):
    pass


class CorruptStateError(ValueError):
    pass


class Model(str, enum.Enum):
    JC = "jc"
    RABI = "rabi"


class Observable(str, enum.Enum):
    X = "sx"
    Y = "sy"
    Z = "sz"

    @property
    def matrix(self) -> np.ndarray:
        return PAULI[self]


PAULI = {
    Observable.X: np.array([[0, 1], [1, 0]], dtype=complex),
    Observable.Y: np.array([[0, -1j], [1j, 0]], dtype=complex),
    Observable.Z: np.array([[1, 0], [0, -1]], dtype=complex),
}

# probe ladder operators in the (|e>, |g>) basis
SIGMA_PLUS = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA_MINUS = SIGMA_PLUS.T.copy()


@dataclass(frozen=True)
class HamiltonianSpec:
    """Model kind plus physical parameters; ``cutoff`` is the highest Fock number kept."""

    model: Model = Model.JC
    omega: float = 1.0
    qubit_gap: float = 1.0
    gamma: float = 1.0
    cutoff: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "model", Model(self.model))
        if self.cutoff is None:
            object.__setattr__(self, "cutoff", default_cutoff(self.model))
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega}")
        if not self.gamma >= 0:
            raise ValueError(f"gamma must be non-negative, got {self.gamma}")
        if int(self.cutoff) != self.cutoff or self.cutoff < 1:
            raise ValueError(f"cutoff must be an integer >= 1, got {self.cutoff}")

    @property
    def dim(self) -> int:
        return 2 * (self.cutoff + 1)


@dataclass(frozen=True)
class ThermalSystemState:
    temperature: float
    populations: np.ndarray
    tail_mass: float

    @property
    def mean_occupation(self) -> float:
        return float(np.arange(self.populations.size) @ self.populations)


@dataclass(frozen=True)
class ProbeState:
    rho: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=complex)
        if rho.shape != (2, 2):
            raise ValueError(f"probe state must be 2x2, got {rho.shape}")
        if abs(np.trace(rho) - 1) > 1e-12:
            raise ValueError("probe state trace differs from 1")
        if np.abs(rho - rho.conj().T).max() > 1e-12:
            raise ValueError("probe state is not Hermitian")
        if np.linalg.eigvalsh(rho).min() < -1e-12:
            raise ValueError("probe state is not positive semidefinite")
        object.__setattr__(self, "rho", rho)

    @classmethod
    def from_bloch(cls, x: float, y: float, z: float) -> "ProbeState":
        r = np.array([x, y, z], dtype=float)
        if np.linalg.norm(r) > 1 + 1e-12:
            raise ValueError(f"Bloch vector {r} lies outside the unit ball")
        rho = 0.5 * (np.eye(2) + sum(c * PAULI[o] for c, o in zip(r, Observable)))
        return cls(rho)

    @classmethod
    def plus(cls) -> "ProbeState":
        return cls.from_bloch(1.0, 0.0, 0.0)

    @classmethod
    def from_ket(cls, ket: Sequence[complex]) -> "ProbeState":
        v = np.asarray(ket, dtype=complex)
        v = v / np.linalg.norm(v)
        return cls(np.outer(v, v.conj()))


@dataclass(frozen=True)
class JointState:
    rho: np.ndarray
    dims: tuple[int, int] = field(default=(0, 2))

    def probe(self) -> ProbeState:
        return ProbeState(partial_trace_system(self.rho, self.dims[0]))


def gibbs_populations(omega: float, T: float, cutoff: int,
                      tail_tol: float = DEFAULT_TAIL_TOL) -> ThermalSystemState:
    """Fock occupations of a thermal mode, truncated at ``cutoff`` and renormalized."""
    if not omega > 0:
        raise ValueError(f"omega must be positive, got {omega}")
    if not T > 0:
        raise ValueError(f"temperature must be positive, got {T}")
    if cutoff < 1:
        raise ValueError(f"cutoff must be >= 1, got {cutoff}")
    beta_w = omega / T
    tail = float(np.exp(-beta_w * (cutoff + 1)))
    if tail > tail_tol:
        raise TruncationError(
            f"cutoff {cutoff} leaves thermal tail {tail:.3g} > {tail_tol:g} at T={T}")
    p = np.exp(-beta_w * np.arange(cutoff + 1))
    p /= p.sum()
    return ThermalSystemState(float(T), p, tail)


def _ladder(cutoff: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, cutoff + 1, dtype=float)), k=1).astype(complex)


def build_hamiltonian(spec: HamiltonianSpec) -> np.ndarray:
    a = _ladder(spec.cutoff)
    ad = a.conj().T
    id_s = np.eye(spec.cutoff + 1)
    id_p = np.eye(2)
    sz = PAULI[Observable.Z]

    H = spec.omega * np.kron(ad @ a, id_p) + 0.5 * spec.qubit_gap * np.kron(id_s, sz)
    if spec.model is Model.JC:
        H += spec.gamma * (np.kron(ad, SIGMA_MINUS) + np.kron(a, SIGMA_PLUS))
    else:
        H += spec.gamma * np.kron(a + ad, PAULI[Observable.X])
    return H


def excitation_number(cutoff: int) -> np.ndarray:
    """a^dag a + sigma_+ sigma_-, conserved by the JC interaction."""
    a = _ladder(cutoff)
    return np.kron(a.conj().T @ a, np.eye(2)) + np.kron(np.eye(cutoff + 1), SIGMA_PLUS @ SIGMA_MINUS)


def diagonalize(H: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition ``H = V diag(w) V^dag`` of a Hermitian matrix."""
    H = np.asarray(H)
    scale = max(np.abs(H).max(), 1.0)
    if np.abs(H - H.conj().T).max() > 1e-12 * scale:
        raise ValueError("matrix is not Hermitian")
    try:
        w, V = np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:
        raise DiagonalizationError(str(exc)) from exc
    return w, V


def propagator(w: np.ndarray, V: np.ndarray, t: float) -> np.ndarray:
    return (V * np.exp(-1j * w * t)) @ V.conj().T


def partial_trace_system(rho: np.ndarray, system_dim: int) -> np.ndarray:
    r = rho.reshape(system_dim, 2, system_dim, 2)
    return np.einsum("iaib->ab", r)


def initial_joint(system: ThermalSystemState, probe: ProbeState) -> JointState:
    n = system.populations.size
    return JointState(np.kron(np.diag(system.populations).astype(complex), probe.rho), (n, 2))


def evolve_joint(spec: HamiltonianSpec, system: ThermalSystemState, probe: ProbeState,
                 t: float, eig: tuple[np.ndarray, np.ndarray] | None = None) -> JointState:
    if t < 0:
        raise ValueError(f"time must be non-negative, got {t}")
    if system.populations.size != spec.cutoff + 1:
        raise ValueError("thermal state and Hamiltonian use different cutoffs")
    w, V = eig if eig is not None else diagonalize(build_hamiltonian(spec))
    U = propagator(w, V, t)
    rho0 = initial_joint(system, probe).rho
    return JointState(U @ rho0 @ U.conj().T, (spec.cutoff + 1, 2))


def evolve_probe(spec: HamiltonianSpec, system: ThermalSystemState, probe: ProbeState,
                 t: float) -> ProbeState:
    """Reduced probe state tr_S[U(t) (rho_S x rho_P) U(t)^dag], by direct evolution."""
    rho = evolve_joint(spec, system, probe, t).rho
    rp = partial_trace_system(rho, spec.cutoff + 1)
    # clean round-off so the result passes ProbeState validation
    rp = 0.5 * (rp + rp.conj().T)
    rp /= np.trace(rp).real
    return ProbeState(rp)


def expectation(probe: ProbeState, obs: Observable) -> float:
    val = np.trace(probe.rho @ Observable(obs).matrix)
    if abs(val.imag) > 1e-8:
        raise CorruptStateError(f"<{Observable(obs).value}> has imaginary part {val.imag:.3g}")
    return float(val.real)


def fock_responses(spec: HamiltonianSpec, probe: ProbeState,
                   entries: Sequence[tuple[float, Observable]],
                   eig: tuple[np.ndarray, np.ndarray] | None = None) -> np.ndarray:
    """Probe expectations for every initial Fock state.

    Returns ``G`` of shape ``(cutoff + 1, len(entries))`` where ``G[n, j]`` is
    the expectation of observable ``entries[j][1]`` at time ``entries[j][0]``
    starting from |n><n| (x) rho_P.  Thermal features are then ``p(T) @ G``.
    """
    w, V = eig if eig is not None else diagonalize(build_hamiltonian(spec))
    ns = spec.cutoff + 1
    # mixed probe -> weighted pure components
    lam, phi = np.linalg.eigh(probe.rho)
    keep = lam > 1e-15
    lam, phi = lam[keep], phi[:, keep]

    # columns: initial kets |n> (x) |phi_j>, index n * r + j
    r = lam.size
    psi0 = np.zeros((2 * ns, ns * r), dtype=complex)
    for j in range(r):
        for s in range(2):
            psi0[np.arange(ns) * 2 + s, np.arange(ns) * r + j] = phi[s, j]
    c0 = V.conj().T @ psi0

    times = sorted({float(t) for t, _ in entries})
    G = np.empty((ns, len(entries)))
    for t in times:
        if t < 0:
            raise ValueError(f"time must be non-negative, got {t}")
        psi = V @ (np.exp(-1j * w * t)[:, None] * c0)
        amp = psi.reshape(ns, 2, ns, r)  # (n', s, n, j)
        # reduced probe matrix per initial n, averaged over mixed components
        rho_p = np.einsum("manj,mbnj,j->nab", amp, amp.conj(), lam)
        for col, (tc, obs) in enumerate(entries):
            if float(tc) == t:
                vals = np.einsum("nab,ba->n", rho_p, Observable(obs).matrix)
                G[:, col] = vals.real
    return G


def trajectory(spec: HamiltonianSpec, T: float, probe: ProbeState,
               entries: Sequence[tuple[float, Observable]],
               tail_tol: float = DEFAULT_TAIL_TOL) -> np.ndarray:
    """Feature vector, one expectation per (time, observable) entry."""
    system = gibbs_populations(spec.omega, T, spec.cutoff, tail_tol)
    return system.populations @ fock_responses(spec, probe, entries)


def default_cutoff(model: Model | str) -> int:
    return RABI_CUTOFF if Model(model) is Model.RABI else DEFAULT_CUTOFF


def truncation_drift(spec: HamiltonianSpec, T: float, probe: ProbeState,
                     entries: Sequence[tuple[float, Observable]], extra: int = 10) -> float:
    """Largest feature change when the Fock cutoff grows by ``extra`` levels."""
    wider = HamiltonianSpec(spec.model, spec.omega, spec.qubit_gap, spec.gamma, spec.cutoff + extra)
    a = trajectory(spec, T, probe, entries)
    b = trajectory(wider, T, probe, entries)
    return float(np.abs(a - b).max())
