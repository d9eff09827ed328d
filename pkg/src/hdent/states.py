"""Discretized bipartite photon-pair states under an isotropic noise channel.

Everything downstream (basis visibilities, count-matrix simulation, witness
reconstruction) is an estimator of quantities that this module computes
exactly, so it doubles as the ground-truth oracle in the tests.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

NORM_TOL = 1e-12
PROJECTOR_NORM_TOL = 1e-10
MATERIALIZE_MAX_DIM = 32


class Pairing(enum.Enum):
    """How Alice's computational index relates to Bob's index j."""

    CORRELATED = "correlated"          # |j>_A |j>_B, time-bin style
    ANTICORRELATED = "anticorrelated"  # |d-1-j>_A |j>_B, index-reversed


@dataclass(frozen=True)
class SchmidtState:
    """Pure bipartite state sum_j c_j |a(j)>_A |j>_B with unit-norm amplitudes.

    ``coefficients`` are complex amplitudes indexed by Bob's computational
    index j in 0..d-1; Alice's index a(j) is j for correlated pairing and
    d-1-j for anticorrelated pairing.
    """

    dim: int
    coefficients: np.ndarray
    pairing: Pairing = Pairing.CORRELATED

    def __post_init__(self):
        if int(self.dim) < 2:
            raise ValueError(f"state dimension must be >= 2, got {self.dim}")
        coeffs = np.array(self.coefficients, dtype=complex)
        if coeffs.shape != (self.dim,):
            raise ValueError(
                f"expected {self.dim} coefficients, got shape {coeffs.shape}"
            )
        norm = float(np.sum(np.abs(coeffs) ** 2))
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"coefficients not normalized: sum|c|^2 = {norm!r}")
        coeffs.setflags(write=False)
        object.__setattr__(self, "dim", int(self.dim))
        object.__setattr__(self, "coefficients", coeffs)

    @classmethod
    def from_amplitudes(cls, amplitudes, pairing=Pairing.CORRELATED):
        """Build a state from arbitrary (unnormalized) amplitudes."""
        amps = np.asarray(amplitudes, dtype=complex)
        norm = np.linalg.norm(amps)
        if norm == 0.0:
            raise ValueError("amplitudes are all zero")
        return cls(len(amps), amps / norm, pairing)

    def alice_index(self, j):
        if self.pairing is Pairing.CORRELATED:
            return j
        return self.dim - 1 - j

    def alice_indices(self):
        """Alice's index a(j) for j = 0..d-1, as an array."""
        idx = np.arange(self.dim)
        return idx if self.pairing is Pairing.CORRELATED else idx[::-1]

    def amplitude(self, i, j) -> complex:
        """Amplitude of the product component |i>_A |j>_B."""
        if not (0 <= i < self.dim and 0 <= j < self.dim):
            raise IndexError(f"indices ({i}, {j}) out of range for dim {self.dim}")
        if i != self.alice_index(j):
            return 0j
        return complex(self.coefficients[j])


def make_max_entangled(d: int, pairing=Pairing.CORRELATED) -> SchmidtState:
    """Maximally entangled state with uniform coefficients 1/sqrt(d)."""
    if d < 2:
        raise ValueError(f"dimension must be >= 2, got {d}")
    return SchmidtState(d, np.full(d, 1.0 / np.sqrt(d), dtype=complex), pairing)


@dataclass(frozen=True)
class NoisyState:
    """Isotropic mixture p |psi><psi| + (1-p)/d^2 * identity."""

    pure: SchmidtState
    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"mixing weight p must be in [0, 1], got {self.p}")

    @property
    def dim(self) -> int:
        return self.pure.dim


@dataclass(frozen=True)
class DensityMatrix:
    """Dense two-party density operator, validated on construction."""

    entries: np.ndarray
    dim_total: int

    def __post_init__(self):
        entries = np.array(self.entries, dtype=complex)
        if entries.shape != (self.dim_total, self.dim_total):
            raise ValueError(f"expected square {self.dim_total}-dim matrix")
        if np.max(np.abs(entries - entries.conj().T)) > 1e-12:
            raise ValueError("matrix is not Hermitian within 1e-12")
        if abs(np.trace(entries).real - 1.0) > 1e-12:
            raise ValueError("trace differs from 1 by more than 1e-12")
        if np.linalg.eigvalsh(entries).min() < -1e-10:
            raise ValueError("matrix has an eigenvalue below -1e-10")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)


def materialize(state: NoisyState) -> DensityMatrix:
    """Dense density matrix of a noisy state, for small-d oracle checks.

    Guarded at d <= 32: the output has d^4 complex entries.
    """
    d = state.dim
    if d > MATERIALIZE_MAX_DIM:
        raise ValueError(
            f"refusing to materialize d={d} > {MATERIALIZE_MAX_DIM} "
            f"({d ** 4} complex entries)"
        )
    psi = np.zeros(d * d, dtype=complex)
    for j in range(d):
        psi[state.pure.alice_index(j) * d + j] = state.pure.coefficients[j]
    rho = state.p * np.outer(psi, psi.conj())
    rho += np.eye(d * d) * ((1.0 - state.p) / d ** 2)
    return DensityMatrix(rho, d * d)


def element(state: NoisyState, bra, ket) -> complex:
    """Single density-matrix element <bra| rho |ket> without materializing.

    ``bra`` and ``ket`` are (alice_bin, bob_bin) index pairs.
    """
    d = state.dim
    (bi, bj), (ki, kj) = bra, ket
    for idx in (bi, bj, ki, kj):
        if not 0 <= idx < d:
            raise IndexError(f"bin index {idx} out of range for dim {d}")
    value = state.p * state.pure.amplitude(bi, bj) * np.conj(state.pure.amplitude(ki, kj))
    if bi == ki and bj == kj:
        value += (1.0 - state.p) / d ** 2
    return complex(value)


def joint_probability(state: NoisyState, proj_a, proj_b) -> float:
    """Probability of the product projector |a><a| x |b><b| on the state.

    The white-noise part contributes (1-p)/d^2 for any unit projectors, the
    pure part p |<psi|a,b>|^2.
    """
    d = state.dim
    a = np.asarray(proj_a, dtype=complex)
    b = np.asarray(proj_b, dtype=complex)
    if a.shape != (d,) or b.shape != (d,):
        raise ValueError(f"projector vectors must have length {d}")
    for name, v in (("proj_a", a), ("proj_b", b)):
        norm = float(np.sum(np.abs(v) ** 2))
        if abs(norm - 1.0) > PROJECTOR_NORM_TOL:
            raise ValueError(f"{name} is not unit-norm: |v|^2 = {norm!r}")
    overlap = np.sum(state.pure.coefficients * a[state.pure.alice_indices()].conj() * b.conj())
    return float(state.p * np.abs(overlap) ** 2 + (1.0 - state.p) / d ** 2)
