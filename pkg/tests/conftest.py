"""Shared test oracles, independent of the implementation under test."""

import math

import numpy as np
import pytest

from hdent.states import NoisyState, element
from hdent.tagstream import BinningConfig, scaled_expected_counts


def exact_hv_probabilities(state: NoisyState, d: int, f: int) -> np.ndarray:
    """Per-pair HV outcome probabilities from first principles.

    Both routings are equally likely; the delayed route records both bins
    one f-shift late, cyclically.  Cross detector pairs stay empty because
    the polarizations of a pair are perfectly correlated.
    """
    probs = np.zeros((4, d, d))
    for i in range(d):
        for j in range(d):
            joint = element(state, (i, j), (i, j)).real
            probs[0, i, j] += 0.5 * joint
            probs[3, (i + f) % d, (j + f) % d] += 0.5 * joint
    return probs


def exact_da_probabilities(state: NoisyState, f: int, phase: float) -> np.ndarray:
    """Per-pair DA outcome probabilities from explicit projector algebra.

    Applies the Born rule on the polarization x time state with the
    interference projectors, independently of the generator's formulas:
    the pure part contracts the state tensor with each projector, the
    white part contracts the identity on time with the polarization
    state through the projectors' reduced 2x2 matrices.
    """
    d = state.dim
    c = state.pure.coefficients
    p = state.p

    def chi(x, t, local_phase):
        v = np.zeros((2, d), dtype=complex)
        sign = 1.0 if x == 0 else -1.0
        v[0, t] = 1.0
        v[1, (t - f) % d] = sign * np.exp(1j * local_phase)
        return v / np.sqrt(2)

    # projector stacks, legs [detector, recorded bin, pol, time];
    # whole Franson phase on Alice's long arm
    xa = np.zeros((2, d, 2, d), dtype=complex)
    xb = np.zeros((2, d, 2, d), dtype=complex)
    for x in range(2):
        for t in range(d):
            xa[x, t] = chi(x, t, phase)
            xb[x, t] = chi(x, t, 0.0)

    psi = np.zeros((2, d, 2, d), dtype=complex)
    for t in range(d):
        psi[0, t, 0, t] += c[t] / math.sqrt(2)
        psi[1, t, 1, t] -= c[t] / math.sqrt(2)
    # amp[x, t, y, s] = <chi_A(x,t) chi_B(y,s) | Psi>
    m1 = xa.conj().reshape(2 * d, 2 * d) @ psi.reshape(2 * d, 2 * d)
    amp = (m1 @ xb.conj().reshape(2 * d, 2 * d).T).reshape(2, d, 2, d)

    bell = np.zeros((2, 2), dtype=complex)
    bell[0, 0] = 1 / math.sqrt(2)
    bell[1, 1] = -1 / math.sqrt(2)
    rho_pol = np.einsum("ab,cd->abcd", bell, bell.conj())  # [pA,pB,pA',pB']
    ga = np.einsum("xtau,xtcu->xtac", xa.conj(), xa)  # reduced 2x2 per projector
    gb = np.einsum("ysbv,ysdv->ysbd", xb.conj(), xb)
    white = np.einsum("abcd,xtac,ysbd->xtys", rho_pol, ga, gb).real / d ** 2

    per_outcome = p * np.abs(amp) ** 2 + (1.0 - p) * white
    probs = np.zeros((4, d, d))
    for k, (x, y) in enumerate(((0, 0), (0, 1), (1, 0), (1, 1))):
        probs[k] = per_outcome[x, :, y, :]
    return probs


def exact_count_sets(state: NoisyState, binning: BinningConfig, total: float,
                     phase: float = math.pi):
    """Infinite-statistics HV and DA count sets for a correlated state."""
    d, f = binning.d, binning.f_shift
    hv = scaled_expected_counts(exact_hv_probabilities(state, d, f), binning, "HV", total)
    da = scaled_expected_counts(exact_da_probabilities(state, f, phase), binning, "DA", total)
    return hv, da


def haar_basis(d: int, rng: np.random.Generator) -> np.ndarray:
    """Random orthonormal basis (rows) from a QR-decomposed Gaussian matrix."""
    z = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    q, r = np.linalg.qr(z)
    return (q * (np.diagonal(r) / np.abs(np.diagonal(r)))).T


def spill_probabilities(bin_ticks: int, sigma_ticks: float, max_ticks: int = 400):
    """Discrete two-photon bin-offset distribution under tick-rounded jitter.

    A photon sits at its bin center and is displaced by round(N(0, sigma));
    returns (P(offset 0), P(|offset| = 1)) for the difference of two
    independent displacements, via the displacement autocorrelation.
    """
    js = np.arange(-max_ticks, max_ticks + 1)
    phi = lambda x: 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))  # noqa: E731
    pr = np.array([phi((j + 0.5) / sigma_ticks) - phi((j - 0.5) / sigma_ticks) for j in js])
    disp = (bin_ticks // 2 + js) // bin_ticks
    per_bin = {}
    for m, q in zip(disp, pr):
        per_bin[m] = per_bin.get(m, 0.0) + q
    stay = sum(q * q for q in per_bin.values())
    spill = 2.0 * sum(
        per_bin[m] * per_bin.get(m - 1, 0.0) for m in sorted(per_bin)
    )
    return stay, spill


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
