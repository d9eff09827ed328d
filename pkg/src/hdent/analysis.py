"""Noise quantification, Poisson resampling errors, thresholds, link budget."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .tagstream import BinningConfig, CountMatrixSet, TagStream, sift_and_bin

GROUND_TRUTH = "ground_truth"
ACCIDENTAL_MODEL = "accidental_model"
DEFAULT_RESAMPLES = 150


@dataclass(frozen=True)
class NoiseFractionEstimate:
    """Fraction of kept coincidences attributable to noise, in [0, 1].

    ``nf_true`` uses simulation origin labels; ``nf_estimated`` is the
    label-free uniform-pedestal estimate.  Only the requested one is set.
    """

    nf_true: Optional[float]
    nf_estimated: Optional[float]
    method: str

    @property
    def value(self) -> float:
        return self.nf_true if self.nf_true is not None else self.nf_estimated


def _pedestal_estimate(matrices: np.ndarray) -> float:
    """NF under a uniform-background model: off-diagonal pedestal level
    extrapolated under the diagonal."""
    m = np.asarray(matrices, dtype=float)
    if m.ndim == 2:
        m = m[None, :, :]
    total = m.sum()
    if total <= 0:
        raise ValueError("cannot estimate a noise fraction without counts")
    n_mat, d, _ = m.shape
    diag = sum(float(np.trace(mm)) for mm in m)
    level = (total - diag) / (n_mat * d * (d - 1))
    return float(min(1.0, max(0.0, level * n_mat * d * d / total)))


def noise_fraction(data, mode: str = GROUND_TRUTH, binning: Optional[BinningConfig] = None,
                   basis: str = "HV") -> NoiseFractionEstimate:
    """Noise fraction of a count-matrix set (or a stream, sifted on the fly).

    GROUND_TRUTH counts a kept coincidence as noise when either photon is
    labelled background; it is unavailable for unknown-origin data.
    ACCIDENTAL_MODEL assumes background counts land uniformly across bins
    and detector pairs, estimates the pedestal from all off-diagonal cells,
    and extrapolates it under the diagonals; on exact isotropic-state
    matrices it returns 1 - p.
    """
    if isinstance(data, TagStream):
        if binning is None:
            raise ValueError("a binning is required to sift a stream")
        data = sift_and_bin(data, binning, basis)
    if mode == GROUND_TRUTH:
        if not isinstance(data, CountMatrixSet):
            raise ValueError("ground-truth noise fraction needs origin labels")
        if data.noise_coincidences is None:
            raise ValueError("stream carries unknown origins; ground truth unavailable")
        if data.frames_kept == 0:
            raise ValueError("no kept coincidences")
        return NoiseFractionEstimate(
            data.noise_coincidences / data.frames_kept, None, GROUND_TRUTH
        )
    if mode == ACCIDENTAL_MODEL:
        matrices = data.matrices if isinstance(data, CountMatrixSet) else data
        return NoiseFractionEstimate(None, _pedestal_estimate(matrices), ACCIDENTAL_MODEL)
    raise ValueError(f"unknown mode {mode!r}")


@dataclass(frozen=True)
class ResampleSummary:
    mean: float
    std: float
    n_resamples: int

    @property
    def three_sigma(self) -> float:
        return 3.0 * self.std


def _replicate(data, rng: np.random.Generator):
    if isinstance(data, CountMatrixSet):
        drawn = rng.poisson(data.matrices.astype(float)).astype(np.int64)
        return replace(data, matrices=drawn)
    if isinstance(data, np.ndarray):
        return rng.poisson(data.astype(float)).astype(float)
    if isinstance(data, (tuple, list)):
        return type(data)(_replicate(part, rng) for part in data)
    raise TypeError(f"cannot resample object of type {type(data).__name__}")


def _check_nonnegative(data) -> None:
    if isinstance(data, CountMatrixSet):
        return  # validated on construction
    if isinstance(data, np.ndarray):
        if np.any(np.asarray(data) < 0):
            raise ValueError("counts must be non-negative")
        return
    if isinstance(data, (tuple, list)):
        for part in data:
            _check_nonnegative(part)
        return
    raise TypeError(f"cannot resample object of type {type(data).__name__}")


def poisson_resample(
    data,
    statistic: Callable,
    n_resamples: int = DEFAULT_RESAMPLES,
    seed: int = 0,
) -> ResampleSummary:
    """Spread of a statistic under Poisson fluctuations of the counts.

    Each observed count is taken as the Poisson mean; ``statistic`` is
    re-evaluated on ``n_resamples`` replicate data sets (count-matrix sets,
    bare arrays, or tuples thereof).  Replicates use counter-keyed
    generators, so results are independent of evaluation order.
    """
    if n_resamples < 2:
        raise ValueError("need at least 2 resamples")
    _check_nonnegative(data)
    values = np.empty(n_resamples)
    for r in range(n_resamples):
        rng = np.random.Generator(
            np.random.Philox(key=int(seed) & ((1 << 128) - 1), counter=r << 128)
        )
        values[r] = statistic(_replicate(data, rng))
    return ResampleSummary(float(values.mean()), float(values.std(ddof=1)), n_resamples)


@dataclass(frozen=True)
class SweepPoint:
    """One noise setting of a sweep: certification statistic and its error."""

    noise_setting: float
    nf: NoiseFractionEstimate
    witness_value: float
    sigma: float
    certified: bool

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")


@dataclass(frozen=True)
class ThresholdResult:
    """Largest noise fraction with a positive certification statistic.

    ``nf_star`` is None when the sweep never crosses zero; ``censored``
    then says on which side the data sit.  ``ambiguous`` flags sweeps whose
    statistic changes sign more than once; all crossings are listed.
    """

    nf_star: Optional[float]
    lower: Optional[float]
    upper: Optional[float]
    crossings: tuple
    ambiguous: bool
    censored: str  # "none", "above" (all certified) or "below" (none certified)


def _interp_root(x0, y0, x1, y1) -> Optional[float]:
    if y0 == y1:
        return None
    t = y0 / (y0 - y1)
    if not 0.0 <= t <= 1.0:
        return None
    return x0 + t * (x1 - x0)


def threshold_scan(points: Sequence[SweepPoint]) -> ThresholdResult:
    """Locate the certification threshold along a noise sweep.

    Points must be sorted by noise fraction; the threshold is the linear
    interpolation of the statistic's sign change, with an uncertainty band
    from interpolating the +/- 1 sigma offsets of the same segment.
    """
    if len(points) < 2:
        raise ValueError("need at least two sweep points")
    xs = [p.nf.value for p in points]
    if any(b < a for a, b in zip(xs, xs[1:])):
        raise ValueError("sweep points must be sorted by noise fraction")
    ys = [p.witness_value for p in points]
    crossings = []
    for k in range(len(points) - 1):
        if (ys[k] > 0) != (ys[k + 1] > 0):
            root = _interp_root(xs[k], ys[k], xs[k + 1], ys[k + 1])
            if root is not None:
                crossings.append((k, root))
    if not crossings:
        censored = "above" if ys[0] > 0 else "below"
        return ThresholdResult(None, None, None, (), False, censored)
    ambiguous = len(crossings) > 1
    # threshold = first certified -> uncertified transition, else first crossing
    chosen = next(((k, r) for k, r in crossings if ys[k] > 0), crossings[0])
    k, nf_star = chosen
    a, b = points[k], points[k + 1]
    lower = _interp_root(xs[k], ys[k] - a.sigma, xs[k + 1], ys[k + 1] - b.sigma)
    upper = _interp_root(xs[k], ys[k] + a.sigma, xs[k + 1], ys[k + 1] + b.sigma)
    return ThresholdResult(
        nf_star, lower, upper, tuple(r for _, r in crossings), ambiguous, "none"
    )


def fiber_distance(loss_db: float, attenuation_db_per_km: float = 0.2) -> float:
    """Fiber length whose attenuation equals the tolerable loss budget."""
    if loss_db < 0:
        raise ValueError("loss budget must be non-negative")
    if attenuation_db_per_km <= 0:
        raise ValueError("attenuation must be positive")
    return loss_db / attenuation_db_per_km


def isotropic_noise_fraction(p: float) -> float:
    """NF of an isotropic mixture at the probability level: exactly 1 - p."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must be in [0, 1]")
    return 1.0 - p
