import math

import numpy as np
import pytest

from hdent.analysis import (
    ACCIDENTAL_MODEL,
    GROUND_TRUTH,
    NoiseFractionEstimate,
    SweepPoint,
    fiber_distance,
    isotropic_noise_fraction,
    noise_fraction,
    poisson_resample,
    threshold_scan,
)
from hdent.mub import build_mubs, correlation_matrix, visibility_sum
from hdent.states import NoisyState, make_max_entangled
from hdent.tagstream import (
    BASIS_HV,
    BinningConfig,
    ClockConfig,
    SourceModel,
    generate_stream,
    sift_and_bin,
)
from hdent.witness import witness_exact, witness_from_counts

from conftest import exact_count_sets

CLOCK = ClockConfig()
B10 = BinningConfig.for_dimension(CLOCK, 10)


def stream_counts(pair_rate, bg, seed, n=40_000):
    m = SourceModel(make_max_entangled(10), pair_rate, bg, 0.0, 1.0, BASIS_HV)
    return sift_and_bin(generate_stream(m, CLOCK, n, seed), B10, BASIS_HV)


def point(nf, value, sigma=0.0):
    return SweepPoint(
        noise_setting=nf,
        nf=NoiseFractionEstimate(nf, None, GROUND_TRUTH),
        witness_value=value,
        sigma=sigma,
        certified=value > 0,
    )


class TestNoiseFraction:
    def test_zero_background(self):
        counts = stream_counts(3e6, 0.0, seed=1)
        assert noise_fraction(counts).nf_true == 0.0

    def test_background_only(self):
        counts = stream_counts(0.0, 4e6, seed=2)
        assert noise_fraction(counts).nf_true == 1.0

    def test_doubling_background_increases_nf(self):
        low = noise_fraction(stream_counts(3e6, 2e6, seed=3)).nf_true
        high = noise_fraction(stream_counts(3e6, 4e6, seed=3)).nf_true
        assert high > low > 0.0

    def test_isotropic_pedestal_is_exact_single_matrix(self):
        mubs = build_mubs(5)
        for p in (0.0, 0.35, 0.8, 1.0):
            m = correlation_matrix(NoisyState(make_max_entangled(5), p), mubs, 1, 1)
            est = noise_fraction(m, ACCIDENTAL_MODEL).nf_estimated
            assert abs(est - (1.0 - p)) < 1e-12
            assert abs(isotropic_noise_fraction(p) - (1.0 - p)) < 1e-15

    def test_isotropic_pedestal_is_exact_hv_set(self):
        for p in (0.2, 0.65):
            hv, _ = exact_count_sets(NoisyState(make_max_entangled(10), p), B10, 1e8)
            est = noise_fraction(hv, ACCIDENTAL_MODEL).nf_estimated
            assert abs(est - (1.0 - p)) < 1e-4

    def test_ground_truth_needs_labels(self):
        with pytest.raises(ValueError):
            noise_fraction(np.ones((4, 3, 3)), GROUND_TRUTH)

    def test_stream_input_needs_binning(self):
        m = SourceModel(make_max_entangled(10), 1e6, 0.0, 0.0, 1.0, BASIS_HV)
        stream = generate_stream(m, CLOCK, 2000, 5)
        with pytest.raises(ValueError, match="binning"):
            noise_fraction(stream)
        assert noise_fraction(stream, binning=B10).nf_true == 0.0

    def test_empty_counts_rejected(self):
        with pytest.raises(ValueError):
            noise_fraction(np.zeros((4, 3, 3)), ACCIDENTAL_MODEL)


class TestPoissonResample:
    def test_zero_counts_zero_variance(self):
        summary = poisson_resample(
            np.zeros((4, 5, 5)), lambda m: float(m.sum()), 10, seed=0
        )
        assert summary.mean == 0.0 and summary.std == 0.0

    def test_sigma_scales_with_inverse_root_counts(self):
        state = NoisyState(make_max_entangled(10), 0.5)

        def stat(pair):
            return witness_from_counts(pair[0], pair[1], 10, 1).witness_lower_bound

        sigmas = {}
        for total in (1e4, 1e6):
            hv, da = exact_count_sets(state, B10, total)
            sigmas[total] = poisson_resample((hv, da), stat, 150, seed=5).std
        ratio = sigmas[1e4] / sigmas[1e6]
        assert 8.0 < ratio < 12.0

    def test_stable_across_seeds(self):
        state = NoisyState(make_max_entangled(10), 0.5)
        hv, da = exact_count_sets(state, B10, 3e4)

        def stat(pair):
            return witness_from_counts(pair[0], pair[1], 10, 1).witness_lower_bound

        stds = [poisson_resample((hv, da), stat, 150, seed=k).std for k in (1, 2, 3)]
        assert (max(stds) - min(stds)) / min(stds) < 0.15

    def test_linear_statistic_unbiased(self):
        rng_counts = np.full((5, 5), 400.0)
        summary = poisson_resample(rng_counts, lambda m: float(m.sum()), 150, seed=9)
        point_estimate = 400.0 * 25
        assert abs(summary.mean - point_estimate) < 3 * summary.std / math.sqrt(150)

    def test_three_sigma_report(self):
        summary = poisson_resample(np.full((2, 2), 50.0), lambda m: float(m.sum()), 50, 1)
        assert np.isclose(summary.three_sigma, 3 * summary.std)

    def test_rejects_negative_counts(self):
        with pytest.raises(ValueError):
            poisson_resample(np.array([[-1.0, 2.0]]), lambda m: 0.0, 10, 0)

    def test_rejects_too_few_resamples(self):
        with pytest.raises(ValueError):
            poisson_resample(np.ones((2, 2)), lambda m: 0.0, 1, 0)

    def test_deterministic_in_seed(self):
        data = np.full((3, 3), 30.0)
        a = poisson_resample(data, lambda m: float(m.sum()), 20, seed=4)
        b = poisson_resample(data, lambda m: float(m.sum()), 20, seed=4)
        assert a == b


class TestThresholdScan:
    def test_ideal_visibility_threshold(self):
        d, k = 3, 4
        mubs = build_mubs(d)
        pure = make_max_entangled(d)
        points = []
        for nf in np.linspace(0.0, 0.95, 20):
            report = visibility_sum(NoisyState(pure, 1.0 - nf), mubs, k)
            points.append(point(float(nf), report.visibility_sum - report.separable_bound))
        result = threshold_scan(points)
        assert abs(result.nf_star - 0.75) < 0.01
        assert result.censored == "none" and not result.ambiguous

    def test_ideal_witness_threshold(self):
        d = 10
        points = [
            point(float(nf), witness_exact(NoisyState(make_max_entangled(d), 1 - nf), d, 1))
            for nf in np.linspace(0.0, 1.0, 23)
        ]
        result = threshold_scan(points)
        assert abs(result.nf_star - d / (d + 1)) < 0.01

    def test_uncertainty_band_brackets_threshold(self):
        points = [point(0.0, 1.0, 0.1), point(1.0, -1.0, 0.1)]
        result = threshold_scan(points)
        assert result.lower < result.nf_star < result.upper

    def test_censored_sweeps(self):
        assert threshold_scan([point(0.1, 1.0), point(0.2, 0.5)]).censored == "above"
        assert threshold_scan([point(0.1, -1.0), point(0.2, -0.5)]).censored == "below"

    def test_ambiguous_sweep_reports_all_crossings(self):
        pts = [point(0.0, 1.0), point(0.3, -0.5), point(0.6, 0.5), point(0.9, -1.0)]
        result = threshold_scan(pts)
        assert result.ambiguous and len(result.crossings) == 3
        assert abs(result.nf_star - 0.2) < 1e-12  # first certified -> uncertified

    def test_unsorted_points_rejected(self):
        with pytest.raises(ValueError, match="sorted"):
            threshold_scan([point(0.5, 1.0), point(0.1, -1.0)])


class TestFiberDistance:
    def test_reference_points(self):
        assert fiber_distance(82.0) == 410.0
        assert fiber_distance(102.0) == 510.0
        assert fiber_distance(0.0) == 0.0

    def test_input_validation(self):
        with pytest.raises(ValueError):
            fiber_distance(-1.0)
        with pytest.raises(ValueError):
            fiber_distance(10.0, 0.0)
