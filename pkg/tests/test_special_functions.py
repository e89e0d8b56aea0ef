"""
Tests for the distribution functions and seeded samplers
"""

import math

import numpy as np
import pytest
from scipy import stats

from errors import DomainError
from glm_core import Family, FamilyLink, Link
from special_functions import (
    RngStream,
    beta_quantile,
    central_chi2_cdf,
    noncentral_chi2_cdf,
    noncentral_chi2_quantile,
    noncentral_chi2_sf,
    normal_cdf,
    normal_quantile,
    sample_correlated_betas,
    sample_outcome,
)


class TestNormal:
    def test_cdf_values(self):
        assert normal_cdf(0.0) == 0.5
        assert normal_cdf(1.959964) == pytest.approx(0.975, abs=1e-6)
        assert normal_cdf(-40.0) == pytest.approx(0.0, abs=1e-300)

    def test_cdf_rejects_non_finite(self):
        with pytest.raises(DomainError):
            normal_cdf(float("nan"))
        with pytest.raises(DomainError):
            normal_cdf(float("inf"))

    def test_quantile_values(self):
        assert normal_quantile(0.5) == 0.0
        assert normal_quantile(0.975) == pytest.approx(1.959964, abs=1e-6)

    def test_quantile_round_trip(self):
        assert normal_cdf(normal_quantile(0.123)) == pytest.approx(0.123, abs=1e-10)

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5])
    def test_quantile_domain(self, p):
        with pytest.raises(DomainError):
            normal_quantile(p)


class TestChiSquare:
    def test_zero_support_boundary(self):
        assert noncentral_chi2_cdf(0.0, 1, 5.0) == 0.0
        assert noncentral_chi2_cdf(-1.0, 2, 0.0) == 0.0

    def test_central_value(self):
        assert noncentral_chi2_cdf(3.8415, 1, 0.0) == pytest.approx(0.95, abs=1e-4)

    def test_noncentral_value(self):
        """(Z + sqrt(ncp))^2 falls below the 5% critical value 20% of the time at ncp 7.849"""
        assert noncentral_chi2_cdf(3.8415, 1, 7.849) == pytest.approx(0.20, abs=5e-4)

    def test_reduces_to_central(self):
        for p in range(1, 11):
            for x in np.linspace(0.1, 30.0, 25):
                assert noncentral_chi2_cdf(x, p, 0.0) == pytest.approx(stats.chi2.cdf(x, p), abs=1e-10)
                assert central_chi2_cdf(x, p) == pytest.approx(stats.chi2.cdf(x, p), abs=1e-10)

    def test_monotone_in_x_and_ncp(self):
        xs = np.linspace(0.0, 40.0, 81)
        values = noncentral_chi2_cdf(xs, 3, 4.0)
        assert np.all(np.diff(values) >= 0)
        by_ncp = [noncentral_chi2_cdf(6.0, 2, ncp) for ncp in (0.0, 0.5, 2.0, 8.0, 20.0)]
        assert all(a >= b for a, b in zip(by_ncp, by_ncp[1:]))

    def test_upper_tail_complements_cdf(self):
        assert noncentral_chi2_sf(5.0, 2, 3.0) == pytest.approx(1.0 - noncentral_chi2_cdf(5.0, 2, 3.0), abs=1e-14)

    def test_rejects_bad_degrees_of_freedom(self):
        with pytest.raises(DomainError):
            noncentral_chi2_cdf(1.0, 0, 0.0)
        with pytest.raises(DomainError):
            noncentral_chi2_cdf(1.0, 1, -0.5)

    def test_quantile_central(self):
        expected = normal_quantile(0.975) ** 2
        assert noncentral_chi2_quantile(0.95, 1, 0.0) == pytest.approx(expected, abs=1e-9)
        assert noncentral_chi2_quantile(0.95, 1, 0.0) == pytest.approx(3.8415, abs=1e-4)

    @pytest.mark.parametrize("q,p,ncp", [(0.8, 3, 2.0), (0.2, 1, 7.849), (0.5, 5, 0.0), (0.99, 2, 30.0)])
    def test_quantile_round_trip(self, q, p, ncp):
        x = noncentral_chi2_quantile(q, p, ncp)
        assert noncentral_chi2_cdf(x, p, ncp) == pytest.approx(q, abs=1e-9)

    def test_quantile_monotone(self):
        assert noncentral_chi2_quantile(0.9, 1, 0.0) > noncentral_chi2_quantile(0.5, 1, 0.0)

    @pytest.mark.parametrize("q", [0.0, 1.0])
    def test_quantile_domain(self, q):
        with pytest.raises(DomainError):
            noncentral_chi2_quantile(q, 1, 0.0)


class TestBetaQuantile:
    def test_closed_forms(self):
        assert beta_quantile(0.5, 1.0, 1.0) == pytest.approx(0.5, abs=1e-12)
        assert beta_quantile(0.25, 2.0, 1.0) == pytest.approx(0.5, abs=1e-10)
        arcsine = math.sin(0.975 * math.pi / 2.0) ** 2
        assert beta_quantile(0.975, 0.5, 0.5) == pytest.approx(arcsine, abs=1e-10)
        assert beta_quantile(0.975, 0.5, 0.5) == pytest.approx(0.99846, abs=1e-5)

    def test_nondecreasing(self):
        values = beta_quantile(np.linspace(0.0, 1.0, 101), 1.5, 0.5)
        assert np.all(np.diff(values) >= 0)

    def test_rejects_nonpositive_shape(self):
        with pytest.raises(DomainError):
            beta_quantile(0.5, 0.0, 1.0)


class TestRngStream:
    def test_replays_identically(self):
        first = RngStream(42, 7).generator.standard_normal(100)
        second = RngStream(42, 7).generator.standard_normal(100)
        assert first.tobytes() == second.tobytes()

    def test_streams_differ(self):
        first = RngStream(42, 7).generator.standard_normal(100)
        other = RngStream(42, 8).generator.standard_normal(100)
        assert not np.array_equal(first, other)

    def test_child_keeps_seed(self):
        child = RngStream(5, 0).child(3)
        assert child.seed == 5 and child.stream_id == 3

    def test_rejects_negative_seed(self):
        with pytest.raises(DomainError):
            RngStream(-1)


class TestCorrelatedBetas:
    def test_independent_pairs(self):
        pairs = sample_correlated_betas(0.5, 1.5, 1.0, 1.0, 0.0, 50000, RngStream(1))
        assert abs(np.corrcoef(pairs[:, 0], pairs[:, 1])[0, 1]) < 0.015

    def test_uniform_marginals(self):
        pairs = sample_correlated_betas(1.0, 1.0, 1.0, 1.0, 0.25, 50000, RngStream(2))
        assert stats.kstest(pairs[:, 0], "uniform").statistic < 0.01
        assert stats.kstest(pairs[:, 1], "uniform").statistic < 0.01

    def test_copula_correlation(self):
        pairs = sample_correlated_betas(1.0, 1.0, 1.0, 1.0, 0.25, 50000, RngStream(3))
        expected = 6.0 / math.pi * math.asin(0.25 / 2.0)
        assert expected == pytest.approx(0.2394, abs=1e-4)
        assert np.corrcoef(pairs[:, 0], pairs[:, 1])[0, 1] == pytest.approx(expected, abs=0.015)

    def test_rejects_bad_rho(self):
        with pytest.raises(DomainError):
            sample_correlated_betas(1.0, 1.0, 1.0, 1.0, 1.0, 10, RngStream(0))

    def test_reproducible(self):
        first = sample_correlated_betas(1.5, 0.5, 1.0, 1.0, 0.1, 1000, RngStream(9, 4))
        second = sample_correlated_betas(1.5, 0.5, 1.0, 1.0, 0.1, 1000, RngStream(9, 4))
        assert first.tobytes() == second.tobytes()


class TestSampleOutcome:
    def test_bernoulli_boundary(self):
        with pytest.raises(DomainError):
            sample_outcome(FamilyLink(Family.BERNOULLI, Link.LOGIT), 0.0, RngStream(0))

    def test_poisson_moments(self):
        n = 100000
        draws = sample_outcome(FamilyLink(Family.POISSON, Link.LOG), np.full(n, 4.0), RngStream(11))
        assert abs(draws.mean() - 4.0) < 4 * math.sqrt(4.0 / n)
        # fourth central moment of Poisson(4) is 4 * (1 + 3 * 4)
        assert abs(draws.var() - 4.0) < 4 * math.sqrt((52.0 - 16.0) / n)

    def test_gamma_variance(self):
        n = 100000
        draws = sample_outcome(FamilyLink(Family.GAMMA, Link.LOG, 2.0), np.full(n, 4.0), RngStream(12))
        assert abs(draws.mean() - 4.0) < 4 * math.sqrt(8.0 / n)
        # excess kurtosis 6/k gives a fourth central moment of 6 * 8^2
        assert abs(draws.var() - 8.0) < 4 * math.sqrt((384.0 - 64.0) / n)

    def test_inverse_gaussian_variance(self):
        n = 200000
        fl = FamilyLink(Family.INVERSE_GAUSSIAN, Link.LOG, 4.0)
        draws = sample_outcome(fl, np.full(n, 2.0), RngStream(13))
        assert draws.mean() == pytest.approx(2.0, rel=0.01)
        assert draws.var() == pytest.approx(2.0 ** 3 / 4.0, rel=0.05)

    def test_scalar_mean_gives_scalar(self):
        value = sample_outcome(FamilyLink(Family.NORMAL, Link.IDENTITY, 1.0), 3.0, RngStream(14))
        assert isinstance(value, float)
