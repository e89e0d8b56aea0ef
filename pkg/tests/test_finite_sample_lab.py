"""
Tests for design rescaling, simulated power and the synthetic case designs
"""

import math

import numpy as np
import pytest

import finite_sample_lab
from effect_size import exact_f2
from errors import DomainError, EstimationError, InfeasibleError, SingularityError
from finite_sample_lab import (
    CASE_MODELS,
    EDUCATION_SHARES,
    EmpiricalDesign,
    SEPARATION_LIMIT,
    _fit_failed,
    domain_limit,
    rescale_beta_to_f2,
    simulate_power,
    synthetic_case_design,
    verify_design,
)
from glm_core import Family, FamilyLink, FitResult, Link
from pss_calculator import power


def _two_point(fl, lam, beta):
    return EmpiricalDesign(
        x=np.array([[0.0], [1.0]]), z=np.ones((2, 1)), beta=np.array([beta]), lam=np.array([lam]), fl=fl,
    )


class TestEmpiricalDesign:
    def test_shapes(self, two_point_design):
        assert two_point_design.nrows == 2
        assert two_point_design.n_predictors == 1
        np.testing.assert_array_equal(two_point_design.design_matrix(), [[1.0, 0.0], [1.0, 1.0]])
        np.testing.assert_array_equal(two_point_design.eta(), [0.0, 1.0])

    def test_rejects_mismatched_coefficients(self, logit):
        with pytest.raises(DomainError):
            EmpiricalDesign(x=np.zeros((2, 1)), z=np.ones((2, 1)), beta=np.ones(2), lam=np.zeros(1), fl=logit)

    def test_rejects_out_of_domain_rows(self):
        identity = FamilyLink(Family.BERNOULLI, Link.IDENTITY)
        with pytest.raises(DomainError):
            _two_point(identity, 0.5, 0.6)


class TestRescale:
    def test_target_equal_to_current(self, two_point_design):
        current = exact_f2(two_point_design.draws())
        assert rescale_beta_to_f2(two_point_design, current) == 1.0

    def test_normal_scales_with_square_root(self):
        design = _two_point(FamilyLink(Family.NORMAL, Link.IDENTITY, 1.0), 0.0, 1.0)
        assert exact_f2(design.draws()) == pytest.approx(0.25)
        assert rescale_beta_to_f2(design, 0.01) == pytest.approx(0.2, abs=1e-10)
        assert rescale_beta_to_f2(design, 1.0) == pytest.approx(2.0, abs=1e-10)

    def test_logistic_two_point(self, two_point_design):
        delta = rescale_beta_to_f2(two_point_design, 0.02)
        assert delta == pytest.approx(0.5777, abs=1e-3)
        assert exact_f2(two_point_design.scaled(delta).draws()) == pytest.approx(0.02, abs=1e-8)

    def test_zero_effect_is_infeasible(self, logit):
        with pytest.raises(InfeasibleError):
            rescale_beta_to_f2(_two_point(logit, 0.0, 0.0), 0.02)

    def test_target_must_be_positive(self, two_point_design):
        with pytest.raises(DomainError):
            rescale_beta_to_f2(two_point_design, 0.0)

    def test_domain_ends_before_target(self):
        design = _two_point(FamilyLink(Family.BERNOULLI, Link.IDENTITY), 0.5, 0.1)
        assert domain_limit(design) == pytest.approx(5.0)
        with pytest.raises(DomainError) as excinfo:
            rescale_beta_to_f2(design, 5.0)
        assert excinfo.value.details["limit"] == pytest.approx(5.0)

    def test_reachable_target_below_logit_peak(self, two_point_design):
        delta = rescale_beta_to_f2(two_point_design, 0.16)
        assert 2.0 < delta < 2.5
        assert exact_f2(two_point_design.scaled(delta).draws()) == pytest.approx(0.16, abs=1e-8)

    def test_target_above_the_logit_peak(self, two_point_design):
        with pytest.raises(InfeasibleError) as excinfo:
            rescale_beta_to_f2(two_point_design, 0.5)
        assert excinfo.value.details["max_f2"] == pytest.approx(0.172, abs=2e-3)
        assert 2.4 < excinfo.value.details["delta"] < 3.2
        peak = exact_f2(two_point_design.scaled(excinfo.value.details["delta"]).draws())
        assert peak == pytest.approx(excinfo.value.details["max_f2"], rel=1e-10)


class TestFitFailed:
    @staticmethod
    def _fit(coefficients, fl, converged=True):
        return FitResult(
            coefficients=np.asarray(coefficients, dtype=float),
            information=np.eye(len(coefficients)),
            converged=converged,
            iterations=5,
            loglik_trace=(0.0,),
            fl=fl,
            nobs=100,
        )

    def test_non_converged(self, logit):
        assert _fit_failed(self._fit([0.1, 0.2], logit, converged=False), logit)

    def test_converged_separated_logistic(self, logit):
        assert _fit_failed(self._fit([0.1, -SEPARATION_LIMIT - 1.0], logit), logit)
        assert not _fit_failed(self._fit([0.1, SEPARATION_LIMIT - 1.0], logit), logit)

    def test_large_coefficients_outside_bernoulli(self):
        fl = FamilyLink(Family.POISSON, Link.LOG)
        assert not _fit_failed(self._fit([0.1, 20.0], fl), fl)


class TestSimulatePower:
    @pytest.fixture
    def rescaled(self, two_point_design):
        return two_point_design.scaled(rescale_beta_to_f2(two_point_design, 0.02))

    def test_increases_with_n(self, rescaled):
        small = simulate_power(rescaled, 200, reps=400, seed=1)
        large = simulate_power(rescaled, 800, reps=400, seed=1)
        assert small.rejection_rate < large.rejection_rate
        assert large.rejection_rate > 0.95

    def test_deterministic(self, rescaled):
        first = simulate_power(rescaled, 100, reps=100, seed=4)
        assert first == simulate_power(rescaled, 100, reps=100, seed=4)
        assert first == simulate_power(rescaled, 100, reps=100, seed=4, workers=2)
        assert first.fitted + first.fit_failures == first.reps
        assert first.mc_stderr == pytest.approx(math.sqrt(first.rejection_rate * (1 - first.rejection_rate) / first.fitted))

    def test_row_order_does_not_matter(self, rescaled):
        swapped = EmpiricalDesign(
            x=rescaled.x[::-1], z=rescaled.z[::-1], beta=rescaled.beta, lam=rescaled.lam, fl=rescaled.fl,
        )
        rate = simulate_power(rescaled, 393, reps=1000, seed=6).rejection_rate
        other = simulate_power(swapped, 393, reps=1000, seed=6).rejection_rate
        assert rate == pytest.approx(other, abs=0.06)

    def test_all_fits_failing(self, rescaled, monkeypatch):
        def singular(*args, **kwargs):
            raise SingularityError("design matrix does not have full column rank")

        monkeypatch.setattr(finite_sample_lab, "irls_fit", singular)
        with pytest.raises(EstimationError):
            simulate_power(rescaled, 50, reps=5)

    def test_sample_size_too_small(self, rescaled):
        with pytest.raises(DomainError):
            simulate_power(rescaled, 5, reps=10)

    @pytest.mark.slow
    def test_matches_asymptotic_power(self, rescaled):
        result = simulate_power(rescaled, 393, reps=2000, seed=0, workers=4)
        assert result.rejection_rate == pytest.approx(0.80, abs=0.03)

    @pytest.mark.slow
    def test_size_under_null(self, logit):
        null = _two_point(logit, 0.3, 0.0)
        result = simulate_power(null, 500, reps=2000, seed=2, workers=4)
        assert result.rejection_rate == pytest.approx(0.05, abs=3 * math.sqrt(0.05 * 0.95 / 2000))


class TestSyntheticCaseDesign:
    @pytest.mark.parametrize("model", list(CASE_MODELS))
    def test_marginals_and_mean(self, model):
        design = synthetic_case_design(model, rows=2000, seed=3)
        case = CASE_MODELS[model]
        np.testing.assert_allclose(design.x.mean(axis=0), EDUCATION_SHARES[1:], atol=1e-12)
        assert design.z.shape == (2000, 4)
        assert design.fl == case.fl
        mean = float(np.mean(design.fl.linkinv(design.eta())))
        assert mean == pytest.approx(case.mean_y, abs=1e-9)
        np.testing.assert_array_equal(design.lam[1:], 0.0)

    def test_reproducible(self):
        first = synthetic_case_design("poisson-log", seed=9)
        second = synthetic_case_design("poisson-log", seed=9)
        np.testing.assert_array_equal(first.x, second.x)
        np.testing.assert_array_equal(first.z, second.z)

    def test_unknown_model(self):
        with pytest.raises(DomainError):
            synthetic_case_design("probit")


class TestVerifyDesign:
    def test_small_run(self, two_point_design):
        result = verify_design(two_point_design, target_f2=0.02, reps=50, seed=1)
        assert result.delta == pytest.approx(0.5777, abs=1e-3)
        assert result.f2 == pytest.approx(0.02, abs=1e-8)
        assert result.n == 393
        assert result.power_f2 == pytest.approx(power(393, result.f2))
        assert result.power_f2_phi > result.power_f2
        row = result.as_row()
        assert row["reps"] == 50
        assert set(row) >= {"rejection_rate", "mc_stderr", "fit_failures"}

    @pytest.mark.slow
    @pytest.mark.parametrize("model", list(CASE_MODELS))
    def test_case_models_reach_asymptotic_power(self, model):
        design = synthetic_case_design(model, rows=2000, seed=0)
        result = verify_design(design, target_f2=0.02, reps=2000, seed=0, workers=4)
        assert result.reps == 2000
        assert result.rejection_rate == pytest.approx(result.power_f2, abs=0.03)
