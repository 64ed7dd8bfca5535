import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from dfgof.exceptions import DegenerateScore, DimensionMismatch, DomainError, InvalidModel
from dfgof.parametric import (
    ParametricFamily,
    family_by_name,
    fisher_information,
    log_likelihood,
    mle_fit,
    normalized_scores,
    power_law_family,
    score,
    tabulated_family,
)
from dfgof.transforms import components_y

# default_rng(2024).multinomial(200, p(theta=1)) on 10 cells
SAMPLE10 = np.array([66, 34, 22, 14, 16, 13, 7, 11, 14, 3])
THETA10 = 0.9485376407224071


class TestFamily:
    def test_uniform_at_zero(self):
        np.testing.assert_allclose(power_law_family(7).probs(0.0), np.full(7, 1 / 7), atol=1e-16)

    def test_zipf_three_cells(self):
        np.testing.assert_allclose(power_law_family(3).probs(1.0), [6 / 11, 3 / 11, 2 / 11], atol=1e-15)

    @given(st.integers(2, 40), st.floats(-5, 5))
    def test_derivative_matches_finite_differences(self, m, theta):
        fam = power_law_family(m)
        h = 1e-5
        fd = (fam.probs(theta + h) - fam.probs(theta - h)) / (2 * h)
        dp = fam.dprobs(theta)
        assert np.max(np.abs(fd - dp)) <= 1e-6 * np.max(np.abs(dp))
        assert abs(dp.sum()) <= 1e-12

    def test_extreme_theta_stays_finite(self):
        p = power_law_family(10).probs(300.0)
        assert np.all(np.isfinite(p)) and p[0] == pytest.approx(1.0)

    def test_unknown_family(self):
        with pytest.raises(ValueError):
            family_by_name("geometric", 5)

    def test_tabulated_family_validates(self):
        def prob_fn(t):
            w = np.array([1.0, np.exp(t)])
            return w / w.sum()

        fam = tabulated_family("logit", 2, prob_fn)
        assert fam.dprobs(0.0) == pytest.approx([-0.25, 0.25], abs=1e-8)
        with pytest.raises(InvalidModel):
            tabulated_family("bad", 2, prob_fn, deriv_fn=lambda t: np.array([0.3, -0.3]))

    def test_domain(self):
        fam = tabulated_family("pos", 2, lambda t: np.array([t, 1 - t]) / 1.0, domain=(0.0, 1.0))
        with pytest.raises(DomainError):
            fam.probs(1.5)

    def test_wrong_shape(self):
        bad = ParametricFamily("bad", 3, lambda t: np.array([0.5, 0.5]))
        with pytest.raises(DimensionMismatch):
            bad.probs(0.0)


class TestFisher:
    def test_two_cells_at_zero(self):
        assert fisher_information(power_law_family(2), 0.0) == pytest.approx(math.log(2) ** 2 / 4, rel=1e-14)

    def test_normalized_scores_two_cells(self):
        qhat = normalized_scores(power_law_family(2), 0.0)
        np.testing.assert_allclose(np.abs(qhat), [1 / np.sqrt(2)] * 2, atol=1e-15)
        assert qhat[0] == pytest.approx(-qhat[1])

    @given(st.integers(2, 30), st.floats(-3, 3))
    def test_normalized_scores_unit_and_orthogonal(self, m, theta):
        fam = power_law_family(m)
        qhat = normalized_scores(fam, theta)
        assert np.linalg.norm(qhat) == pytest.approx(1.0, abs=1e-12)
        assert abs(qhat @ np.sqrt(fam.probs(theta))) <= 1e-12

    def test_degenerate_score(self):
        flat = ParametricFamily("flat", 3, lambda t: np.full(3, 1 / 3), lambda t: np.zeros(3))
        with pytest.raises(DegenerateScore):
            normalized_scores(flat, 0.0)

    def test_score_variance_is_fisher(self):
        # single-observation scores: variance Gamma, mean 0
        fam = power_law_family(6)
        p = fam.probs(0.7)
        per_cell = fam.dprobs(0.7) / p
        rng = np.random.default_rng(99)
        draws = per_cell[rng.choice(6, size=100_000, p=p)]
        gamma = fisher_information(fam, 0.7)
        se = np.sqrt(np.var(draws**2) / draws.size)
        assert abs(np.mean(draws**2) - gamma) <= 3 * se
        assert abs(np.mean(draws)) <= 3 * np.sqrt(gamma / draws.size)

    def test_score_projection_identity(self):
        # <Y, qhat> = score / sqrt(n Gamma)
        fam = power_law_family(10)
        y = components_y(SAMPLE10, fam.probs(0.5)).values
        lhs = y @ normalized_scores(fam, 0.5)
        rhs = score(fam, SAMPLE10, 0.5) / math.sqrt(SAMPLE10.sum() * fisher_information(fam, 0.5))
        assert lhs == pytest.approx(rhs, abs=1e-12)


class TestMle:
    def test_regression_sample(self):
        fam = power_law_family(10)
        fit = mle_fit(SAMPLE10, fam)
        oracle = brentq(lambda t: score(fam, SAMPLE10, t), -5, 5, xtol=1e-15)
        assert fit.theta == pytest.approx(THETA10, abs=1e-12)
        assert fit.theta == pytest.approx(oracle, abs=1e-10)
        assert abs(fit.score_residual) <= 1e-10
        assert fit.converged

    def test_five_cells(self):
        fit = mle_fit([40, 25, 15, 12, 8], power_law_family(5))
        assert fit.theta == pytest.approx(0.920386233983134, abs=1e-12)

    def test_exact_recovery(self):
        # 60 * (1, 1/2, 1/3, 1/4, 1/5) is proportional to p(1)
        fit = mle_fit([60, 30, 20, 15, 12], power_law_family(5))
        assert fit.theta == pytest.approx(1.0, abs=1e-8)

    def test_uniform_counts(self):
        assert mle_fit(np.full(8, 25), power_law_family(8)).theta == pytest.approx(0.0, abs=1e-8)

    def test_all_mass_in_first_cell(self):
        with pytest.raises(DomainError):
            mle_fit([10, 0, 0, 0], power_law_family(4))

    def test_maximizes_likelihood(self):
        fam = power_law_family(10)
        ll = log_likelihood(fam, SAMPLE10, THETA10)
        for d in (-1e-3, 1e-3):
            assert log_likelihood(fam, SAMPLE10, THETA10 + d) < ll

    def test_bad_start_still_converges(self):
        fit = mle_fit(SAMPLE10, power_law_family(10), init=15.0)
        assert fit.theta == pytest.approx(THETA10, abs=1e-9)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            mle_fit([1, 2, 3], power_law_family(4))

    def test_result_dict(self):
        d = mle_fit(SAMPLE10, power_law_family(10)).as_dict()
        assert {"theta_hat", "score_residual", "iterations", "converged"} <= set(d)

    @settings(max_examples=50)
    @given(st.integers(3, 20), st.integers(0, 10_000))
    def test_scale_invariance(self, m, seed):
        rng = np.random.default_rng(seed)
        counts = rng.integers(1, 50, size=m)
        fam = power_law_family(m)
        a = mle_fit(counts, fam).theta
        b = mle_fit(3 * counts, fam).theta
        assert a == pytest.approx(b, abs=1e-8)
        assert abs(score(fam, counts, a)) <= 1e-10
