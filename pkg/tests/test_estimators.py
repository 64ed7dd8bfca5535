import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import FunctionTransformer

from dfgof.estimators import ChiSquareRotation, DistributionFreeTest, ParametricChiSquareRotation
from dfgof.exceptions import EmptyPooledCell
from dfgof.parametric import mle_fit, power_law_family
from dfgof.transforms import components_y, transform_simple

P3 = np.array([0.5, 0.25, 0.25])


def samples(p, n, k, seed=0):
    rng = np.random.default_rng(seed)
    return rng.multinomial(n, p, size=k)


class TestChiSquareRotation:
    def test_matches_functional_api(self):
        X = samples(P3, 50, 5)
        Z = ChiSquareRotation(P3).fit_transform(X)
        for row, z in zip(X, Z):
            np.testing.assert_allclose(z, transform_simple(components_y(row, P3), P3).values, atol=1e-14)

    def test_worked_example(self):
        z = ChiSquareRotation(P3).fit_transform([[12, 4, 4]])
        np.testing.assert_allclose(z[0], np.array([-2, 1, 1]) * np.sqrt(2 / 15), atol=1e-14)

    def test_e1_first_column_zero(self):
        Z = ChiSquareRotation(P3, anchor="e1").fit_transform(samples(P3, 40, 10))
        assert np.all(Z[:, 0] == 0.0)

    def test_inverse(self):
        est = ChiSquareRotation(P3).fit(samples(P3, 30, 4))
        X = samples(P3, 30, 4, seed=1)
        np.testing.assert_allclose(est.inverse_transform(est.transform(X)), est.components(X), atol=1e-12)

    def test_pooled_model(self):
        X = np.array([[5, 3, 2], [3, 5, 2]])
        est = ChiSquareRotation().fit(X)
        np.testing.assert_allclose(est.model_.probs, [0.4, 0.4, 0.2])

    def test_pooled_empty_cell(self):
        with pytest.raises(EmptyPooledCell):
            ChiSquareRotation().fit([[1, 0, 2], [3, 0, 1]])

    def test_validation(self):
        with pytest.raises(ValueError):
            ChiSquareRotation(P3).fit([[1.5, 2, 3]])
        with pytest.raises(ValueError):
            ChiSquareRotation(P3).fit([[1, 2, 3, 4]])
        with pytest.raises(ValueError):
            ChiSquareRotation(P3, anchor="plateau").fit([[1, 2, 3]])
        with pytest.raises(NotFittedError):
            ChiSquareRotation(P3).transform([[1, 2, 3]])

    def test_clone_and_pipeline(self):
        est = clone(ChiSquareRotation(P3, anchor="e1"))
        params = est.get_params()
        assert params["anchor"] == "e1"
        np.testing.assert_array_equal(params["probs"], P3)
        pipe = make_pipeline(ChiSquareRotation(P3), FunctionTransformer(lambda z: np.cumsum(z, axis=1)))
        out = pipe.fit_transform(samples(P3, 30, 3))
        np.testing.assert_allclose(out[:, -1], 0.0, atol=1e-12)


class TestParametricRotation:
    def test_e1_e2(self):
        fam = power_law_family(6)
        X = samples(fam.probs(1.0), 300, 5, seed=3)
        est = ParametricChiSquareRotation(anchor="e1_e2").fit(X)
        Z = est.transform(X)
        assert np.all(np.abs(Z[:, :2]) <= 1e-6)
        thetas = est.estimate(X)
        assert thetas[0] == pytest.approx(mle_fit(X[0], fam).theta, abs=1e-12)

    def test_plateau_anchor_orthogonality(self):
        fam = power_law_family(5)
        X = samples(fam.probs(0.5), 200, 3, seed=4)
        Z = ParametricChiSquareRotation().fit(X).transform(X)
        np.testing.assert_allclose(Z.sum(axis=1), 0.0, atol=1e-10)


class TestDistributionFreeTest:
    def test_perfect_fit(self):
        test = DistributionFreeTest(probs=P3, n_reps=1000).fit([[10, 5, 5]])
        assert test.statistics([[10, 5, 5]])[0] == pytest.approx(0.0, abs=1e-14)
        assert test.p_values([[10, 5, 5]])[0] == 1.0

    def test_far_from_null(self):
        test = DistributionFreeTest(probs=P3, n_reps=2000).fit([[10, 5, 5]])
        assert test.p_values([[0, 0, 200]])[0] == pytest.approx(1 / 2001)

    def test_raw_statistic(self):
        test = DistributionFreeTest("ks_y", probs=P3, n_reps=1000).fit([[10, 5, 5]])
        assert test.table_.params["model_hash"] == test.rotation_.model_.hash
        assert 0 < test.p_values([[12, 4, 4]])[0] <= 1

    def test_table_reproducible(self):
        a = DistributionFreeTest(probs=P3, n_reps=1000, random_state=5).fit([[1, 1, 1]])
        b = DistributionFreeTest(probs=P3, n_reps=1000, random_state=5).fit([[1, 1, 1]])
        np.testing.assert_array_equal(a.table_.values, b.table_.values)
