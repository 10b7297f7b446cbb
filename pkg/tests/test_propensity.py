import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mnarec.core import MAE, ObservationSample, PropensityMatrix, RatingMatrix
from mnarec.estimators import ips_estimate, naive_estimate
from mnarec.propensity import (
    DEFAULT_FLOOR,
    LogisticPropensityModel,
    NaiveBayesPropensityModel,
    PropensityClampWarning,
    fit_logistic,
    fit_naive_bayes,
    logistic_objective,
    lr_propensity,
    lr_propensity_matrix,
    nb_propensity,
    nb_propensity_for_ratings,
    nb_propensity_matrix,
    pair_features,
    scale_for_cv,
    uniform_propensities,
)
from mnarec.synthdata import exact_naive_bayes

from . import oracles


def sample(shape, cells, ratings):
    users, items = np.divmod(np.asarray(cells), shape[1])
    return ObservationSample(shape, users, items, ratings)


class TestUniform:
    def test_ratio(self):
        obs = sample((10, 10), range(5), [3] * 5)
        np.testing.assert_array_equal(uniform_propensities(obs).values, 0.05)

    def test_full(self):
        obs = sample((2, 2), range(4), [3] * 4)
        np.testing.assert_array_equal(uniform_propensities(obs).values, 1.0)

    def test_empty_is_floored(self):
        obs = ObservationSample((2, 2), [], [], [])
        np.testing.assert_array_equal(uniform_propensities(obs).values, DEFAULT_FLOOR)

    @given(st.integers(0, 2**31 - 1))
    def test_ips_equals_naive(self, seed):
        rng = np.random.default_rng(seed)
        y = RatingMatrix.truth(rng.integers(1, 6, size=(5, 7)))
        mask = rng.random((5, 7)) < 0.4
        mask[0, 0] = True
        obs = ObservationSample.from_mask(y, mask)
        pred = rng.normal(3, 1, size=(5, 7))
        assert ips_estimate(obs, pred, uniform_propensities(obs), MAE).value == pytest.approx(
            naive_estimate(obs, pred, MAE).value, rel=1e-12)


class TestScaleForCV:
    def test_fold_factors(self):
        props = PropensityMatrix([[0.2]])
        assert scale_for_cv(props, 3 / 4).values[0, 0] == pytest.approx(0.15, rel=1e-15)
        assert scale_for_cv(props, 1 / 4).values[0, 0] == pytest.approx(0.05, rel=1e-15)
        assert scale_for_cv(props, 1.0).values[0, 0] == 0.2

    @pytest.mark.parametrize("factor", [0.0, 1.5, -0.2])
    def test_invalid_factor(self, factor):
        with pytest.raises(ValueError):
            scale_for_cv(PropensityMatrix([[0.2]]), factor)

    def test_floor(self):
        assert scale_for_cv(PropensityMatrix([[1e-6]]), 0.25).values[0, 0] == DEFAULT_FLOOR


class TestNaiveBayes:
    def test_marginal_counting(self):
        obs = sample((4, 5), [0], [5])
        model = fit_naive_bayes(obs, [5, 5, 1, 1], laplace_alpha=0.0)
        assert model.marginal_rating_dist[4] == 0.5

    def test_empty_mcar_with_smoothing_is_uniform(self):
        model = fit_naive_bayes(sample((4, 5), [0, 1], [5, 3]), [], laplace_alpha=1.0)
        np.testing.assert_allclose(model.marginal_rating_dist, 0.2)

    def test_empty_mcar_without_smoothing(self):
        with pytest.raises(ValueError):
            fit_naive_bayes(sample((4, 5), [0], [5]), [], laplace_alpha=0.0)

    def test_empty_mnar(self):
        with pytest.raises(ValueError):
            fit_naive_bayes(ObservationSample((2, 2), [], [], []), [1, 2])

    def test_direct_formula(self):
        cond = np.array([0.15, 0.15, 0.15, 0.15, 0.4])
        marg = np.array([0.3, 0.2, 0.2, 0.2, 0.1])
        model = NaiveBayesPropensityModel((1, 2, 3, 4, 5), cond, 0.05, marg)
        assert nb_propensity(model, 5) == pytest.approx(0.2, rel=1e-15)

    def test_mcar_case(self):
        dist = np.array([0.1, 0.2, 0.3, 0.25, 0.15])
        model = NaiveBayesPropensityModel((1, 2, 3, 4, 5), dist, 0.07, dist)
        for r in range(1, 6):
            assert nb_propensity(model, r) == pytest.approx(0.07, rel=1e-15)

    def test_clamped_with_warning(self):
        model = NaiveBayesPropensityModel((1, 2), [0.9, 0.1], 0.5, [0.1, 0.9])
        with pytest.warns(PropensityClampWarning):
            assert nb_propensity(model, 1) == 1.0

    def test_zero_marginal_clamps(self):
        model = NaiveBayesPropensityModel((1, 2), [0.5, 0.5], 0.5, [0.0, 1.0])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", PropensityClampWarning)
            assert nb_propensity(model, 1) == 1.0

    def test_off_scale_rating(self):
        model = NaiveBayesPropensityModel((1, 2), [0.5, 0.5], 0.5, [0.5, 0.5])
        with pytest.raises(ValueError):
            nb_propensity(model, 3)

    def test_invalid_distribution(self):
        with pytest.raises(ValueError):
            NaiveBayesPropensityModel((1, 2), [0.5, 0.6], 0.5, [0.5, 0.5])

    def test_matrix_imputes_unobserved(self):
        obs = sample((2, 3), [0, 4], [5, 1])
        model = fit_naive_bayes(obs, [1, 2, 3, 4, 5, 5], 1.0)
        props = nb_propensity_matrix(model, obs)
        assert props.values[0, 0] == nb_propensity(model, 5)
        assert props.values[1, 1] == nb_propensity(model, 1)
        assert props.values[0, 1] == pytest.approx(model.reveal_rate)
        np.testing.assert_array_equal(props.imputed, ~obs.mask())

    @given(st.lists(st.floats(0.01, 1.0), min_size=5, max_size=5), st.integers(0, 2**31 - 1))
    def test_exact_distributions_reproduce_mechanism(self, q, seed):
        rng = np.random.default_rng(seed)
        y = rng.integers(1, 6, size=(6, 9))
        y.flat[:5] = np.arange(1, 6)  # every rating present
        props = np.asarray(q)[y - 1]
        model = exact_naive_bayes(y, props)
        table = model.propensity_table()
        np.testing.assert_allclose(table, q, rtol=1e-12, atol=0)

    def test_monte_carlo_consistency(self):
        rng = np.random.default_rng(7)
        # rates chosen so every rating value gets thousands of reveals
        q = np.array([0.05, 0.08, 0.12, 0.2, 0.3])
        y = rng.integers(1, 6, size=(500, 700))
        mask = rng.random(y.shape) < q[y - 1]
        obs = ObservationSample.from_mask(RatingMatrix(y.astype(float)), mask)
        assert len(obs) > 50_000
        mcar = y.ravel()[rng.choice(y.size, 50_000, replace=False)]
        model = fit_naive_bayes(obs, mcar, 1.0)
        np.testing.assert_allclose(model.propensity_table(), q, rtol=0.05)

    def test_vectorized_lookup(self):
        model = NaiveBayesPropensityModel((1, 2, 3), [0.2, 0.3, 0.5], 0.1, [0.5, 0.3, 0.2])
        got = nb_propensity_for_ratings(model, [3, 1, 2])
        expected = [nb_propensity(model, r, warn=False) for r in (3, 1, 2)]
        np.testing.assert_array_equal(got, expected)


class TestLogistic:
    def test_zero_parameters(self):
        model = LogisticPropensityModel(np.zeros(2), np.zeros(3), np.zeros(4), 1.0)
        assert lr_propensity(model, [1.0, -2.0], 0, 0) == 0.5

    def test_log_three(self):
        model = LogisticPropensityModel(np.array([1.0]), np.array([0.5]), np.array([math.log(3) - 1.5]), 1.0)
        assert lr_propensity(model, [1.0], 0, 0) == pytest.approx(0.75, rel=1e-14)

    def test_dimension_mismatch(self):
        model = LogisticPropensityModel(np.zeros(2), np.zeros(1), np.zeros(1), 1.0)
        with pytest.raises(ValueError):
            lr_propensity(model, [1.0], 0, 0)

    @given(st.floats(0.01, 5), st.floats(-3, 3), st.floats(0.01, 2))
    def test_monotone_in_positive_weight_feature(self, w, x, bump):
        model = LogisticPropensityModel(np.array([w]), np.zeros(1), np.zeros(1), 1.0)
        assert lr_propensity(model, [x + bump], 0, 0) > lr_propensity(model, [x], 0, 0)

    def test_all_revealed(self, rng):
        feats = rng.normal(size=(4, 5, 2))
        model = fit_logistic(np.ones((4, 5)), feats, regularization=1.0)
        assert lr_propensity_matrix(model, feats).values.min() > 0.5

    def test_constant_feature_recovers_rate(self):
        reveal = np.zeros((8, 8))
        for u in range(8):
            reveal[u, [(u + 2 * k) % 8 for k in range(2)]] = 1.0
        model = fit_logistic(reveal, np.ones((8, 8)), regularization=1e6, max_iter=2000, tol=1e-9)
        probs = lr_propensity_matrix(model, np.ones((8, 8))).values
        assert abs(model.weights[0]) < 1e-5
        np.testing.assert_allclose(probs, 0.25, atol=1e-4)

    @pytest.mark.parametrize("penalize_all", [False, True])
    def test_gradient_matches_finite_differences(self, rng, penalize_all):
        reveal = (rng.random((3, 4)) < 0.4).astype(float)
        feats = rng.normal(size=(3, 4, 2))
        theta = rng.normal(size=2 + 4 + 3)
        _, g = logistic_objective(theta, reveal, feats, 0.7, penalize_all)
        fd = oracles.central_difference(
            lambda t: logistic_objective(np.array(t), reveal, feats, 0.7, penalize_all)[0], theta.tolist())
        np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-7)

    def test_fit_improves_on_zero(self, rng):
        reveal = (rng.random((6, 7)) < 0.3).astype(float)
        feats = pair_features(rng.normal(size=(6, 2)), rng.normal(size=(7, 3)))
        model = fit_logistic(reveal, feats, 0.5)
        theta = np.concatenate([model.weights, model.item_offsets, model.user_offsets])
        zero = np.zeros_like(theta)
        assert logistic_objective(theta, reveal, feats, 0.5)[0] <= logistic_objective(zero, reveal, feats, 0.5)[0]

    def test_rejects_non_finite_features(self):
        feats = np.ones((2, 2, 1))
        feats[0, 0, 0] = np.inf
        with pytest.raises(ValueError):
            fit_logistic(np.ones((2, 2)), feats)

    def test_pair_features_shape(self):
        f = pair_features(np.arange(6.0).reshape(3, 2), np.arange(8.0).reshape(4, 2))
        assert f.shape == (3, 4, 4)
        assert f[2, 3, 1] == 4.0 * 7.0


@given(st.integers(0, 2**31 - 1))
def test_all_emitted_propensities_in_range(seed):
    rng = np.random.default_rng(seed)
    y = RatingMatrix.truth(rng.integers(1, 6, size=(4, 6)))
    mask = rng.random((4, 6)) < 0.5
    mask[0, 0] = True
    obs = ObservationSample.from_mask(y, mask)
    model = fit_naive_bayes(obs, rng.integers(1, 6, size=rng.integers(0, 10)), 1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", PropensityClampWarning)
        values = nb_propensity_matrix(model, obs).values
    assert values.min() >= DEFAULT_FLOOR and values.max() <= 1.0
