import numpy as np
import pytest

from crossworld.learners import (BINARY, REGRESSION, ConstantModel, EmptyTrainingSet,
                                 LearnerConfig, make_learner, simplex_least_squares)


def _linear_task(rng, n):
    X = rng.normal(size=(n, 3))
    y = X @ np.array([1.0, -2.0, 0.5]) + 0.3 + 0.5 * rng.normal(size=n)
    return X, y


def _r2(y, f):
    return 1 - np.mean((y - f) ** 2) / np.var(y)


class TestLearners:
    def test_ridge_linear_truth_r2(self, rng):
        X, y = _linear_task(rng, 2000)
        Xt, yt = _linear_task(rng, 2000)
        fit = make_learner("ridge", REGRESSION).fit(X, y)
        assert _r2(yt, fit.predict(Xt)) > 0.9

    @pytest.mark.parametrize("name", ["ridge", "gbt", "knn", "stack"])
    def test_binary_predictions_in_unit_interval(self, name, rng):
        X = rng.normal(size=(400, 2))
        y = (rng.random(400) < 1 / (1 + np.exp(-2 * X[:, 0]))).astype(float)
        p = make_learner(name, BINARY, seed=3).fit(X, y).predict(rng.normal(size=(300, 2)) * 3)
        assert np.all((p >= 0) & (p <= 1))

    @pytest.mark.parametrize("name", ["ridge", "gbt", "knn", "stack"])
    def test_deterministic(self, name, rng):
        X, y = _linear_task(rng, 300)
        a = make_learner(name, REGRESSION, seed=7).fit(X, y).predict(X)
        b = make_learner(name, REGRESSION, seed=7).fit(X, y).predict(X)
        np.testing.assert_array_equal(a, b)

    def test_constant_labels(self):
        fit = make_learner("stack", BINARY).fit(np.zeros((20, 1)), np.ones(20))
        assert isinstance(fit, ConstantModel)
        np.testing.assert_array_equal(fit.predict(np.zeros((3, 1))), 1.0)

    def test_empty(self):
        with pytest.raises(EmptyTrainingSet):
            make_learner("ridge", REGRESSION).fit(np.zeros((0, 2)), np.zeros(0))

    def test_tiny_sample_falls_back_to_mean(self):
        fit = make_learner("gbt", REGRESSION).fit(np.arange(3.0)[:, None], np.array([1.0, 2.0, 6.0]))
        np.testing.assert_allclose(fit.predict(np.zeros((2, 1))), 3.0)

    def test_stack_beats_worst_member(self, rng):
        X = rng.uniform(-2, 2, size=(1500, 1))
        y = np.sin(2 * X[:, 0]) + 0.2 * rng.normal(size=1500)
        Xt = rng.uniform(-2, 2, size=(1500, 1))
        yt = np.sin(2 * Xt[:, 0])
        stack = make_learner({"learner": "stack"}, REGRESSION).fit(X, y)
        ridge = make_learner("ridge", REGRESSION).fit(X, y)
        assert np.mean((stack.predict(Xt) - yt) ** 2) < 0.5 * np.mean((ridge.predict(Xt) - yt) ** 2)
        assert stack.weights.sum() == pytest.approx(1.0)

    def test_unknown_learner(self):
        with pytest.raises(ValueError, match="unknown learner"):
            make_learner("forest", REGRESSION)


class TestSimplex:
    def test_recovers_convex_combination(self, rng):
        P = rng.normal(size=(500, 3))
        y = P @ np.array([0.2, 0.8, 0.0])
        np.testing.assert_allclose(simplex_least_squares(P, y), [0.2, 0.8, 0.0], atol=1e-6)

    def test_on_simplex(self, rng):
        P = rng.normal(size=(200, 4))
        w = simplex_least_squares(P, 5 * P[:, 0])
        assert np.all(w >= 0) and w.sum() == pytest.approx(1.0)
        np.testing.assert_allclose(w, [1, 0, 0, 0], atol=1e-6)


class TestConfig:
    def test_overrides(self):
        cfg = LearnerConfig.parse({"learner": "stack", "members": ["ridge", "knn"], "seed": 4,
                                   "propensity": "ridge"})
        assert cfg.seed == 4
        assert cfg.for_family("propensity") == {"learner": "ridge"}
        assert cfg.for_family("regression")["members"] == ["ridge", "knn"]
        assert cfg.build("regression", REGRESSION).member_names == ("ridge", "knn")

    def test_string(self):
        assert LearnerConfig.parse("gbt").default == {"learner": "gbt"}

    def test_nested_overrides(self):
        cfg = LearnerConfig.parse({"learner": "ridge", "overrides": {"ratio": "gbt"}})
        assert cfg.for_family("ratio") == {"learner": "gbt"}
        assert cfg.for_family("propensity") == {"learner": "ridge"}

    def test_unknown_override_family(self):
        with pytest.raises(ValueError, match="unknown nuisance family"):
            LearnerConfig.parse({"overrides": {"outcome": "gbt"}})

    def test_bad_option(self):
        with pytest.raises(ValueError, match="bad options"):
            make_learner({"learner": "ridge", "depth": 3}, REGRESSION)
