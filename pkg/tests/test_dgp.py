import numpy as np
import pytest

from crossworld.dgp import (ModelError, OracleUnavailable, StructuralModel, simulate_cross_world,
                            simulate_observational, true_density_ratio, true_propensity)
from crossworld.models import BinaryPanel, GaussianPanel, get_model, list_models


class AlwaysTreat(StructuralModel):
    name = "always"
    horizon = 3

    def covariate(self, t, x_prev, a_prev, u):
        return u[:, 0]

    def propensity(self, t, x_hist, a_prev):
        return np.ones(x_hist.shape[0])

    def outcome(self, x_hist, a_hist, u):
        return a_hist.sum(axis=1) + u[:, 0]


class BadPropensity(AlwaysTreat):
    def propensity(self, t, x_hist, a_prev):
        return np.full(x_hist.shape[0], 1.5 if t == 2 else 0.5)


class TestSimulateObservational:
    def test_example1_structure(self):
        data = simulate_observational(get_model("example1"), 4, seed=11)
        assert data.n == 4
        assert set(np.unique(data.X[:, 1, 0])) <= {0.0, 1.0}
        np.testing.assert_array_equal(data.X[:, 1, 0], data.A[:, 0])

    def test_degenerate_propensity_treats_everyone(self):
        data = simulate_observational(AlwaysTreat(), 50, seed=1)
        assert np.all(data.A == 1)

    def test_deterministic(self):
        m = get_model("moderate_overlap")
        assert simulate_observational(m, 100, 5).equals(simulate_observational(m, 100, 5))
        assert not simulate_observational(m, 100, 5).equals(simulate_observational(m, 100, 6))

    def test_prefix_stable_in_n(self):
        m = get_model("discrete")
        small, big = simulate_observational(m, 10, 3), simulate_observational(m, 40, 3)
        assert small.equals(big.subset(np.arange(10)))

    def test_propensity_outside_unit_interval(self):
        with pytest.raises(ModelError, match="propensity outside \\[0,1\\] at t=2"):
            simulate_observational(BadPropensity(), 5, 0)

    def test_n_must_be_positive(self):
        with pytest.raises(ValueError):
            simulate_observational(AlwaysTreat(), 0, 0)


class TestCrossWorld:
    def test_null_effect_outcomes_equal(self):
        cw = simulate_cross_world(get_model("null_effect"), "11", "00", 1000, 2)
        np.testing.assert_array_equal(cw.world_a.Y, cw.world_b.Y)

    def test_identical_regimes_identical_worlds(self):
        cw = simulate_cross_world(get_model("moderate_overlap"), "10", "10", 200, 2)
        np.testing.assert_array_equal(cw.world_a.X, cw.world_b.X)
        np.testing.assert_array_equal(cw.world_a.Y, cw.world_b.Y)

    def test_example1_disjoint(self):
        cw = simulate_cross_world(get_model("example1"), "11", "00", 500, 4)
        assert np.all(cw.world_a.X[:, 1, 0] == 1.0)
        assert np.all(cw.world_b.X[:, 1, 0] == 0.0)

    def test_baseline_shared(self):
        cw = simulate_cross_world(get_model("moderate_overlap"), "11", "00", 300, 4)
        np.testing.assert_array_equal(cw.world_a.X[:, 0], cw.world_b.X[:, 0])
        np.testing.assert_array_equal(cw.world_a.X[:, 0], cw.observational.X[:, 0])

    def test_prefix_sharing(self):
        m = GaussianPanel(horizon=3)
        cw = simulate_cross_world(m, "110", "101", 300, 4)
        # agree through s=1, so X_1, X_2 and natural A_1 coincide
        np.testing.assert_array_equal(cw.world_a.X[:, :2], cw.world_b.X[:, :2])
        np.testing.assert_array_equal(cw.world_a.A_natural[:, 0], cw.world_b.A_natural[:, 0])
        assert not np.array_equal(cw.world_a.X[:, 2], cw.world_b.X[:, 2])

    def test_consistency_with_observational(self):
        m = get_model("discrete")
        cw = simulate_cross_world(m, "11", "00", 2000, 9)
        obs = cw.observational
        follow = obs.A_natural[:, 0] == 1
        np.testing.assert_array_equal(obs.X[follow, :2], cw.world_a.X[follow, :2])
        both = np.all(obs.A_natural == 1, axis=1)
        np.testing.assert_array_equal(obs.Y[both], cw.world_a.Y[both])

    def test_regime_length_mismatch(self):
        with pytest.raises(ValueError, match="regime length"):
            simulate_cross_world(get_model("discrete"), "111", "00", 5, 0)

    def test_draw_view(self):
        cw = simulate_cross_world(get_model("discrete"), "11", "00", 5, 0)
        d = cw[3]
        assert d.world_a["Y"] == cw.world_a.Y[3]
        np.testing.assert_array_equal(d.noise[1], cw.noise.u_a[3])

    def test_natural_propensity_frequency(self):
        # A_2(a_1=1) frequency among X_1 = 1 matches pt[1][1] in the binary model
        m = get_model("discrete")
        cw = simulate_cross_world(m, "11", "00", 200_000, 21)
        sel = cw.world_a.X[:, 0, 0] == 1
        freq = cw.world_a.A_natural[sel, 1].mean()
        assert abs(freq - 0.75) < 4 * np.sqrt(0.75 * 0.25 / sel.sum())


class TestTruePropensity:
    def test_example2_t1(self):
        assert true_propensity(get_model("example2"), 1, [0.5], []) == 1.0

    def test_example1_t1(self):
        m = get_model("example1")
        np.testing.assert_array_equal(true_propensity(m, 1, np.array([[0.1], [0.9]]), None), [0.5, 0.5])

    def test_example1_impossible_event(self):
        assert true_propensity(get_model("example1"), 2, [0.3, 0.37], [1]) == 0.0

    def test_example1_possible_event(self):
        assert true_propensity(get_model("example1"), 2, [0.3, 1.0], [1]) == 0.5

    def test_treatment_zero(self):
        m = get_model("discrete")
        assert true_propensity(m, 1, [1.0], [], treatment=0) == pytest.approx(0.35)


class TestTrueDensityRatio:
    def test_example2_is_one(self, rng):
        x = rng.random((50, 2, 1))
        np.testing.assert_array_equal(true_density_ratio(get_model("example2"), 2, x, [1], [0]), 1.0)

    def test_example1_disjoint(self):
        m = get_model("example1")
        assert true_density_ratio(m, 2, [0.4, 1.0], [1], [0]) == np.inf
        assert true_density_ratio(m, 2, [0.4, 0.0], [1], [0]) == 0.0

    def test_t1_is_one(self):
        assert true_density_ratio(get_model("moderate_overlap"), 1, [0.2], [], []) == 1.0

    def test_binary_closed_form(self):
        m = BinaryPanel()
        # X_2 | X_1=1: expit(-0.4 + 0.8 + 0.9) vs expit(-0.4 + 0.8)
        p1, p0 = 1 / (1 + np.exp(-1.3)), 1 / (1 + np.exp(-0.4))
        assert true_density_ratio(m, 2, [1.0, 1.0], [1], [0]) == pytest.approx(p1 / p0, rel=1e-12)
        assert true_density_ratio(m, 2, [1.0, 0.0], [1], [0]) == pytest.approx((1 - p1) / (1 - p0))

    def test_gaussian_closed_form(self):
        m = GaussianPanel()
        # X_2 = 0.5 X_1 + 0.8 A_1 + N(0,1): ratio exp(0.8 (x2 - 0.5 x1) - 0.32)
        x1, x2 = 0.3, 1.1
        expected = np.exp(0.8 * (x2 - 0.5 * x1) - 0.32)
        assert true_density_ratio(m, 2, [x1, x2], [1], [0]) == pytest.approx(expected, rel=1e-12)

    def test_unavailable(self):
        with pytest.raises(OracleUnavailable, match="oracle density unavailable"):
            true_density_ratio(AlwaysTreat(), 2, [0.1, 0.2], [1], [0])


class TestRegistry:
    def test_required_models(self):
        names = {m["name"] for m in list_models()}
        assert {"example1", "example2", "null_effect", "moderate_overlap", "discrete"} <= names

    def test_params(self):
        assert get_model("discrete", {"horizon": 3}).horizon == 3
        assert get_model({"model": "moderate_overlap", "horizon": 4}).horizon == 4

    def test_unknown(self):
        with pytest.raises(KeyError, match="unknown model"):
            get_model("nope")
