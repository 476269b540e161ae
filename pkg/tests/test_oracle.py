import json

import numpy as np
import pytest
from scipy.special import expit

from crossworld.dgp import OracleUnavailable, simulate_cross_world
from crossworld.models import get_model
from crossworld.oracle import (enumerate_g_formula, estimand_mc, golden_value, identified_enumeration,
                               identified_mc, load_golden, observed_paths, oracle_nuisances,
                               regen_golden, support_diagnostic)
from crossworld.weights import WeightSpec, preset

# identified contrasts 11 vs 00, frozen from exact enumeration
ENUMERATED = [
    ("discrete", 2, "overlap", 0.2087403508031521),
    ("discrete", 2, "smooth_trim", 2.202105935480011),
    ("discrete", 2, "trim", 2.2041471571222067),
    ("monotone_discrete", 2, "overlap", 0.20631611253783866),
    ("monotone_discrete", 2, "smooth_trim", 2.0460733656022203),
    ("monotone_discrete", 2, "trim", 2.0467868307325268),
    ("discrete", 3, "overlap", 0.13568881555459275),
    ("discrete", 3, "smooth_trim", 3.4384186068418674),
    ("discrete", 3, "trim", 3.44164698911068),
]


def _spec(name, T):
    return preset(name, T, k=20) if name == "smooth_trim" else preset(name, T)


class TestEnumeration:
    @pytest.mark.parametrize("model,T,weights,value", ENUMERATED)
    def test_frozen(self, model, T, weights, value):
        m = get_model(model, {"horizon": T})
        res = identified_enumeration(m, "1" * T, "0" * T, _spec(weights, T))
        assert res.value == pytest.approx(value, abs=1e-12)
        assert res.halves["psi_a"] - res.halves["psi_b"] == pytest.approx(res.value, abs=1e-15)

    def test_trim_closed_form(self):
        # every propensity of the discrete model exceeds 0.05, so W = 1 and
        # psi(a) = E[Y(a)] = E X1 + E X2(a1) + sum(a)
        m = get_model("discrete")
        res = identified_enumeration(m, "11", "00", preset("trim", 2))
        ey11 = 0.5 + 0.5 * (expit(0.5) + expit(1.3)) + 2
        ey00 = 0.5 + 0.5 * (expit(-0.4) + expit(0.4))
        assert res.halves["psi_a"] == pytest.approx(ey11, abs=1e-12)
        assert res.halves["psi_b"] == pytest.approx(ey00, abs=1e-12)

    def test_single_period_ate(self):
        m = get_model("discrete", {"horizon": 1})
        assert identified_enumeration(m, "1", "0", preset("none", 1)).value == pytest.approx(1.0)
        # overlap weights: E[p(1 - p)] times the unit treatment effect
        p = np.array([0.35, 0.65])
        want = np.mean(p * (1 - p))
        assert identified_enumeration(m, "1", "0", preset("overlap", 1)).value == pytest.approx(want)

    def test_zero_collapse_example1(self):
        m = get_model("example1_discrete")
        for w in ("overlap", "smooth_trim", "trim"):
            res = identified_enumeration(m, "11", "00", _spec(w, 2))
            assert res.value == 0.0 and res.halves == {"psi_a": 0.0, "psi_b": 0.0}

    def test_same_regime(self):
        assert identified_enumeration(get_model("discrete"), "10", "10",
                                      preset("overlap", 2)).value == 0.0

    def test_continuous_model_refused(self):
        with pytest.raises(OracleUnavailable):
            enumerate_g_formula(get_model("moderate_overlap"), "11", "00", preset("overlap", 2))

    def test_regime_length_checked(self):
        with pytest.raises(ValueError):
            identified_enumeration(get_model("discrete"), "111", "000", preset("overlap", 2))


class TestMonteCarlo:
    def test_agrees_with_enumeration(self):
        m = get_model("discrete")
        spec = preset("overlap", 2)
        res = estimand_mc(m, "11", "00", spec, 200_000, 3)
        assert abs(res.value - 0.2087403508031521) < 4 * res.standard_error

    def test_se_scaling(self):
        m = get_model("moderate_overlap")
        spec = preset("smooth_trim", 2, k=20)
        small = estimand_mc(m, "11", "00", spec, 50_000, 1).standard_error
        large = estimand_mc(m, "11", "00", spec, 200_000, 1).standard_error
        assert large / small == pytest.approx(0.5, rel=0.2)

    def test_deterministic(self):
        m = get_model("moderate_overlap")
        spec = preset("overlap", 2)
        assert estimand_mc(m, "11", "00", spec, 10_000, 5) == estimand_mc(m, "11", "00", spec, 10_000, 5)

    def test_null_model_zero_per_draw(self):
        m = get_model("null_effect")
        cw = simulate_cross_world(m, "11", "00", 10_000, 2)
        np.testing.assert_array_equal(cw.world_a.Y, cw.world_b.Y)
        res = estimand_mc(m, "11", "00", preset("smooth_trim", 2, k=20), 10_000, 2)
        assert res.value == 0.0 and res.standard_error == 0.0

    def test_estimand_differs_from_identified_on_example1(self):
        # the cross-world estimand and the identified functional disagree when
        # natural propensities differ between worlds
        m = get_model("example1_discrete")
        res = estimand_mc(m, "11", "00", preset("trim", 2), 100_000, 0)
        assert res.value == pytest.approx(2.0, abs=0.05)
        assert identified_enumeration(m, "11", "00", preset("trim", 2)).value == 0.0

    def test_identified_mc_matches_enumeration(self):
        m = get_model("monotone_discrete")
        spec = preset("smooth_trim", 2, k=20)
        res = identified_mc(m, "11", "00", spec, 200_000, 4)
        assert abs(res.value - 2.0460733656022203) < 4 * res.standard_error


class TestSupport:
    def test_example1_no_overlap(self):
        d = support_diagnostic("example1", draws=20_000)
        assert d["share"] == 0.0 and d["min"] == 0.0 and d["max"] == np.inf

    def test_example2_full_overlap(self):
        d = support_diagnostic("example2", draws=20_000)
        assert d["share"] == 1.0 and d["min"] == d["max"] == 1.0

    def test_half_overlap(self):
        d = support_diagnostic("half_overlap", draws=100_000, seed=1)
        assert d["share"] == pytest.approx(0.5, abs=0.05)

    def test_array_source_with_ceiling(self):
        d = support_diagnostic(np.array([0.0, 0.5, 1.0, 50.0]), ceiling=50.0)
        assert d["share"] == 0.5 and d["n"] == 4


class TestExactNuisances:
    def test_observed_paths_are_a_distribution(self):
        paths = observed_paths("discrete")
        assert paths.prob.sum() == pytest.approx(1.0, abs=1e-12)
        assert len(paths.prob) == 16

    def test_monotone_has_structural_zeros(self):
        paths = observed_paths("monotone_discrete")
        # P(A1 = 1 | X1 = 0) = 0 removes every such path
        assert not np.any((paths.X[:, 0, 0] == 0) & (paths.A[:, 0] == 1))
        assert paths.prob.sum() == pytest.approx(1.0, abs=1e-12)

    def test_plug_in_over_paths_is_enumeration(self):
        m = get_model("discrete")
        spec = preset("overlap", 2)
        paths = observed_paths(m)
        nu = oracle_nuisances(m, paths.X, "11", "00", spec)
        h = nu.half_a
        val = np.sum(paths.prob * h.m[:, 0] * h.pi[:, 0] * h.pi_other[:, 0])
        assert val == pytest.approx(0.30292647039311865, abs=1e-12)


class TestGolden:
    def test_manifest_entries(self):
        entries = load_golden()
        assert {e["model"] for e in entries} == {"moderate_overlap", "null_effect"}
        for e in entries:
            assert {"seed", "draws", "value", "se", "weights", "regimes"} <= set(e)

    def test_lookup(self):
        e = golden_value("moderate_overlap", ["11", "00"], {"preset": "smooth_trim", "k": 20})
        assert e["value"] == pytest.approx(2.3689867002344394, abs=1e-12)
        assert golden_value("null_effect", ["11", "00"])["value"] == 0.0
        with pytest.raises(KeyError):
            golden_value("discrete", ["11", "00"])

    def test_identified_mc_agrees_with_golden(self):
        e = golden_value("moderate_overlap", ["11", "00"])
        m = get_model("moderate_overlap")
        res = identified_mc(m, "11", "00", WeightSpec.from_config(e["weights"], 2), 200_000, 9)
        assert abs(res.value - e["value"]) < 4 * np.hypot(res.standard_error, e["se"])

    def test_regen_roundtrip(self, tmp_path):
        entries = [{"model": "null_effect", "regimes": ["11", "00"],
                    "weights": {"preset": "overlap"}, "seed": 1, "draws": 1000}]
        out = regen_golden(tmp_path / "g.json", entries)
        assert json.loads((tmp_path / "g.json").read_text()) == out
        assert out[0]["value"] == 0.0
