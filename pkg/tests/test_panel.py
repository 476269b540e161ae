import numpy as np
import pytest

from crossworld.panel import (CSVFormatError, CSVSchema, PanelDataset, PanelValidationError,
                              Regime, Trajectory, parse_long_format_csv, regimes_consistent,
                              validate_dataset, write_long_format_csv)


def _write(tmp_path, text, name="panel.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestValidate:
    def test_accepts_valid_panel_unchanged(self, tiny_panel):
        out = validate_dataset(tiny_panel)
        assert out.equals(tiny_panel)
        assert (out.n, out.horizon, out.covariate_dim) == (2, 2, 1)

    def test_idempotent(self, tiny_panel):
        once = validate_dataset(tiny_panel)
        assert validate_dataset(once).equals(once)

    def test_non_binary_treatment(self):
        data = PanelDataset(np.zeros((2, 2, 1)), np.array([[2, 0], [0, 1]]), np.zeros(2))
        with pytest.raises(PanelValidationError, match="non-binary treatment, unit 0, t=1") as e:
            validate_dataset(data)
        assert (e.value.unit, e.value.t, e.value.field_name) == (0, 1, "treatments")

    def test_length_mismatch(self):
        bad = Trajectory(((0.0,), (1.0,), (2.0,)), (0, 1), 0.0)
        with pytest.raises(PanelValidationError, match="length mismatch"):
            PanelDataset.from_trajectories([bad])

    def test_dimension_mismatch_names_unit_and_time(self):
        units = [Trajectory(((0.0,), (1.0,)), (0, 1), 0.0),
                 Trajectory(((0.0,), (1.0, 2.0)), (0, 1), 0.0)]
        with pytest.raises(PanelValidationError, match="dimension mismatch, unit 1, t=2"):
            PanelDataset.from_trajectories(units)

    @pytest.mark.parametrize("where", ["X", "Y"])
    def test_non_finite(self, where):
        X, A, Y = np.zeros((3, 2, 1)), np.zeros((3, 2)), np.zeros(3)
        if where == "X":
            X[1, 1, 0] = np.nan
            msg = "non-finite value, unit 1, t=2, field covariates"
        else:
            Y[2] = np.inf
            msg = "non-finite value, unit 2, field outcome"
        with pytest.raises(PanelValidationError, match=msg):
            validate_dataset(PanelDataset(X, A, Y))

    def test_trajectory_view(self, tiny_panel):
        u = tiny_panel[1]
        assert u.treatments == (0, 1)
        assert u.covariates == ((-0.2,), (0.0,))
        assert u.outcome == -1.5
        assert u.history(2) == (((-0.2,), (0.0,)), (0,))


class TestRegime:
    @pytest.mark.parametrize("value", ["101", [1, 0, 1], (1, 0, 1), "1,0,1"])
    def test_parse(self, value):
        assert Regime.parse(value).actions == (1, 0, 1)

    def test_rejects_non_binary(self):
        with pytest.raises(ValueError):
            Regime((1, 2))

    def test_consistency_mask(self):
        A = np.array([[1, 1], [1, 0], [0, 1]], dtype=np.int8)
        np.testing.assert_array_equal(regimes_consistent(A, Regime((1, 1)), 1), [True, True, False])
        np.testing.assert_array_equal(regimes_consistent(A, Regime((1, 1)), 2), [True, False, False])
        assert regimes_consistent(A, (0, 0), 0).all()


class TestCSV:
    def test_two_by_two(self, tmp_path):
        p = _write(tmp_path, "id,time,x,a,y\n1,1,0.5,1,3\n1,2,1.5,0,3\n2,1,0.1,0,1\n2,2,0.2,1,1\n")
        data = parse_long_format_csv(p, {"unit": "id", "outcome_mode": "repeated"})
        assert (data.n, data.horizon, data.covariate_dim) == (2, 2, 1)
        np.testing.assert_array_equal(data.A, [[1, 0], [0, 1]])
        np.testing.assert_array_equal(data.Y, [3.0, 1.0])
        assert data.unit_ids == (1, 2)

    def test_rows_sorted_by_time(self, tmp_path):
        p = _write(tmp_path, "unit_id,time,x,a,y\nu,2,7,1,5\nu,1,3,0,5\n")
        data = parse_long_format_csv(p)
        np.testing.assert_array_equal(data.X[0, :, 0], [3.0, 7.0])
        assert data.unit_ids == ("u",)

    def test_missing_treatment_column(self, tmp_path):
        p = _write(tmp_path, "unit_id,time,x,y\n1,1,0,1\n")
        with pytest.raises(CSVFormatError, match="column 'a' not found"):
            parse_long_format_csv(p)

    def test_time_gap(self, tmp_path):
        p = _write(tmp_path, "unit_id,time,x,a,y\n7,1,0,1,1\n7,3,0,1,1\n")
        with pytest.raises(CSVFormatError, match="time gap for unit 7"):
            parse_long_format_csv(p)

    def test_duplicate(self, tmp_path):
        p = _write(tmp_path, "unit_id,time,x,a,y\n1,1,0,1,1\n1,1,0,1,1\n")
        with pytest.raises(CSVFormatError, match="duplicate"):
            parse_long_format_csv(p)

    def test_unparseable(self, tmp_path):
        p = _write(tmp_path, "unit_id,time,x,a,y\n1,1,abc,1,1\n")
        with pytest.raises(CSVFormatError, match="unparseable numeric"):
            parse_long_format_csv(p)

    def test_non_binary_treatment_in_csv(self, tmp_path):
        p = _write(tmp_path, "unit_id,time,x,a,y\n1,1,0,2,1\n")
        with pytest.raises(PanelValidationError, match="non-binary treatment, unit 0, t=1"):
            parse_long_format_csv(p)

    def test_final_outcome_mode_reads_last_row(self, tmp_path):
        p = _write(tmp_path, "unit_id,time,x,a,y\n1,1,0,1,\n1,2,0,1,4.5\n")
        assert parse_long_format_csv(p).Y[0] == 4.5

    def test_repeated_outcome_must_be_constant(self, tmp_path):
        p = _write(tmp_path, "unit_id,time,x,a,y\n1,1,0,1,1\n1,2,0,1,2\n")
        with pytest.raises(CSVFormatError, match="not constant"):
            parse_long_format_csv(p, {"outcome_mode": "repeated"})

    def test_one_hot(self, tmp_path):
        p = _write(tmp_path, "unit_id,time,x,g,a,y\n1,1,0,b,1,1\n2,1,0,a,0,1\n3,1,0,c,0,1\n")
        data = parse_long_format_csv(p, CSVSchema(categorical=("g",)))
        assert data.covariate_names == ("x", "g=b", "g=c")
        np.testing.assert_array_equal(data.X[:, 0, 1:], [[1, 0], [0, 0], [0, 1]])

    def test_round_trip_bitwise(self, tmp_path, rng):
        X = rng.normal(size=(5, 3, 2)) * 1e3
        A = rng.integers(0, 2, size=(5, 3))
        Y = rng.normal(size=5) / 7.0
        data = validate_dataset(PanelDataset(X, A, Y, covariate_names=("u", "v")))
        p = tmp_path / "rt.csv"
        write_long_format_csv(data, p)
        back = parse_long_format_csv(p, {"covariates": ["u", "v"], "outcome_mode": "repeated"})
        assert back.equals(data)
