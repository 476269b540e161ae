"""Longitudinal panel data model: trajectories, datasets, regimes and CSV ingestion.

A panel is stored column-wise as dense arrays::

    X : (n, T, d) float64   covariates X_1..X_T
    A : (n, T)    int8      binary treatments A_1..A_T
    Y : (n,)      float64   terminal outcome

Per-unit :class:`Trajectory` views are produced on demand.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class PanelValidationError(ValueError):
    """Invalid panel data. Carries the offending unit index, time index and field."""

    def __init__(self, message: str, unit: int | None = None, t: int | None = None,
                 field_name: str | None = None):
        super().__init__(message)
        self.unit = unit
        self.t = t
        self.field_name = field_name


class CSVFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Trajectory:
    """One unit's record (X_1, A_1, ..., X_T, A_T, Y)."""

    covariates: tuple[tuple[float, ...], ...]
    treatments: tuple[int, ...]
    outcome: float

    @property
    def horizon(self) -> int:
        return len(self.treatments)

    def history(self, t: int) -> tuple[tuple[tuple[float, ...], ...], tuple[int, ...]]:
        """H_t = (X_1..X_t, A_1..A_{t-1}) with 1-based t."""
        return self.covariates[:t], self.treatments[:t - 1]


@dataclass(frozen=True)
class Regime:
    """A deterministic binary treatment sequence a_1..a_T."""

    actions: tuple[int, ...]

    def __post_init__(self):
        acts = tuple(int(a) for a in self.actions)
        if len(acts) == 0:
            raise ValueError("regime must have at least one time point")
        if any(a not in (0, 1) for a in acts):
            raise ValueError(f"regime entries must be 0 or 1, got {self.actions!r}")
        object.__setattr__(self, "actions", acts)

    @classmethod
    def parse(cls, value) -> "Regime":
        if isinstance(value, Regime):
            return value
        if isinstance(value, str):
            value = [int(c) for c in value.replace(",", "").replace(" ", "")]
        return cls(tuple(value))

    def __len__(self) -> int:
        return len(self.actions)

    def __getitem__(self, idx):
        return self.actions[idx]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.actions, dtype=np.int8)

    def __str__(self) -> str:
        return "".join(str(a) for a in self.actions)


@dataclass(frozen=True, eq=False)
class PanelDataset:
    X: np.ndarray
    A: np.ndarray
    Y: np.ndarray
    unit_ids: tuple = field(default=())
    covariate_names: tuple[str, ...] | None = None

    def __post_init__(self):
        X = np.ascontiguousarray(self.X, dtype=np.float64)
        if X.ndim == 2:
            X = X[:, :, None]
        A = np.asarray(self.A)
        Y = np.ascontiguousarray(self.Y, dtype=np.float64)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "Y", Y)
        if not self.unit_ids:
            object.__setattr__(self, "unit_ids", tuple(range(len(Y))))
        else:
            object.__setattr__(self, "unit_ids", tuple(self.unit_ids))
        if self.covariate_names is not None:
            object.__setattr__(self, "covariate_names", tuple(self.covariate_names))

    @property
    def n(self) -> int:
        return self.Y.shape[0]

    @property
    def horizon(self) -> int:
        return self.X.shape[1]

    @property
    def covariate_dim(self) -> int:
        return self.X.shape[2]

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, i: int) -> Trajectory:
        return Trajectory(
            covariates=tuple(tuple(float(v) for v in row) for row in self.X[i]),
            treatments=tuple(int(a) for a in self.A[i]),
            outcome=float(self.Y[i]),
        )

    @property
    def units(self) -> list[Trajectory]:
        return [self[i] for i in range(self.n)]

    def history_features(self, t: int) -> np.ndarray:
        """Flattened covariate history X_1..X_t as an (n, t*d) matrix."""
        return self.X[:, :t, :].reshape(self.n, t * self.covariate_dim)

    def subset(self, idx) -> "PanelDataset":
        idx = np.asarray(idx)
        ids = tuple(np.asarray(self.unit_ids, dtype=object)[idx])
        return PanelDataset(self.X[idx], self.A[idx], self.Y[idx], ids, self.covariate_names)

    def equals(self, other: "PanelDataset") -> bool:
        """Bitwise equality on values (plus shapes and ids)."""
        return (
            self.X.shape == other.X.shape
            and np.array_equal(self.X.view(np.uint64), other.X.view(np.uint64))
            and np.array_equal(self.A.astype(np.int8), other.A.astype(np.int8))
            and np.array_equal(self.Y.view(np.uint64), other.Y.view(np.uint64))
            and [str(u) for u in self.unit_ids] == [str(u) for u in other.unit_ids]
        )

    @classmethod
    def from_trajectories(cls, units: Sequence[Trajectory], unit_ids=None,
                          covariate_names=None) -> "PanelDataset":
        """Build a dataset from trajectories, validating shapes on the way."""
        if len(units) == 0:
            raise PanelValidationError("dataset must contain at least one unit")
        T = len(units[0].treatments)
        d = len(units[0].covariates[0]) if units[0].covariates else 0
        for i, u in enumerate(units):
            if len(u.covariates) != len(u.treatments):
                raise PanelValidationError(
                    f"length mismatch, unit {i}: {len(u.covariates)} covariate vectors "
                    f"but {len(u.treatments)} treatments", unit=i, field_name="covariates")
            if len(u.treatments) != T:
                raise PanelValidationError(
                    f"length mismatch, unit {i}: horizon {len(u.treatments)} != {T}",
                    unit=i, field_name="treatments")
            for t, x in enumerate(u.covariates, start=1):
                if len(x) != d:
                    raise PanelValidationError(
                        f"dimension mismatch, unit {i}, t={t}: got {len(x)} covariates, "
                        f"expected {d}", unit=i, t=t, field_name="covariates")
        X = np.array([[list(x) for x in u.covariates] for u in units], dtype=np.float64)
        A = np.array([list(u.treatments) for u in units], dtype=np.float64)
        Y = np.array([u.outcome for u in units], dtype=np.float64)
        return validate_dataset(PanelDataset(X, A, Y, unit_ids or (), covariate_names))


def validate_dataset(data: PanelDataset) -> PanelDataset:
    """Check every trajectory invariant; return the dataset with int8 treatments.

    Raises :class:`PanelValidationError` naming the first offending unit, time
    (1-based) and field.
    """
    X, A, Y = data.X, np.asarray(data.A), data.Y
    if Y.ndim != 1 or Y.shape[0] < 1:
        raise PanelValidationError("dataset must contain at least one unit")
    n = Y.shape[0]
    if X.ndim != 3 or X.shape[0] != n:
        raise PanelValidationError(f"dimension mismatch: covariates shape {X.shape}, n={n}",
                                   field_name="covariates")
    if A.ndim != 2 or A.shape[0] != n:
        raise PanelValidationError(f"dimension mismatch: treatments shape {A.shape}, n={n}",
                                   field_name="treatments")
    if X.shape[1] != A.shape[1]:
        raise PanelValidationError(
            f"length mismatch: {X.shape[1]} covariate vectors but {A.shape[1]} treatments",
            field_name="treatments")
    if X.shape[1] < 1:
        raise PanelValidationError("length mismatch: horizon must be >= 1")
    if data.covariate_names is not None and len(data.covariate_names) != X.shape[2]:
        raise PanelValidationError(
            f"dimension mismatch: {len(data.covariate_names)} names for {X.shape[2]} covariates",
            field_name="covariate_names")

    bad = ~np.isfinite(X)
    if bad.any():
        i, t, _ = np.argwhere(bad)[0]
        raise PanelValidationError(f"non-finite value, unit {i}, t={t + 1}, field covariates",
                                   unit=int(i), t=int(t) + 1, field_name="covariates")
    Af = A.astype(np.float64)
    bad = ~((Af == 0) | (Af == 1))
    if bad.any():
        i, t = np.argwhere(bad)[0]
        raise PanelValidationError(f"non-binary treatment, unit {i}, t={t + 1}",
                                   unit=int(i), t=int(t) + 1, field_name="treatments")
    bad = ~np.isfinite(Y)
    if bad.any():
        i = int(np.argmax(bad))
        raise PanelValidationError(f"non-finite value, unit {i}, field outcome",
                                   unit=i, field_name="outcome")
    if len(data.unit_ids) != n:
        raise PanelValidationError(f"{len(data.unit_ids)} unit ids for {n} units",
                                   field_name="unit_ids")
    if A.dtype == np.int8:
        return data
    return PanelDataset(X, Af.astype(np.int8), Y, data.unit_ids, data.covariate_names)


# --------------------------------------------------------------------------
# CSV ingestion
# --------------------------------------------------------------------------

@dataclass
class CSVSchema:
    """Column mapping for long-format panel CSV files.

    ``outcome_mode`` is ``"final"`` (outcome read from the row with the last
    time index) or ``"repeated"`` (outcome repeated on every row and required
    to be constant within a unit). Columns listed in ``categorical`` are
    one-hot encoded (first sorted level dropped) and appended to the
    covariates.
    """

    unit: str = "unit_id"
    time: str = "time"
    covariates: tuple[str, ...] = ("x",)
    treatment: str = "a"
    outcome: str = "y"
    outcome_mode: str = "final"
    categorical: tuple[str, ...] = ()

    @classmethod
    def from_dict(cls, d: dict) -> "CSVSchema":
        d = dict(d)
        for key in ("covariates", "categorical"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def _parse_float(text: str, row: int, col: str) -> float:
    try:
        return float(text)
    except (TypeError, ValueError):
        raise CSVFormatError(f"unparseable numeric {text!r} in column '{col}', row {row}") from None


def parse_long_format_csv(path, schema: CSVSchema | dict | None = None) -> PanelDataset:
    """Read a long-format panel (one row per unit-time) into a :class:`PanelDataset`."""
    if schema is None:
        schema = CSVSchema()
    elif isinstance(schema, dict):
        schema = CSVSchema.from_dict(schema)
    if schema.outcome_mode not in ("final", "repeated"):
        raise CSVFormatError(f"unknown outcome_mode {schema.outcome_mode!r}")

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        needed = [schema.unit, schema.time, *schema.covariates, *schema.categorical,
                  schema.treatment, schema.outcome]
        for col in needed:
            if col not in header:
                raise CSVFormatError(f"column '{col}' not found")
        rows = list(reader)

    levels = {c: sorted({r[c] for r in rows})[1:] for c in schema.categorical}
    names = list(schema.covariates) + [f"{c}={lv}" for c in schema.categorical for lv in levels[c]]

    per_unit: dict[str, dict[int, dict]] = {}
    order: list[str] = []
    for rownum, r in enumerate(rows, start=2):
        uid = r[schema.unit]
        try:
            t = int(r[schema.time])
        except ValueError:
            raise CSVFormatError(f"unparseable time {r[schema.time]!r}, row {rownum}") from None
        if uid not in per_unit:
            per_unit[uid] = {}
            order.append(uid)
        if t in per_unit[uid]:
            raise CSVFormatError(f"duplicate (unit, time) = ({uid}, {t})")
        x = [_parse_float(r[c], rownum, c) for c in schema.covariates]
        for c in schema.categorical:
            x.extend(1.0 if r[c] == lv else 0.0 for lv in levels[c])
        a = _parse_float(r[schema.treatment], rownum, schema.treatment)
        per_unit[uid][t] = {"x": x, "a": a, "y": r[schema.outcome], "row": rownum}

    if not order:
        raise CSVFormatError("no data rows")
    T = None
    X, A, Y = [], [], []
    for uid in order:
        times = sorted(per_unit[uid])
        if times != list(range(1, len(times) + 1)):
            raise CSVFormatError(f"time gap for unit {uid}")
        if T is None:
            T = len(times)
        elif len(times) != T:
            raise CSVFormatError(f"unit {uid} has {len(times)} time points, expected {T}")
        recs = [per_unit[uid][t] for t in times]
        last = recs[-1]
        y = _parse_float(last["y"], last["row"], schema.outcome)
        if schema.outcome_mode == "repeated":
            for rec in recs:
                if _parse_float(rec["y"], rec["row"], schema.outcome) != y:
                    raise CSVFormatError(f"outcome not constant within unit {uid}")
        X.append([rec["x"] for rec in recs])
        A.append([rec["a"] for rec in recs])
        Y.append(y)

    ids = tuple(int(u) if u.lstrip("-").isdigit() else u for u in order)
    data = PanelDataset(np.array(X, dtype=np.float64).reshape(len(order), T, len(names)),
                        np.array(A, dtype=np.float64), np.array(Y, dtype=np.float64),
                        ids, tuple(names))
    return validate_dataset(data)


def write_long_format_csv(data: PanelDataset, path, schema: CSVSchema | None = None) -> None:
    """Write a dataset in long format with the outcome repeated on every row.

    Floats are written with ``repr`` so that re-parsing is bitwise exact.
    """
    d = data.covariate_dim
    names = data.covariate_names or tuple(f"x{j + 1}" for j in range(d))
    if schema is None:
        schema = CSVSchema(covariates=tuple(names), outcome_mode="repeated")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([schema.unit, schema.time, *schema.covariates, schema.treatment, schema.outcome])
        for i in range(data.n):
            y = repr(float(data.Y[i]))
            for t in range(data.horizon):
                w.writerow([data.unit_ids[i], t + 1,
                            *(repr(float(v)) for v in data.X[i, t]),
                            int(data.A[i, t]), y])


def regimes_consistent(A: np.ndarray, regime: Regime | Iterable[int], upto: int) -> np.ndarray:
    """Boolean mask of units with A_1..A_upto equal to the regime's first ``upto`` actions."""
    acts = np.asarray(tuple(regime.actions if isinstance(regime, Regime) else regime)[:upto],
                      dtype=A.dtype)
    if upto == 0:
        return np.ones(A.shape[0], dtype=bool)
    return np.all(A[:, :upto] == acts, axis=1)
