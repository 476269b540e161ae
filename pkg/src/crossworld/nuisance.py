"""Cross-fitted nuisance estimation: propensities, covariate density ratios and
sequential regressions.

Every fit returns predictions of the fold-k models on *all* units, shape
``(K, n, T)``; :meth:`crossfit` then picks, for each unit, the prediction of
the model whose training data excluded that unit.  Time index ``t`` is
1-based in messages and 0-based in arrays.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .learners import BINARY, REGRESSION, LearnerConfig
from .panel import PanelDataset, Regime, regimes_consistent
from .weights import WeightSpec

RHO_MAX = 50.0
RATIO_FLOOR = 1e-3


class NuisanceError(ValueError):
    pass


class EmptySubsampleWarning(UserWarning):
    """A regime-consistent training subsample was empty; the zero convention was applied."""


def make_folds(n: int, k: int = 5, seed: int = 0) -> np.ndarray:
    """Random balanced fold labels 0..k-1 for n units."""
    if k < 2:
        raise NuisanceError("need at least 2 folds")
    if n < 2 * k:
        raise NuisanceError(f"n={n} is too small for {k} folds (need n >= {2 * k})")
    labels = np.arange(n) % k
    return np.random.default_rng(seed).permutation(labels)


def _crossfit(per_fold: np.ndarray, folds: np.ndarray) -> np.ndarray:
    return per_fold[folds, np.arange(folds.size)]


@dataclass
class Diagnostics:
    empty_subsample: int = 0
    ratio_floor: int = 0
    ratio_ceiling: int = 0
    support_gate: int = 0
    messages: list = field(default_factory=list)

    def note_empty(self, what: str, t: int, fold: int):
        self.empty_subsample += 1
        msg = f"empty regime-consistent subsample for {what} at t={t} in fold {fold}; using 0"
        self.messages.append(msg)
        warnings.warn(msg, EmptySubsampleWarning, stacklevel=3)

    def to_dict(self) -> dict:
        return {"empty_subsample": self.empty_subsample, "ratio_floor": self.ratio_floor,
                "ratio_ceiling": self.ratio_ceiling, "support_gate": self.support_gate}


@dataclass(frozen=True)
class FoldPredictions:
    """Predictions of each fold's models on every unit."""

    per_fold: np.ndarray   # (K, n, T)
    folds: np.ndarray      # (n,)

    def crossfit(self) -> np.ndarray:
        return _crossfit(self.per_fold, self.folds)


class _ClassifierCache:
    """Shares fitted event classifiers between propensities and density-ratio factors.

    Key: (fold, event prefix, number of covariate time points, subsample prefix).
    """

    def __init__(self, data: PanelDataset, folds, config: LearnerConfig):
        self.data = data
        self.folds = folds
        self.config = config
        self._store: dict = {}

    def predict(self, family: str, fold: int, event: tuple, n_time: int,
                restrict: tuple = (), diag: Diagnostics | None = None) -> np.ndarray:
        """P(A_{s..} = event | X_1..X_{n_time}, A_1..A_{len(restrict)} = restrict), fit on
        training units of ``fold`` and predicted on all units."""
        key = (fold, event, n_time, restrict)
        if key in self._store:
            return self._store[key]
        d = self.data
        start = len(restrict)
        train = (self.folds != fold) & regimes_consistent(d.A, restrict, start)
        Xf = d.history_features(n_time)
        if not train.any():
            if diag is not None:
                diag.note_empty(family, n_time, fold)
            pred = np.zeros(d.n)
        else:
            labels = np.all(d.A[:, start:start + len(event)] == np.asarray(event, dtype=d.A.dtype),
                            axis=1).astype(float)
            offset = 1009 * fold + 31 * n_time + 7 * start + len(event)
            model = self.config.build(family, BINARY, offset).fit(Xf[train], labels[train])
            pred = np.clip(model.predict(Xf), 0.0, 1.0)
        self._store[key] = pred
        return pred


def _check_inputs(data: PanelDataset, folds, *regimes):
    for r in regimes:
        if len(r) != data.horizon:
            raise NuisanceError(f"regime length {len(r)} does not match data horizon {data.horizon}")
    folds = np.asarray(folds)
    if folds.shape != (data.n,):
        raise NuisanceError("fold labels must have one entry per unit")
    return folds


def fit_propensities(data: PanelDataset, regime, learner=None, folds=None, *,
                     seed: int = 0, support_floor: float | None = RATIO_FLOOR,
                     diagnostics: Diagnostics | None = None,
                     _cache: _ClassifierCache | None = None) -> FoldPredictions:
    """Cross-fitted pi_t(X_1..X_t) = P(A_t = a_t | X_1..X_t, A_1..A_{t-1} = a_1..a_{t-1}).

    Fit on the regime-consistent training subsample. Predictions are
    unclamped probabilities; an empty subsample gives pi_t = 0 with an
    :class:`EmptySubsampleWarning`.

    The zero convention for impossible conditioning events is applied
    empirically: where the estimated P(A_1..A_{t-1} = a_1..a_{t-1} | X_1..X_t)
    falls below ``support_floor`` the history is treated as off-support and
    pi_t is set to 0 (``None`` disables the gate).
    """
    regime = Regime.parse(regime)
    folds = make_folds(data.n, 5, seed) if folds is None else folds
    folds = _check_inputs(data, folds, regime)
    cfg = LearnerConfig.parse(learner)
    cache = _cache or _ClassifierCache(data, folds, cfg)
    diag = diagnostics if diagnostics is not None else Diagnostics()
    K, T = int(folds.max()) + 1, data.horizon
    out = np.zeros((K, data.n, T))
    acts = regime.actions
    for k in range(K):
        for t in range(1, T + 1):
            prefix = tuple(acts[:t - 1])
            pi = cache.predict("propensity", k, (acts[t - 1],), t, prefix, diag)
            if support_floor is not None and t > 1:
                off = cache.predict("ratio", k, prefix, t) < support_floor
                diag.support_gate += int(np.sum(off & (folds == k) & (pi > 0)))
                pi = np.where(off, 0.0, pi)
            out[k, :, t - 1] = pi
    return FoldPredictions(out, folds)


def fit_density_ratio(data: PanelDataset, regime_a, regime_b, learner=None, folds=None, *,
                      seed: int = 0, rho_max: float = RHO_MAX, floor: float = RATIO_FLOOR,
                      diagnostics: Diagnostics | None = None,
                      _cache: _ClassifierCache | None = None) -> FoldPredictions:
    """Cross-fitted covariate density ratio via the classification identity

        rho_t = P(E_a | X_1..X_t) P(E_b | X_1..X_{t-1}) / [P(E_b | X_1..X_t) P(E_a | X_1..X_{t-1})]

    with E_r = {A_1..A_{t-1} = r_1..r_{t-1}}.  Each event classifier is fit as
    "event vs rest" on the whole training fold.  Every factor is clipped to
    [floor, 1] before forming the ratio, and the ratio is clipped to
    [0, rho_max]; both clip events are counted in ``diagnostics``.
    rho_1 is identically 1.
    """
    regime_a, regime_b = Regime.parse(regime_a), Regime.parse(regime_b)
    folds = make_folds(data.n, 5, seed) if folds is None else folds
    folds = _check_inputs(data, folds, regime_a, regime_b)
    cfg = LearnerConfig.parse(learner)
    cache = _cache or _ClassifierCache(data, folds, cfg)
    diag = diagnostics if diagnostics is not None else Diagnostics()
    K, T = int(folds.max()) + 1, data.horizon
    out = np.ones((K, data.n, T))
    for k in range(K):
        for t in range(2, T + 1):
            ea, eb = tuple(regime_a.actions[:t - 1]), tuple(regime_b.actions[:t - 1])
            if ea == eb:
                continue
            num_now = cache.predict("ratio", k, ea, t)
            den_now = cache.predict("ratio", k, eb, t)
            num_prev = cache.predict("ratio", k, eb, t - 1)
            den_prev = cache.predict("ratio", k, ea, t - 1)
            factors = np.stack([num_now, den_now, num_prev, den_prev])
            held = folds == k
            diag.ratio_floor += int(np.sum(np.any(factors[[1, 3]] < floor, axis=0) & held))
            f = np.clip(factors, floor, 1.0)
            rho = (f[0] * f[2]) / (f[1] * f[3])
            diag.ratio_ceiling += int(np.sum((rho > rho_max) & held))
            out[k, :, t - 1] = np.clip(rho, 0.0, rho_max)
    return FoldPredictions(out, folds)


def fit_sequential_regressions(data: PanelDataset, regime, pi: FoldPredictions,
                               pi_other: FoldPredictions, weight_spec: WeightSpec, learner=None,
                               *, diagnostics: Diagnostics | None = None) -> FoldPredictions:
    """Backward sequential regressions m_t(X_1..X_t) for the target ``regime``.

    For t = T..1 the pseudo-outcome m_{t+1} w_{t+1}(pi_{t+1}) w'_{t+1}(pi'_{t+1})
    (Y at t = T) is regressed on X_1..X_t among training units with
    A_1..A_t = a_1..a_t; each fold's regression is evaluated on all units,
    and the next pseudo-outcome uses the same fold's propensities.
    """
    regime = Regime.parse(regime)
    folds = _check_inputs(data, pi.folds, regime)
    if weight_spec.horizon != data.horizon:
        raise NuisanceError(f"weight spec horizon {weight_spec.horizon} does not match data "
                            f"horizon {data.horizon}")
    cfg = LearnerConfig.parse(learner)
    diag = diagnostics if diagnostics is not None else Diagnostics()
    K, T, n = pi.per_fold.shape[0], data.horizon, data.n
    out = np.zeros((K, n, T))
    for k in range(K):
        W = weight_spec.product(pi.per_fold[k], pi_other.per_fold[k])
        pseudo = data.Y.astype(np.float64)
        for t in range(T, 0, -1):
            bad = ~np.isfinite(pseudo)
            if bad.any():
                raise NuisanceError(f"non-finite pseudo-outcome at t={t + 1}, unit {int(np.argmax(bad))}")
            train = (folds != k) & regimes_consistent(data.A, regime, t)
            Xf = data.history_features(t)
            if not train.any():
                diag.note_empty("regression", t, k)
                m = np.zeros(n)
            else:
                offset = 1009 * k + 31 * t + 5
                model = cfg.build("regression", REGRESSION, offset).fit(Xf[train], pseudo[train])
                m = model.predict(Xf)
            out[k, :, t - 1] = m
            pseudo = m * W[:, t - 1]
    return FoldPredictions(out, folds)


@dataclass(frozen=True)
class NuisanceSet:
    """Per-unit nuisance values for one target regime.

    ``pi``: P(A_t = a_t | history, target prefix); ``pi_other``: same for the
    other regime; ``rho``: covariate density ratio, target over other;
    ``m``: sequential regressions. All arrays have shape (n, T).
    ``per_fold`` keeps the fold-specific predictions (or None for oracle
    nuisances) for bookkeeping checks.
    """

    pi: np.ndarray
    pi_other: np.ndarray
    rho: np.ndarray
    m: np.ndarray
    folds: np.ndarray | None = None
    per_fold: dict | None = None

    def __post_init__(self):
        shapes = {a.shape for a in (self.pi, self.pi_other, self.rho, self.m)}
        if len(shapes) != 1:
            raise NuisanceError(f"nuisance arrays disagree in shape: {sorted(shapes)}")
        for name in ("pi", "pi_other"):
            p = getattr(self, name)
            if np.any((p < 0) | (p > 1)) or not np.all(np.isfinite(p)):
                raise NuisanceError(f"{name} outside [0,1]")

    @property
    def n(self) -> int:
        return self.pi.shape[0]

    def subset(self, idx) -> "NuisanceSet":
        f = None if self.folds is None else self.folds[idx]
        return NuisanceSet(self.pi[idx], self.pi_other[idx], self.rho[idx], self.m[idx], f)


@dataclass(frozen=True)
class ContrastNuisances:
    """Nuisances for both halves of a contrast: target a and target b."""

    half_a: NuisanceSet
    half_b: NuisanceSet
    diagnostics: dict = field(default_factory=dict)


def fit_nuisances(data: PanelDataset, regime_a, regime_b, weight_spec: WeightSpec, learner=None,
                  folds=None, *, seed: int = 0, rho_max: float = RHO_MAX,
                  floor: float = RATIO_FLOOR, n_folds: int = 5) -> ContrastNuisances:
    """Fit every nuisance needed for the contrast of ``regime_a`` against ``regime_b``.

    Propensity and event classifiers are shared between the two halves; the
    second half uses the swapped weight spec, so its weight product
    w'(pi') w(pi) is the same function as the first half's.
    """
    regime_a, regime_b = Regime.parse(regime_a), Regime.parse(regime_b)
    folds = make_folds(data.n, n_folds, seed) if folds is None else np.asarray(folds)
    folds = _check_inputs(data, folds, regime_a, regime_b)
    cfg = LearnerConfig.parse(learner)
    if cfg.seed == 0 and seed:
        cfg = LearnerConfig(cfg.default, cfg.overrides, seed)
    cache = _ClassifierCache(data, folds, cfg)
    diag = Diagnostics()
    with warnings.catch_warnings():
        warnings.simplefilter("always", EmptySubsampleWarning)
        pa = fit_propensities(data, regime_a, cfg, folds, support_floor=floor, diagnostics=diag,
                              _cache=cache)
        pb = fit_propensities(data, regime_b, cfg, folds, support_floor=floor, diagnostics=diag,
                              _cache=cache)
        rho_ab = fit_density_ratio(data, regime_a, regime_b, cfg, folds, rho_max=rho_max,
                                   floor=floor, diagnostics=diag, _cache=cache)
        ma = fit_sequential_regressions(data, regime_a, pa, pb, weight_spec, cfg, diagnostics=diag)
        if regime_a == regime_b:
            rho_ba, mb = rho_ab, ma
        else:
            rho_ba = fit_density_ratio(data, regime_b, regime_a, cfg, folds, rho_max=rho_max,
                                       floor=floor, diagnostics=diag, _cache=cache)
            mb = fit_sequential_regressions(data, regime_b, pb, pa, weight_spec.swapped(), cfg,
                                            diagnostics=diag)
    half_a = NuisanceSet(pa.crossfit(), pb.crossfit(), rho_ab.crossfit(), ma.crossfit(), folds,
                         {"pi": pa, "pi_other": pb, "rho": rho_ab, "m": ma})
    half_b = NuisanceSet(pb.crossfit(), pa.crossfit(), rho_ba.crossfit(), mb.crossfit(), folds,
                         {"pi": pb, "pi_other": pa, "rho": rho_ba, "m": mb})
    return ContrastNuisances(half_a, half_b, diag.to_dict())
