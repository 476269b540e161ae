"""Nuisance learners: regularised linear/logistic, gradient boosted trees, k-NN, and a stack.

Each learner has a ``capability`` of ``"binary_probability"`` (predictions in
[0, 1]) or ``"real_regression"`` and a ``fit(X, y)`` method returning a
fitted model with ``predict(X)``.  Fitting is deterministic given the seed.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from sklearn.ensemble import HistGradientBoostingClassifier, HistGradientBoostingRegressor
from sklearn.linear_model import LogisticRegression, Ridge
from sklearn.model_selection import KFold
from sklearn.neighbors import KNeighborsClassifier, KNeighborsRegressor
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import PolynomialFeatures, StandardScaler

BINARY = "binary_probability"
REGRESSION = "real_regression"


class EmptyTrainingSet(ValueError):
    pass


class ConstantModel:
    def __init__(self, value: float):
        self.value = float(value)

    def predict(self, X) -> np.ndarray:
        return np.full(np.asarray(X).shape[0], self.value)


class _SklearnModel:
    def __init__(self, est, capability: str):
        self.est = est
        self.capability = capability

    def predict(self, X) -> np.ndarray:
        if self.capability == BINARY:
            proba = self.est.predict_proba(X)
            col = list(self.est.classes_).index(1)
            return np.clip(proba[:, col], 0.0, 1.0)
        return self.est.predict(X)


class Learner:
    name = "learner"
    min_n = 2

    def __init__(self, capability: str, seed: int = 0):
        if capability not in (BINARY, REGRESSION):
            raise ValueError(f"unknown capability {capability!r}")
        self.capability = capability
        self.seed = int(seed)

    def _build(self, n: int):
        raise NotImplementedError

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if X.shape[0] == 0:
            raise EmptyTrainingSet(f"{self.name}: empty training set")
        if self.capability == BINARY:
            if np.all(y == y[0]):
                return ConstantModel(y[0])
            y = y.astype(int)
        elif np.all(y == y[0]):
            return ConstantModel(y[0])
        if X.shape[0] < self.min_n:
            return ConstantModel(y.mean())
        est = self._build(X.shape[0])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            est.fit(X, y)
        return _SklearnModel(est, self.capability)

    def describe(self) -> dict:
        return {"learner": self.name}


class RidgeLearner(Learner):
    """L2-penalised linear regression, or logistic regression for binary targets."""

    name = "ridge"

    def __init__(self, capability, seed=0, alpha: float = 1.0, degree: int = 1):
        super().__init__(capability, seed)
        self.alpha = float(alpha)
        self.degree = int(degree)

    def _build(self, n):
        steps = []
        if self.degree > 1:
            steps.append(PolynomialFeatures(self.degree, include_bias=False))
        steps.append(StandardScaler())
        if self.capability == BINARY:
            steps.append(LogisticRegression(C=1.0 / self.alpha, max_iter=500))
        else:
            steps.append(Ridge(alpha=self.alpha))
        return make_pipeline(*steps)

    def describe(self):
        return {"learner": self.name, "alpha": self.alpha, "degree": self.degree}


class GBTLearner(Learner):
    """Histogram gradient boosted trees."""

    name = "gbt"
    min_n = 10

    def __init__(self, capability, seed=0, max_iter: int = 50, learning_rate: float = 0.1,
                 max_depth: int = 3, min_samples_leaf: int = 20):
        super().__init__(capability, seed)
        self.params = dict(max_iter=int(max_iter), learning_rate=float(learning_rate),
                           max_depth=int(max_depth), min_samples_leaf=int(min_samples_leaf))

    def _build(self, n):
        cls = HistGradientBoostingClassifier if self.capability == BINARY else HistGradientBoostingRegressor
        return cls(early_stopping=False, random_state=self.seed, **self.params)

    def describe(self):
        return {"learner": self.name, **self.params}


class KNNLearner(Learner):
    """k-nearest-neighbour average on standardised features."""

    name = "knn"

    def __init__(self, capability, seed=0, k: int | None = None):
        super().__init__(capability, seed)
        self.k = None if k is None else int(k)

    def _build(self, n):
        k = self.k if self.k is not None else max(5, int(round(np.sqrt(n))))
        k = min(k, n)
        cls = KNeighborsClassifier if self.capability == BINARY else KNeighborsRegressor
        return make_pipeline(StandardScaler(), cls(n_neighbors=k))

    def describe(self):
        return {"learner": self.name, "k": self.k}


def simplex_least_squares(P: np.ndarray, y: np.ndarray) -> np.ndarray:
    """argmin ||y - P w||^2 subject to w >= 0, sum(w) = 1."""
    m = P.shape[1]
    if m == 1:
        return np.ones(1)
    G = P.T @ P
    b = P.T @ y

    def obj(w):
        return w @ G @ w - 2.0 * b @ w

    def grad(w):
        return 2.0 * (G @ w - b)

    res = minimize(obj, np.full(m, 1.0 / m), jac=grad, method="SLSQP",
                   bounds=[(0.0, 1.0)] * m,
                   constraints=[{"type": "eq", "fun": lambda w: w.sum() - 1.0,
                                 "jac": lambda w: np.ones_like(w)}])
    w = np.clip(res.x, 0.0, None)
    return w / w.sum()


class StackedModel:
    def __init__(self, models, weights):
        self.models = models
        self.weights = np.asarray(weights)

    def predict(self, X) -> np.ndarray:
        out = np.zeros(np.asarray(X).shape[0])
        for wgt, m in zip(self.weights, self.models):
            if wgt > 0:
                out += wgt * m.predict(X)
        return out


class StackLearner(Learner):
    """Convex combination of member learners.

    Member weights minimise the out-of-fold squared error (inner K-fold on
    the training data) over the probability simplex; members are then refit
    on the full training data.
    """

    name = "stack"

    def __init__(self, capability, seed=0, members=("ridge", "gbt", "knn"), inner_folds: int = 3,
                 member_params: dict | None = None):
        super().__init__(capability, seed)
        self.member_names = tuple(members)
        self.inner_folds = int(inner_folds)
        self.member_params = member_params or {}
        self.min_n = 2 * self.inner_folds

    def _members(self):
        return [make_learner({"learner": m, **self.member_params.get(m, {})}, self.capability,
                             self.seed + 7919 * j)
                for j, m in enumerate(self.member_names)]

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if X.shape[0] == 0:
            raise EmptyTrainingSet("stack: empty training set")
        if np.all(y == y[0]):
            return ConstantModel(y[0])
        if X.shape[0] < self.min_n:
            return ConstantModel(y.mean())
        members = self._members()
        oof = np.zeros((X.shape[0], len(members)))
        kf = KFold(self.inner_folds, shuffle=True, random_state=self.seed)
        for tr, te in kf.split(X):
            for j, lrn in enumerate(members):
                oof[te, j] = lrn.fit(X[tr], y[tr]).predict(X[te])
        weights = simplex_least_squares(oof, y)
        models = [lrn.fit(X, y) if wgt > 0 else None for lrn, wgt in zip(members, weights)]
        return StackedModel(models, weights)

    def describe(self):
        return {"learner": self.name, "members": list(self.member_names),
                "inner_folds": self.inner_folds}


_LEARNERS = {"ridge": RidgeLearner, "logit": RidgeLearner, "linear": RidgeLearner,
             "gbt": GBTLearner, "knn": KNNLearner, "stack": StackLearner}


def make_learner(config, capability: str, seed: int = 0) -> Learner:
    """Build a learner from a name or a config dict such as
    ``{"learner": "stack", "members": ["ridge", "gbt", "knn"]}``."""
    if isinstance(config, Learner):
        return config
    if isinstance(config, str):
        config = {"learner": config}
    cfg = dict(config)
    name = cfg.pop("learner", "stack")
    cfg.pop("seed", None)
    for key in ("propensity", "ratio", "regression"):
        cfg.pop(key, None)
    try:
        cls = _LEARNERS[name]
    except KeyError:
        raise ValueError(f"unknown learner {name!r}; available: {sorted(_LEARNERS)}") from None
    try:
        return cls(capability, seed, **cfg)
    except TypeError as exc:
        raise ValueError(f"bad options for learner {name!r}: {exc}") from None


@dataclass
class LearnerConfig:
    """Learner choice per nuisance family with an optional base seed.

    ``{"learner": "stack", "members": [...], "seed": 1, "propensity": {...}}``:
    keys ``propensity``, ``ratio`` and ``regression`` override the default
    for that nuisance family.
    """

    default: dict = field(default_factory=lambda: {"learner": "stack"})
    overrides: dict = field(default_factory=dict)
    seed: int = 0

    @classmethod
    def parse(cls, cfg) -> "LearnerConfig":
        if isinstance(cfg, LearnerConfig):
            return cfg
        if cfg is None:
            return cls()
        if isinstance(cfg, str):
            return cls(default={"learner": cfg})
        cfg = dict(cfg)
        nested = dict(cfg.pop("overrides", None) or {})
        unknown = set(nested) - {"propensity", "ratio", "regression"}
        if unknown:
            raise ValueError(f"unknown nuisance family in overrides: {sorted(unknown)}")
        overrides = {k: cfg.pop(k) for k in ("propensity", "ratio", "regression") if k in cfg}
        overrides.update(nested)
        overrides = {k: ({"learner": v} if isinstance(v, str) else dict(v)) for k, v in overrides.items()}
        seed = int(cfg.pop("seed", 0) or 0)
        if "learner" not in cfg:
            cfg["learner"] = "stack"
        return cls(default=cfg, overrides=overrides, seed=seed)

    def for_family(self, family: str) -> dict:
        return self.overrides.get(family, self.default)

    def build(self, family: str, capability: str, seed_offset: int = 0) -> Learner:
        return make_learner(self.for_family(family), capability, self.seed + seed_offset)

    def to_dict(self) -> dict:
        out = dict(self.default)
        out.update({k: v for k, v in self.overrides.items()})
        out["seed"] = self.seed
        return out
