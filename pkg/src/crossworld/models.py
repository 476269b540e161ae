"""Built-in structural models and the model registry."""
from __future__ import annotations

import numpy as np
from scipy.special import expit, ndtri

from .dgp import StructuralModel

_SQRT2PI = np.sqrt(2.0 * np.pi)


def _normal_pdf(z, sd=1.0):
    z = np.asarray(z) / sd
    return np.exp(-0.5 * z * z) / (_SQRT2PI * sd)


def _unit_interval(x):
    x = np.asarray(x)
    return ((x >= 0.0) & (x <= 1.0)).astype(np.float64)


class DisjointSupport(StructuralModel):
    """X1 ~ Unif(0,1), A1 ~ Bern(0.5), X2 = A1, A2 ~ Bern(0.5).

    No positivity violation, but X2 | A1=1 and X2 | A1=0 have disjoint
    support. The outcome ``Y = X1 + effect*(A1 + A2) + N(0,1)`` carries a
    real unit-level effect. ``discrete=True`` replaces X1 by Bern(0.5) so the
    model can be enumerated.
    """

    horizon = 2
    counterexample = True

    def __init__(self, effect: float = 1.0, discrete: bool = False):
        self.effect = float(effect)
        self.discrete = bool(discrete)
        self.name = "example1_discrete" if discrete else "example1"

    def covariate(self, t, x_prev, a_prev, u):
        if t == 1:
            return (u[:, 0] < 0.5).astype(float) if self.discrete else u[:, 0]
        return a_prev[:, -1].astype(float)

    def propensity(self, t, x_hist, a_prev):
        return np.full(x_hist.shape[0], 0.5)

    def outcome(self, x_hist, a_hist, u):
        return self.outcome_mean(x_hist, a_hist) + ndtri(u[:, 0])

    def outcome_mean(self, x_hist, a_hist):
        return x_hist[:, 0, 0] + self.effect * a_hist.sum(axis=1)

    def covariate_density(self, t, x_t, x_prev, a_prev):
        x = np.asarray(x_t).reshape(-1)
        if t == 1:
            if self.discrete:
                return np.where((x == 0) | (x == 1), 0.5, 0.0)
            return _unit_interval(x)
        return (x == a_prev[:, -1]).astype(float)

    def covariate_support(self, t):
        if t == 1 and not self.discrete:
            return super().covariate_support(t)
        return np.array([[0.0], [1.0]])


class DeterministicTreatment(StructuralModel):
    """X1 ~ Unif(0,1), A1 = 1(X1 > 0.2), X2 ~ Unif(0,1), A2 ~ Bern{1(X1 X2 - A1 > 0.2)}.

    Full covariate overlap (density ratio identically 1) with deterministic
    treatment assignment, i.e. positivity fails on sets of positive probability.
    """

    name = "example2"
    horizon = 2

    def covariate(self, t, x_prev, a_prev, u):
        return u[:, 0]

    def propensity(self, t, x_hist, a_prev):
        if t == 1:
            return (x_hist[:, 0, 0] > 0.2).astype(float)
        return (x_hist[:, 0, 0] * x_hist[:, 1, 0] - a_prev[:, 0] > 0.2).astype(float)

    def outcome(self, x_hist, a_hist, u):
        return self.outcome_mean(x_hist, a_hist) + ndtri(u[:, 0])

    def outcome_mean(self, x_hist, a_hist):
        return x_hist[:, :, 0].sum(axis=1) + a_hist.sum(axis=1)

    def covariate_density(self, t, x_t, x_prev, a_prev):
        return _unit_interval(np.asarray(x_t).reshape(-1))


class GaussianPanel(StructuralModel):
    """Linear-Gaussian covariates with logistic treatment assignment.

    X1 ~ N(0,1);  X_t = bx X_{t-1} + ba A_{t-1} + N(0,1)
    P(A_1=1) = expit(g0 + gx X1);  P(A_t=1) = expit(g0 + gx X1 + ga A_{t-1})
    Y = c0 + cx1 X1 + cx sum_{t>=2} X_t + ca sum_t A_t + N(0, sy^2)

    Treatment depends on the history only through the baseline covariate and
    past treatment, so the natural propensities along two worlds coincide with
    the observed-data propensities evaluated on a single world; the
    cross-world estimand and the identified functional then agree.
    """

    def __init__(self, name="gaussian", horizon=2, bx=0.5, ba=0.8, g0=-0.3, gx=1.2, ga=0.8,
                 c0=1.0, cx1=0.8, cx=0.6, ca=1.0, sy=1.0):
        self.name = name
        self.horizon = int(horizon)
        self.bx, self.ba = float(bx), float(ba)
        self.g0, self.gx, self.ga = float(g0), float(gx), float(ga)
        self.c0, self.cx1, self.cx, self.ca, self.sy = map(float, (c0, cx1, cx, ca, sy))

    def _mean(self, t, x_prev, a_prev):
        if t == 1:
            return np.zeros(x_prev.shape[0])
        return self.bx * x_prev[:, -1, 0] + self.ba * a_prev[:, -1]

    def covariate(self, t, x_prev, a_prev, u):
        return self._mean(t, x_prev, a_prev) + ndtri(u[:, 0])

    def propensity(self, t, x_hist, a_prev):
        lin = self.g0 + self.gx * x_hist[:, 0, 0]
        if t > 1:
            lin = lin + self.ga * a_prev[:, -1]
        return expit(lin)

    def outcome(self, x_hist, a_hist, u):
        return self.outcome_mean(x_hist, a_hist) + self.sy * ndtri(u[:, 0])

    def outcome_mean(self, x_hist, a_hist):
        return (self.c0 + self.cx1 * x_hist[:, 0, 0] + self.cx * x_hist[:, 1:, 0].sum(axis=1)
                + self.ca * a_hist.sum(axis=1))

    def covariate_density(self, t, x_t, x_prev, a_prev):
        x = np.asarray(x_t).reshape(-1)
        return _normal_pdf(x - self._mean(t, x_prev, a_prev))


class BinaryPanel(StructuralModel):
    """Fully discrete panel with one binary covariate per time point.

    X1 ~ Bern(q1);  X_t ~ Bern{expit(b0 + bx X_{t-1} + ba A_{t-1})}
    P(A_1=1 | X1) = p1[X1];  P(A_t=1 | H_t) = pt[X1][A_{t-1}]
    Y = c0 + cx sum_t X_t + ca sum_t A_t + N(0,1)

    Every covariate path has positive probability under every regime.
    Propensity tables may contain exact zeros to create positivity violations.
    """

    discrete = True

    def __init__(self, name="discrete", horizon=2, q1=0.5, b0=-0.4, bx=0.8, ba=0.9,
                 p1=(0.35, 0.65), pt=((0.3, 0.6), (0.45, 0.75)), c0=0.0, cx=1.0, ca=1.0):
        self.name = name
        self.horizon = int(horizon)
        self.q1, self.b0, self.bx, self.ba = float(q1), float(b0), float(bx), float(ba)
        self.p1 = np.asarray(p1, dtype=float)
        self.pt = np.asarray(pt, dtype=float)
        self.c0, self.cx, self.ca = float(c0), float(cx), float(ca)

    def _p_x1(self, t, x_prev, a_prev):
        if t == 1:
            return np.full(x_prev.shape[0], self.q1)
        return expit(self.b0 + self.bx * x_prev[:, -1, 0] + self.ba * a_prev[:, -1])

    def covariate(self, t, x_prev, a_prev, u):
        return (u[:, 0] < self._p_x1(t, x_prev, a_prev)).astype(float)

    def propensity(self, t, x_hist, a_prev):
        x1 = x_hist[:, 0, 0].astype(int)
        if t == 1:
            return self.p1[x1]
        return self.pt[x1, a_prev[:, -1].astype(int)]

    def outcome(self, x_hist, a_hist, u):
        return self.outcome_mean(x_hist, a_hist) + ndtri(u[:, 0])

    def outcome_mean(self, x_hist, a_hist):
        return self.c0 + self.cx * x_hist[:, :, 0].sum(axis=1) + self.ca * a_hist.sum(axis=1)

    def covariate_density(self, t, x_t, x_prev, a_prev):
        x = np.asarray(x_t).reshape(-1)
        p = self._p_x1(t, x_prev, a_prev)
        return np.where(x == 1, p, np.where(x == 0, 1.0 - p, 0.0))

    def covariate_support(self, t):
        return np.array([[0.0], [1.0]])


class HalfOverlap(StructuralModel):
    """Covariate overlap on exactly half of the baseline distribution.

    X1 ~ Unif(0,1), A1 ~ Bern(0.5), X2 = U + A1 * 1(X1 < 0.5) with U ~ Unif(0,1),
    A2 ~ Bern(0.5), Y = X2 + A1 + A2 + N(0,1).  For X1 >= 0.5 the density
    ratio at t=2 is 1, otherwise it is 0 or infinite.
    """

    name = "half_overlap"
    horizon = 2

    def covariate(self, t, x_prev, a_prev, u):
        if t == 1:
            return u[:, 0]
        return u[:, 0] + a_prev[:, 0] * (x_prev[:, 0, 0] < 0.5)

    def propensity(self, t, x_hist, a_prev):
        return np.full(x_hist.shape[0], 0.5)

    def outcome(self, x_hist, a_hist, u):
        return self.outcome_mean(x_hist, a_hist) + ndtri(u[:, 0])

    def outcome_mean(self, x_hist, a_hist):
        return x_hist[:, 1, 0] + a_hist.sum(axis=1)

    def covariate_density(self, t, x_t, x_prev, a_prev):
        x = np.asarray(x_t).reshape(-1)
        if t == 1:
            return _unit_interval(x)
        shift = a_prev[:, 0] * (x_prev[:, 0, 0] < 0.5)
        return _unit_interval(x - shift)


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------

def _moderate_overlap(**kw):
    return GaussianPanel(name="moderate_overlap", **kw)


def _null_effect(**kw):
    # outcome depends on the baseline covariate only, so Y(a) = Y(a') pointwise
    params = dict(cx=0.0, ca=0.0)
    params.update(kw)
    return GaussianPanel(name="null_effect", **params)


def _discrete(**kw):
    return BinaryPanel(name="discrete", **kw)


def _monotone_discrete(**kw):
    params = dict(p1=(0.0, 0.6), pt=((0.2, 0.5), (0.4, 0.7)), cx=0.5, ca=2.0)
    params.update(kw)
    return BinaryPanel(name="monotone_discrete", **params)


REGISTRY = {
    "example1": (lambda **kw: DisjointSupport(discrete=False, **kw),
                 "X1~Unif(0,1), X2=A1: disjoint covariate support, no positivity violation"),
    "example1_discrete": (lambda **kw: DisjointSupport(discrete=True, **kw),
                          "example1 with X1~Bern(0.5); enumerable"),
    "example2": (lambda **kw: DeterministicTreatment(**kw),
                 "deterministic treatment, full covariate overlap (density ratio 1)"),
    "null_effect": (_null_effect, "Gaussian panel whose outcome ignores all treatments"),
    "moderate_overlap": (_moderate_overlap,
                         "Gaussian panel, logistic propensities, known nonzero effect"),
    "discrete": (_discrete, "binary covariates, strictly positive propensities; enumerable"),
    "monotone_discrete": (_monotone_discrete,
                          "binary covariates, Y(1..1) > Y(0..0) a.s., partial overlap; enumerable"),
    "half_overlap": (lambda **kw: HalfOverlap(**kw),
                     "covariate overlap on exactly half of the baseline distribution"),
}


def get_model(name: str, params: dict | None = None) -> StructuralModel:
    """Instantiate a registered model, e.g. ``get_model("discrete", {"horizon": 3})``."""
    if isinstance(name, dict):
        params = {k: v for k, v in name.items() if k != "model"}
        name = name["model"]
    try:
        factory, _ = REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown model {name!r}; available: {sorted(REGISTRY)}") from None
    return factory(**(params or {}))


def list_models() -> list[dict]:
    out = []
    for name, (factory, doc) in REGISTRY.items():
        m = factory()
        out.append({**m.describe(), "name": name, "description": doc})
    return out
