"""Efficient-influence-function based estimation of weighted g-formula contrasts.

Notation for one half (target regime a, other regime b, weight pair (w, w')):

    W_t  = w_t(pi_t) w'_t(pi'_t)
    r_t  = 1(A_t = a_t) W_t / pi_t,     r'_t = 1(A_t = b_t) W_t / pi'_t
    phi_t  = dw_t(pi_t) (1(A_t = a_t) - pi_t)
    phi'_t = dw'_t(pi'_t) (1(A_t = b_t) - pi'_t)

    phi_m = m_1 W_1 + sum_t (prod_{s<=t} r_s) (m_{t+1} W_{t+1} - m_t),  m_{T+1} W_{T+1} = Y
    phi_w = sum_t (prod_{s<t} r_s) m_t phi_t w'_t(pi'_t)
          + sum_t (prod_{s<t} r'_s rho_s) m_t w_t(pi_t) rho_t phi'_t

A product with a zero factor is zero even if another factor is infinite.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .nuisance import ContrastNuisances, NuisanceSet, fit_nuisances, RHO_MAX, RATIO_FLOOR
from .panel import PanelDataset, Regime, Trajectory
from .weights import DIVISOR_CLIP, WeightError, WeightSpec, effective_sample_size


class EstimationError(ValueError):
    pass


class DegenerateVarianceWarning(UserWarning):
    pass


def _zmul(a, b):
    """Elementwise product with 0 * inf = 0."""
    with np.errstate(invalid="ignore"):
        out = np.multiply(a, b)
    return np.where((np.asarray(a) == 0) | (np.asarray(b) == 0), 0.0, out)


@dataclass(frozen=True)
class EifTerms:
    phi_m: np.ndarray
    phi_w: np.ndarray
    phi: np.ndarray
    r: np.ndarray           # (n, T)
    r_other: np.ndarray
    rho: np.ndarray
    phi_t: np.ndarray
    phi_t_other: np.ndarray
    m: np.ndarray
    W: np.ndarray


def _as_arrays(data):
    if isinstance(data, PanelDataset):
        return data.A, data.Y
    if isinstance(data, Trajectory):
        return np.asarray([data.treatments]), np.asarray([data.outcome], dtype=float)
    A, Y = data
    return np.atleast_2d(np.asarray(A)), np.atleast_1d(np.asarray(Y, dtype=float))


def eval_eif(data, regime_a, regime_b, nuisances: NuisanceSet, weight_spec: WeightSpec,
             clip: float = DIVISOR_CLIP) -> EifTerms:
    """Uncentred influence function values of psi(a) for every unit.

    ``data`` is a PanelDataset or Trajectory (or an ``(A, Y)`` tuple); the
    nuisance arrays must be aligned with its units.
    """
    if not weight_spec.smooth:
        raise WeightError("non-smooth weight has no derivative; use plug_in_estimate")
    if nuisances is None:
        raise EstimationError("missing nuisances")
    A, Y = _as_arrays(data)
    ra, rb = Regime.parse(regime_a).as_array(), Regime.parse(regime_b).as_array()
    n, T = A.shape
    if nuisances.pi.shape != (n, T):
        raise EstimationError(f"nuisance shape {nuisances.pi.shape} does not match data {(n, T)}")
    if weight_spec.horizon != T or ra.size != T or rb.size != T:
        raise EstimationError("regime/weight horizon does not match data")
    pi, pio, rho, m = nuisances.pi, nuisances.pi_other, nuisances.rho, nuisances.m

    W = np.empty((n, T))
    r = np.empty((n, T))
    ro = np.empty((n, T))
    ph = np.empty((n, T))
    pho = np.empty((n, T))
    wt = np.empty((n, T))
    wo = np.empty((n, T))
    for t, (w, wp) in enumerate(weight_spec.pairs):
        wt[:, t], wo[:, t] = w(pi[:, t]), wp(pio[:, t])
        W[:, t] = wt[:, t] * wo[:, t]
        ia, ib = A[:, t] == ra[t], A[:, t] == rb[t]
        live = W[:, t] > 0
        if np.any(live & ((pi[:, t] == 0) | (pio[:, t] == 0))):
            raise WeightError("unbounded ratio: weight pair violates condition 1")
        r[:, t] = np.where(live & ia, W[:, t] / np.maximum(pi[:, t], clip), 0.0)
        ro[:, t] = np.where(live & ib, W[:, t] / np.maximum(pio[:, t], clip), 0.0)
        ph[:, t] = w.deriv(pi[:, t]) * (ia - pi[:, t])
        pho[:, t] = wp.deriv(pio[:, t]) * (ib - pio[:, t])

    # m_{t+1} W_{t+1} with the terminal convention
    nxt = np.column_stack([m[:, 1:] * W[:, 1:], Y]) if T > 1 else Y[:, None]
    cum_r = np.cumprod(r, axis=1)                              # prod_{s<=t}
    prev_r = np.column_stack([np.ones(n), cum_r[:, :-1]])      # prod_{s<t}
    phi_m = m[:, 0] * W[:, 0] + np.sum(cum_r * (nxt - m), axis=1)

    first = np.sum(prev_r * m * ph * wo, axis=1)
    g = np.ones(n)  # prod_{s<t} r'_s rho_s
    second = np.zeros(n)
    for t in range(T):
        term = _zmul(_zmul(g, rho[:, t]), m[:, t] * wt[:, t] * pho[:, t])
        second = second + term
        g = _zmul(g, _zmul(ro[:, t], rho[:, t]))
    phi_w = first + second
    phi = phi_m + phi_w
    if not np.all(np.isfinite(phi)):
        bad = int(np.argmax(~np.isfinite(phi)))
        raise EstimationError(f"non-finite influence function value at unit {bad}")
    return EifTerms(phi_m, phi_w, phi, r, ro, rho, ph, pho, m, W)


def _summary(x) -> list:
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return [None] * 6
    q = np.quantile(x, [0.0, 0.25, 0.5, 0.75, 1.0], method="inverted_cdf")
    return [float(q[0]), float(q[1]), float(q[2]), float(np.mean(x)), float(q[3]), float(q[4])]


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if np.isnan(v):
            return "nan"
        if np.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return v


@dataclass
class EstimateReport:
    """Point estimate, variance and normal confidence interval with diagnostics.

    ``sigma2`` is the empirical variance of the influence function values,
    so the standard error is ``sqrt(sigma2 / n)``.  Plug-in reports have
    ``valid_inference=False`` and no variance.
    """

    psi_hat: float
    sigma2: float | None
    ci: tuple | None
    n: int
    alpha: float
    estimand: str
    regimes: tuple
    method: str = "dr"
    valid_inference: bool = True
    halves: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    eif: np.ndarray | None = field(default=None, repr=False)

    @property
    def se(self) -> float | None:
        return None if self.sigma2 is None else float(np.sqrt(self.sigma2 / self.n))

    def to_dict(self) -> dict:
        out = {
            "psi_hat": self.psi_hat, "sigma2": self.sigma2, "se": self.se,
            "ci": None if self.ci is None else list(self.ci), "n": self.n, "alpha": self.alpha,
            "estimand": self.estimand, "regimes": [str(r) for r in self.regimes],
            "method": self.method, "valid_inference": self.valid_inference,
            "halves": self.halves, "diagnostics": self.diagnostics,
        }
        if not self.valid_inference:
            out["note"] = "no valid inference"
        return _jsonable(out)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=kw.pop("indent", 2), **kw)


def _report(phi, alpha, estimand, regimes, folds, diagnostics, halves) -> EstimateReport:
    n = phi.size
    psi = float(np.mean(phi))
    sigma2 = float(np.mean((phi - psi) ** 2))
    if sigma2 == 0.0:
        warnings.warn("estimated variance is zero; confidence interval has width 0",
                      DegenerateVarianceWarning, stacklevel=3)
    half = norm.ppf(1 - alpha / 2) * np.sqrt(sigma2 / n)
    diag = dict(diagnostics)
    if folds is not None:
        diag["fold_estimates"] = [float(np.mean(phi[folds == k])) for k in range(int(folds.max()) + 1)]
    return EstimateReport(psi, sigma2, (float(psi - half), float(psi + half)), n, alpha, estimand,
                          tuple(regimes), halves=halves, diagnostics=diag, eif=phi)


def _weight_diagnostics(W: np.ndarray, rho: np.ndarray) -> dict:
    cum = np.cumprod(W, axis=1)
    ess = []
    for t in range(cum.shape[1]):
        try:
            ess.append(effective_sample_size(cum[:, t]))
        except WeightError:
            ess.append(0.0)
    return {"ess": ess,
            "weight_quantiles": [_summary(cum[:, t]) for t in range(cum.shape[1])],
            "rho_quantiles": [_summary(rho[:, t]) for t in range(1, rho.shape[1])]}


def _clip_counts(nuis: ContrastNuisances, clip: float) -> dict:
    out = dict(nuis.diagnostics)
    small = 0
    for h in (nuis.half_a, nuis.half_b):
        small += int(np.sum((h.pi < clip) & (h.pi > 0)))
    out["propensity_divisor"] = small
    return out


def _prepare(data, regime_a, regime_b, weight_spec, learner, folds, seed, nuisances,
             rho_max, floor, need_smooth=True):
    regime_a, regime_b = Regime.parse(regime_a), Regime.parse(regime_b)
    if not isinstance(weight_spec, WeightSpec):
        weight_spec = WeightSpec.from_config(weight_spec, data.horizon)
    if need_smooth and not weight_spec.smooth:
        raise WeightError("non-smooth weight has no derivative; the doubly robust estimator "
                          "needs smooth weights")
    for r in (regime_a, regime_b):
        if len(r) != data.horizon:
            raise EstimationError(f"regime length {len(r)} does not match data horizon {data.horizon}")
    if nuisances is None:
        k = int(folds) if np.isscalar(folds) else None
        fold_arr = None if k is not None else folds
        if k is not None and data.n < 2 * k:
            raise EstimationError(f"n={data.n} is too small for {k} folds (need n >= {2 * k})")
        nuisances = fit_nuisances(data, regime_a, regime_b, weight_spec, learner, fold_arr,
                                  seed=seed, rho_max=rho_max, floor=floor, n_folds=k or 5)
    return regime_a, regime_b, weight_spec, nuisances


def dr_estimate(data: PanelDataset, regime_a, regime_b, weight_spec, learner=None, folds=5,
                alpha: float = 0.05, *, seed: int = 0, nuisances: ContrastNuisances | None = None,
                rho_max: float = RHO_MAX, floor: float = RATIO_FLOOR) -> EstimateReport:
    """Cross-fitted estimate of the weighted g-formula psi(a) for ``regime_a``.

    ``folds`` is a fold count or an array of fold labels.  Pass
    ``nuisances`` to skip fitting (e.g. oracle nuisances).
    """
    ra, rb, spec, nuis = _prepare(data, regime_a, regime_b, weight_spec, learner, folds, seed,
                                  nuisances, rho_max, floor)
    terms = eval_eif(data, ra, rb, nuis.half_a, spec)
    diag = {**_weight_diagnostics(terms.W, nuis.half_a.rho), "clip_events": _clip_counts(nuis, DIVISOR_CLIP)}
    return _report(terms.phi, alpha, "psi", (ra,), nuis.half_a.folds, diag, {})


def dr_contrast(data: PanelDataset, regime_a, regime_b, weight_spec, learner=None, folds=5,
                alpha: float = 0.05, *, seed: int = 0, nuisances: ContrastNuisances | None = None,
                rho_max: float = RHO_MAX, floor: float = RATIO_FLOOR) -> EstimateReport:
    """Cross-fitted estimate of psi(a) - psi(b).

    The second half targets ``regime_b`` with ``regime_a`` as the other
    regime and the weight pair swapped; the variance is that of the
    per-unit difference of influence functions.
    """
    ra, rb, spec, nuis = _prepare(data, regime_a, regime_b, weight_spec, learner, folds, seed,
                                  nuisances, rho_max, floor)
    ta = eval_eif(data, ra, rb, nuis.half_a, spec)
    tb = ta if ra == rb else eval_eif(data, rb, ra, nuis.half_b, spec.swapped())
    phi = ta.phi - tb.phi
    diag = {**_weight_diagnostics(ta.W, nuis.half_a.rho), "clip_events": _clip_counts(nuis, DIVISOR_CLIP)}
    halves = {"psi_a": float(np.mean(ta.phi)), "psi_b": float(np.mean(tb.phi))}
    with warnings.catch_warnings():
        if ra == rb:
            warnings.simplefilter("ignore", DegenerateVarianceWarning)
        return _report(phi, alpha, "contrast", (ra, rb), nuis.half_a.folds, diag, halves)


def plug_in_estimate(data: PanelDataset, regime_a, regime_b, weight_spec, learner=None, folds=5,
                     *, contrast: bool = False, seed: int = 0,
                     nuisances: ContrastNuisances | None = None, rho_max: float = RHO_MAX,
                     floor: float = RATIO_FLOOR) -> EstimateReport:
    """Sequential-regression plug-in: mean of m_1 w_1(pi_1) w'_1(pi'_1).

    Accepts non-smooth weights.  The report carries no variance.
    """
    ra, rb, spec, nuis = _prepare(data, regime_a, regime_b, weight_spec, learner, folds, seed,
                                  nuisances, rho_max, floor, need_smooth=False)

    def half(h: NuisanceSet, s: WeightSpec) -> float:
        w, wp = s.pairs[0]
        return float(np.mean(h.m[:, 0] * w(h.pi[:, 0]) * wp(h.pi_other[:, 0])))

    psi_a = half(nuis.half_a, spec)
    if contrast:
        psi_b = psi_a if ra == rb else half(nuis.half_b, spec.swapped())
        psi, halves, regimes, est = psi_a - psi_b, {"psi_a": psi_a, "psi_b": psi_b}, (ra, rb), "contrast"
    else:
        psi, halves, regimes, est = psi_a, {}, (ra,), "psi"
    W = spec.product(nuis.half_a.pi, nuis.half_a.pi_other)
    return EstimateReport(psi, None, None, data.n, float("nan"), est, regimes, method="plug_in",
                          valid_inference=False, halves=halves,
                          diagnostics=_weight_diagnostics(W, nuis.half_a.rho))
