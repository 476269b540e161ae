"""Ground truth: cross-world Monte Carlo of the estimand, exact enumeration and
single-world Monte Carlo of the identified g-formula contrast, true nuisances,
support diagnostics and the golden-value manifest.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from itertools import product
from pathlib import Path

import numpy as np

from .dgp import (OracleUnavailable, StructuralModel, _checked_propensity, _run_world,
                  draw_noise, simulate_cross_world, simulate_observational, true_density_ratio,
                  true_propensity)
from .models import get_model
from .nuisance import ContrastNuisances, NuisanceSet
from .panel import Regime
from .weights import WeightSpec

MC_CHUNK = 250_000


@dataclass(frozen=True)
class OracleResult:
    value: float
    standard_error: float
    method: str      # "enumeration" | "monte_carlo"
    draws: int
    halves: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"value": self.value, "standard_error": self.standard_error,
                "method": self.method, "draws": self.draws, "halves": self.halves}


def _setup(model, regime_a, regime_b, weight_spec):
    if isinstance(model, (str, dict)):
        model = get_model(model)
    ra, rb = Regime.parse(regime_a), Regime.parse(regime_b)
    for r in (ra, rb):
        if len(r) != model.horizon:
            raise ValueError(f"regime length {len(r)} does not match model horizon {model.horizon}")
    if not isinstance(weight_spec, WeightSpec):
        weight_spec = WeightSpec.from_config(weight_spec, model.horizon)
    if weight_spec.horizon != model.horizon:
        raise ValueError(f"weight spec horizon {weight_spec.horizon} does not match model "
                         f"horizon {model.horizon}")
    return model, ra, rb, weight_spec


def _chunks(draws: int, seed: int):
    # fixed chunk size keeps results independent of memory settings
    for c, start in enumerate(range(0, draws, MC_CHUNK)):
        yield c, min(MC_CHUNK, draws - start), int(np.random.SeedSequence([seed, c]).generate_state(1)[0])


def _mc_result(values: list, draws: int, halves=None) -> OracleResult:
    v = np.concatenate(values)
    se = float(np.std(v) / np.sqrt(draws))
    return OracleResult(float(np.mean(v)), se, "monte_carlo", draws, halves or {})


def estimand_mc(model, regime_a, regime_b, weight_spec, draws: int = 10**6,
                seed: int = 0) -> OracleResult:
    """Cross-world Monte Carlo of E[(Y(a) - Y(b)) prod_t w_t(p_t along world a) w'_t(p_t along world b)].

    Natural propensities are the model's structural propensities evaluated at
    the counterfactual histories of each world.
    """
    model, ra, rb, spec = _setup(model, regime_a, regime_b, weight_spec)
    if ra == rb:
        return OracleResult(0.0, 0.0, "monte_carlo", draws)
    T = model.horizon
    vals = []
    for _, n, s in _chunks(draws, seed):
        cw = simulate_cross_world(model, ra, rb, n, s)
        wa, wb = cw.world_a, cw.world_b
        prod_w = np.ones(n)
        for t in range(1, T + 1):
            pa = _checked_propensity(model, t, wa.X[:, :t], np.tile(ra.actions[:t - 1], (n, 1)))
            pb = _checked_propensity(model, t, wb.X[:, :t], np.tile(rb.actions[:t - 1], (n, 1)))
            pa = pa if ra.actions[t - 1] == 1 else 1.0 - pa
            pb = pb if rb.actions[t - 1] == 1 else 1.0 - pb
            w, wp = spec.pairs[t - 1]
            prod_w = prod_w * w(pa) * wp(pb)
        vals.append((wa.Y - wb.Y) * prod_w)
    return _mc_result(vals, draws)


def _path_weights(model, X, target: Regime, other: Regime, spec: WeightSpec) -> np.ndarray:
    """Per-t weight W_t = w_t(pi_t) w'_t(pi'_t) at covariate histories X, shape (n, T)."""
    n, T = X.shape[0], model.horizon
    W = np.empty((n, T))
    for t in range(1, T + 1):
        pi = true_propensity(model, t, X[:, :t], np.tile(target.actions[:t - 1], (n, 1)),
                             target.actions[t - 1])
        pio = true_propensity(model, t, X[:, :t], np.tile(other.actions[:t - 1], (n, 1)),
                              other.actions[t - 1])
        w, wp = spec.pairs[t - 1]
        W[:, t - 1] = w(pi) * wp(pio)
    return W


def identified_mc(model, regime_a, regime_b, weight_spec, draws: int = 10**6,
                  seed: int = 0) -> OracleResult:
    """Single-world Monte Carlo of the identified contrast.

    psi(a) = E[Y(a) prod_t W_t(X_1(a)..X_t(a))] with W_t built from the
    observed-data propensities (zero convention included); psi(b) likewise
    with the weight pair's roles exchanged. Both halves share the noise.
    """
    model, ra, rb, spec = _setup(model, regime_a, regime_b, weight_spec)
    if ra == rb:
        return OracleResult(0.0, 0.0, "monte_carlo", draws)
    vals, ha, hb = [], [], []
    for _, n, s in _chunks(draws, seed):
        noise = draw_noise(model, n, s)
        wa = _run_world(model, noise, ra)
        wb = _run_world(model, noise, rb)
        ya = wa.Y * np.prod(_path_weights(model, wa.X, ra, rb, spec), axis=1)
        yb = wb.Y * np.prod(_path_weights(model, wb.X, rb, ra, spec.swapped()), axis=1)
        vals.append(ya - yb)
        ha.append(ya)
        hb.append(yb)
    return _mc_result(vals, draws, {"psi_a": float(np.mean(np.concatenate(ha))),
                                    "psi_b": float(np.mean(np.concatenate(hb)))})


def _require_discrete(model: StructuralModel):
    if not model.discrete:
        raise OracleUnavailable(f"enumeration needs a discrete model; {model.name!r} is not")


def enumerate_g_formula(model, target, other, weight_spec) -> float:
    """Exact psi(target): sum over covariate paths of
    prod_t p(x_t | x_1..x_{t-1}, target prefix) W_t(x_1..x_t) * E[Y | x, target].

    Depth-first, pruning a branch as soon as its running product is exactly 0.
    """
    _require_discrete(model)
    target, other = Regime.parse(target), Regime.parse(other)
    T, d = model.horizon, model.covariate_dim
    acts = target.as_array()[None, :].astype(np.int8)

    def rec(t: int, x_prev: np.ndarray, mass: float) -> float:
        total = 0.0
        for x_t in model.covariate_support(t):
            x = np.concatenate([x_prev, x_t.reshape(1, 1, d)], axis=1)
            p = float(model.covariate_density(t, x_t.reshape(1, d), x_prev, acts[:, :t - 1])[0])
            if p == 0.0:
                continue
            W = (_path_weights_prefix(model, x, target, other, weight_spec, t))
            run = mass * p * W
            if run == 0.0:
                continue
            if t == T:
                total += run * float(model.outcome_mean(x, acts)[0])
            else:
                total += rec(t + 1, x, run)
        return total

    return rec(1, np.zeros((1, 0, d)), 1.0)


def _path_weights_prefix(model, x, target: Regime, other: Regime, spec: WeightSpec, t: int):
    pi = true_propensity(model, t, x, np.asarray(target.actions[:t - 1])[None, :], target.actions[t - 1])
    pio = true_propensity(model, t, x, np.asarray(other.actions[:t - 1])[None, :], other.actions[t - 1])
    w, wp = spec.pairs[t - 1]
    return float((w(pi) * wp(pio))[0])


def identified_enumeration(model, regime_a, regime_b, weight_spec) -> OracleResult:
    """Exact identified contrast psi(a) - psi(b) on a discrete model (SE = 0)."""
    model, ra, rb, spec = _setup(model, regime_a, regime_b, weight_spec)
    _require_discrete(model)
    psi_a = enumerate_g_formula(model, ra, rb, spec)
    psi_b = psi_a if ra == rb else enumerate_g_formula(model, rb, ra, spec.swapped())
    return OracleResult(psi_a - psi_b, 0.0, "enumeration", 0, {"psi_a": psi_a, "psi_b": psi_b})


# ---------------------------------------------------------------------------
# exact nuisances
# ---------------------------------------------------------------------------

def _exact_regressions(model, X: np.ndarray, target: Regime, other: Regime,
                       spec: WeightSpec) -> np.ndarray:
    """m_t(x_1..x_t) for t = 1..T at every row of X, by enumerating futures."""
    _require_discrete(model)
    T, d = model.horizon, model.covariate_dim
    acts = target.as_array()[None, :].astype(np.int8)
    memo: dict = {}

    def m(x: np.ndarray, t: int) -> float:
        key = (t, x.tobytes())
        if key in memo:
            return memo[key]
        if t == T:
            val = float(model.outcome_mean(x, acts)[0])
        else:
            val = 0.0
            for x_n in model.covariate_support(t + 1):
                p = float(model.covariate_density(t + 1, x_n.reshape(1, d), x, acts[:, :t])[0])
                if p == 0.0:
                    continue
                xx = np.concatenate([x, x_n.reshape(1, 1, d)], axis=1)
                W = (_path_weights_prefix(model, xx, target, other, spec, t + 1))
                if W != 0.0:
                    val += p * W * m(xx, t + 1)
        memo[key] = val
        return val

    out = np.empty((X.shape[0], T))
    for i in range(X.shape[0]):
        for t in range(1, T + 1):
            out[i, t - 1] = m(np.ascontiguousarray(X[i:i + 1, :t]), t)
    return out


def true_nuisance_set(model, X: np.ndarray, target, other, weight_spec: WeightSpec,
                      _unique: bool = False) -> NuisanceSet:
    """True pi, pi', rho and m at the covariate histories ``X`` (n, T, d)."""
    target, other = Regime.parse(target), Regime.parse(other)
    if model.discrete and not _unique:
        # evaluate on distinct histories only
        flat = X.reshape(X.shape[0], -1)
        uniq, inv = np.unique(flat, axis=0, return_inverse=True)
        if uniq.shape[0] < X.shape[0]:
            u = true_nuisance_set(model, uniq.reshape(-1, *X.shape[1:]) + 0.0, target, other,
                                  weight_spec, _unique=True)
            inv = inv.ravel()
            return NuisanceSet(u.pi[inv], u.pi_other[inv], u.rho[inv], u.m[inv])
    n, T = X.shape[0], model.horizon
    pi, pio, rho = np.empty((n, T)), np.empty((n, T)), np.ones((n, T))
    for t in range(1, T + 1):
        pi[:, t - 1] = true_propensity(model, t, X[:, :t], np.tile(target.actions[:t - 1], (n, 1)),
                                       target.actions[t - 1])
        pio[:, t - 1] = true_propensity(model, t, X[:, :t], np.tile(other.actions[:t - 1], (n, 1)),
                                        other.actions[t - 1])
        if t > 1:
            rho[:, t - 1] = true_density_ratio(model, t, X[:, :t],
                                               np.tile(target.actions[:t - 1], (n, 1)),
                                               np.tile(other.actions[:t - 1], (n, 1)))
    m = _exact_regressions(model, X, target, other, weight_spec)
    return NuisanceSet(pi, pio, rho, m)


def oracle_nuisances(model, X: np.ndarray, regime_a, regime_b, weight_spec) -> ContrastNuisances:
    """True nuisances for both halves of a contrast on a discrete model."""
    model, ra, rb, spec = _setup(model, regime_a, regime_b, weight_spec)
    half_a = true_nuisance_set(model, X, ra, rb, spec)
    half_b = half_a if ra == rb else true_nuisance_set(model, X, rb, ra, spec.swapped())
    return ContrastNuisances(half_a, half_b, {"oracle": True})


@dataclass(frozen=True)
class ObservedPaths:
    """Every observed (X, A) path of a discrete model with its probability and E[Y | path]."""

    X: np.ndarray      # (m, T, d)
    A: np.ndarray      # (m, T)
    prob: np.ndarray   # (m,)
    y_mean: np.ndarray  # (m,)


def observed_paths(model) -> ObservedPaths:
    model = get_model(model) if isinstance(model, (str, dict)) else model
    _require_discrete(model)
    T, d = model.horizon, model.covariate_dim
    xs, as_, ps = [], [], []
    supports = [model.covariate_support(t) for t in range(1, T + 1)]
    for xpath in product(*[range(len(s)) for s in supports]):
        X = np.stack([supports[t][xpath[t]] for t in range(T)])[None]  # (1, T, d)
        for apath in product((0, 1), repeat=T):
            A = np.asarray(apath, dtype=np.int8)[None]
            p = 1.0
            for t in range(1, T + 1):
                p *= float(model.covariate_density(t, X[:, t - 1], X[:, :t - 1], A[:, :t - 1])[0])
                if p == 0.0:
                    break
                p1 = float(model.propensity(t, X[:, :t], A[:, :t - 1])[0])
                p *= p1 if apath[t - 1] == 1 else 1.0 - p1
                if p == 0.0:
                    break
            if p > 0.0:
                xs.append(X[0])
                as_.append(A[0])
                ps.append(p)
    X = np.asarray(xs).reshape(-1, T, d)
    A = np.asarray(as_, dtype=np.int8)
    return ObservedPaths(X, A, np.asarray(ps), np.asarray(model.outcome_mean(X, A), dtype=float))


# ---------------------------------------------------------------------------
# support diagnostic
# ---------------------------------------------------------------------------

def _quantiles(x: np.ndarray) -> dict:
    # no interpolation, so infinite ratios give inf rather than nan
    q = np.quantile(x, [0.0, 0.25, 0.5, 0.75, 1.0], method="inverted_cdf")
    with np.errstate(invalid="ignore"):
        mean = float(np.mean(x))
    return {"min": float(q[0]), "q25": float(q[1]), "median": float(q[2]), "mean": mean,
            "q75": float(q[3]), "max": float(q[4])}


def support_diagnostic(source, t: int = 2, regime_a=None, regime_b=None, draws: int = 10**5,
                       seed: int = 0, ceiling: float = np.inf) -> dict:
    """Share of evaluation points with rho_t strictly inside (0, ceiling), plus quantiles.

    ``source`` is either an array of rho values (e.g. fitted values, use
    ``ceiling=rho_max``) or a model, whose true ratio is evaluated at ``draws``
    observational histories. Regimes default to all-ones versus all-zeros.
    """
    if isinstance(source, (StructuralModel, str, dict)):
        model = get_model(source) if isinstance(source, (str, dict)) else source
        T = model.horizon
        ra = Regime.parse(regime_a) if regime_a is not None else Regime((1,) * T)
        rb = Regime.parse(regime_b) if regime_b is not None else Regime((0,) * T)
        data = simulate_observational(model, draws, seed)
        n = data.n
        rho = true_density_ratio(model, t, data.X[:, :t], np.tile(ra.actions[:t - 1], (n, 1)),
                                 np.tile(rb.actions[:t - 1], (n, 1)))
    else:
        rho = np.asarray(source, dtype=float).ravel()
    share = float(np.mean((rho > 0) & (rho < ceiling)))
    return {"t": t, "share": share, "n": int(rho.size), **_quantiles(rho)}


# ---------------------------------------------------------------------------
# golden manifest
# ---------------------------------------------------------------------------

GOLDEN_ENTRIES = [
    {"model": "moderate_overlap", "regimes": ["11", "00"],
     "weights": {"preset": "smooth_trim", "k": 20}, "seed": 20240101, "draws": 10**6},
    {"model": "null_effect", "regimes": ["11", "00"],
     "weights": {"preset": "smooth_trim", "k": 20}, "seed": 20240102, "draws": 10**6},
]


def golden_path() -> Path:
    return Path(str(resources.files("crossworld") / "data" / "golden.json"))


def load_golden(path=None) -> list[dict]:
    with open(path or golden_path()) as fh:
        return json.load(fh)


def golden_value(model: str, regimes, weights=None, path=None) -> dict:
    regimes = [str(Regime.parse(r)) for r in regimes]
    for e in load_golden(path):
        if e["model"] == model and e["regimes"] == regimes and (weights is None or e["weights"] == weights):
            return e
    raise KeyError(f"no golden value for {model} {regimes}")


def regen_golden(path=None, entries=None) -> list[dict]:
    """Recompute every golden value with the cross-world Monte Carlo oracle and write the manifest."""
    out = []
    for e in entries or GOLDEN_ENTRIES:
        model = get_model(e["model"])
        spec = WeightSpec.from_config(e["weights"], model.horizon)
        res = estimand_mc(model, e["regimes"][0], e["regimes"][1], spec, e["draws"], e["seed"])
        out.append({**e, "value": res.value, "se": res.standard_error})
    with open(path or golden_path(), "w") as fh:
        json.dump(out, fh, indent=2)
        fh.write("\n")
    return out
