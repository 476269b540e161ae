"""Structural models with explicit exogenous noise, and their simulation.

Every variable is a deterministic function of its history and a block of
independent uniforms.  Treatments use a threshold on one uniform,
``A_t = 1{U_{A,t} < p_t(H_t)}``, so counterfactual worlds that share a noise
record are coupled exactly.

Time indices in this module are 1-based (``t = 1..T``) to match the usual
notation; arrays are of course 0-based.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .panel import PanelDataset, Regime

_X, _A, _Y = 0, 1, 2


class ModelError(ValueError):
    """A structural model produced an invalid value (e.g. a propensity outside [0, 1])."""


class OracleUnavailable(NotImplementedError):
    """The model does not expose the density information an oracle needs."""


class StructuralModel:
    """Base class for nonparametric structural equation models.

    Subclasses implement the vectorised structural maps below.  Histories
    are passed as ``x_hist`` of shape ``(n, s, d)`` and ``a_hist`` of shape
    ``(n, s')``.

    Oracle-grade models additionally implement :meth:`covariate_density`
    (pmf for discrete covariates) and, for exact enumeration,
    :meth:`covariate_support` and :meth:`outcome_mean`.
    """

    name = "model"
    horizon = 1
    covariate_dim = 1
    x_noise_dim = 1
    y_noise_dim = 1
    discrete = False
    # models where the identified functional is not the cross-world estimand
    counterexample = False

    # --- structural maps -------------------------------------------------
    def covariate(self, t: int, x_prev: np.ndarray, a_prev: np.ndarray,
                  u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def propensity(self, t: int, x_hist: np.ndarray, a_prev: np.ndarray) -> np.ndarray:
        """P(A_t = 1 | X_1..X_t, A_1..A_{t-1})."""
        raise NotImplementedError

    def outcome(self, x_hist: np.ndarray, a_hist: np.ndarray, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    # --- oracle information ---------------------------------------------
    def covariate_density(self, t: int, x_t: np.ndarray, x_prev: np.ndarray,
                          a_prev: np.ndarray) -> np.ndarray:
        raise OracleUnavailable(f"oracle density unavailable for model {self.name!r}")

    def covariate_support(self, t: int) -> np.ndarray:
        """Finite set of values X_t can take, shape (m, d). Discrete models only."""
        raise OracleUnavailable(f"model {self.name!r} is not discrete")

    def outcome_mean(self, x_hist: np.ndarray, a_hist: np.ndarray) -> np.ndarray:
        raise OracleUnavailable(f"outcome mean unavailable for model {self.name!r}")

    def is_reachable(self, t: int, x_hist: np.ndarray, a_prev: np.ndarray) -> np.ndarray:
        """Whether the event {X_1..X_t = x_hist, A_1..A_{t-1} = a_prev} has positive probability
        (or density).

        The default walks the history: every covariate transition needs positive
        density and every earlier treatment positive probability.
        """
        n = x_hist.shape[0]
        ok = np.ones(n, dtype=bool)
        for s in range(1, t + 1):
            dens = self.covariate_density(s, x_hist[:, s - 1], x_hist[:, :s - 1], a_prev[:, :s - 1])
            ok &= dens > 0
            if s < t:
                p1 = self.propensity(s, x_hist[:, :s], a_prev[:, :s - 1])
                ps = np.where(a_prev[:, s - 1] == 1, p1, 1.0 - p1)
                ok &= ps > 0
        return ok

    def describe(self) -> dict:
        return {"name": self.name, "horizon": self.horizon, "covariate_dim": self.covariate_dim,
                "discrete": self.discrete}


# ---------------------------------------------------------------------------
# noise streams
# ---------------------------------------------------------------------------

def _stream(seed: int, var: int, t: int) -> np.random.Generator:
    # Counter-based stream keyed by (seed, variable, time); unit i always
    # occupies the same stretch of the stream, so draws do not depend on n.
    key = np.random.SeedSequence([int(seed), var, t]).generate_state(2, dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _uniforms(seed: int, var: int, t: int, n: int, k: int) -> np.ndarray:
    u = _stream(seed, var, t).random((n, k))
    return u + 2.0 ** -54  # open interval (0, 1) so inverse-CDF transforms stay finite


@dataclass(frozen=True)
class NoiseRecord:
    u_x: np.ndarray   # (n, T, kx)
    u_a: np.ndarray   # (n, T)
    u_y: np.ndarray   # (n, ky)

    @property
    def n(self) -> int:
        return self.u_a.shape[0]


def draw_noise(model: StructuralModel, n: int, seed: int) -> NoiseRecord:
    T = model.horizon
    u_x = np.stack([_uniforms(seed, _X, t, n, model.x_noise_dim) for t in range(1, T + 1)], axis=1)
    u_a = np.stack([_uniforms(seed, _A, t, n, 1)[:, 0] for t in range(1, T + 1)], axis=1)
    u_y = _uniforms(seed, _Y, 0, n, model.y_noise_dim)
    return NoiseRecord(u_x, u_a, u_y)


def _checked_propensity(model: StructuralModel, t: int, x_hist, a_prev) -> np.ndarray:
    p = np.asarray(model.propensity(t, x_hist, a_prev), dtype=np.float64)
    if not np.all((p >= 0.0) & (p <= 1.0)):
        raise ModelError(f"model {model.name!r}: propensity outside [0,1] at t={t}")
    return p


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WorldPath:
    """Covariates, natural treatments and outcome along one (possibly intervened) world."""

    X: np.ndarray        # (n, T, d)
    A_natural: np.ndarray  # (n, T) natural treatment values A_t(a_1..a_{t-1})
    Y: np.ndarray        # (n,)
    regime: Regime | None  # None for the observational world


def _run_world(model: StructuralModel, noise: NoiseRecord, regime: Regime | None) -> WorldPath:
    n, T, d = noise.n, model.horizon, model.covariate_dim
    X = np.zeros((n, T, d))
    A_nat = np.zeros((n, T), dtype=np.int8)
    A_used = np.zeros((n, T), dtype=np.int8)
    for t in range(1, T + 1):
        x_t = model.covariate(t, X[:, :t - 1], A_used[:, :t - 1], noise.u_x[:, t - 1])
        X[:, t - 1] = np.asarray(x_t, dtype=np.float64).reshape(n, d)
        p = _checked_propensity(model, t, X[:, :t], A_used[:, :t - 1])
        A_nat[:, t - 1] = noise.u_a[:, t - 1] < p
        A_used[:, t - 1] = A_nat[:, t - 1] if regime is None else regime.actions[t - 1]
    Y = np.asarray(model.outcome(X, A_used, noise.u_y), dtype=np.float64).reshape(n)
    return WorldPath(X, A_nat, Y, regime)


def simulate_observational(model: StructuralModel, n: int, seed: int = 0) -> PanelDataset:
    """Draw n iid observed trajectories. Deterministic given the seed."""
    if n < 1:
        raise ValueError("n must be >= 1")
    path = _run_world(model, draw_noise(model, n, seed), None)
    return PanelDataset(path.X, path.A_natural, path.Y)


@dataclass(frozen=True)
class CrossWorldDraw:
    noise: tuple
    world_a: dict
    world_b: dict
    observational: dict


@dataclass(frozen=True)
class CrossWorldSample:
    """Observational and two intervened worlds computed from one shared noise record."""

    noise: NoiseRecord
    world_a: WorldPath
    world_b: WorldPath
    observational: WorldPath

    def __len__(self) -> int:
        return self.noise.n

    def __getitem__(self, i: int) -> CrossWorldDraw:
        def view(w: WorldPath) -> dict:
            return {"X": w.X[i].copy(), "A": w.A_natural[i].copy(), "Y": float(w.Y[i])}
        nz = (self.noise.u_x[i].copy(), self.noise.u_a[i].copy(), self.noise.u_y[i].copy())
        return CrossWorldDraw(nz, view(self.world_a), view(self.world_b), view(self.observational))


def _check_regime(model: StructuralModel, regime: Regime) -> Regime:
    regime = Regime.parse(regime)
    if len(regime) != model.horizon:
        raise ValueError(f"regime length {len(regime)} does not match model horizon {model.horizon}")
    return regime


def simulate_cross_world(model: StructuralModel, regime_a, regime_b, n: int,
                         seed: int = 0) -> CrossWorldSample:
    regime_a = _check_regime(model, regime_a)
    regime_b = _check_regime(model, regime_b)
    if n < 1:
        raise ValueError("n must be >= 1")
    noise = draw_noise(model, n, seed)
    return CrossWorldSample(noise, _run_world(model, noise, regime_a),
                            _run_world(model, noise, regime_b), _run_world(model, noise, None))


# ---------------------------------------------------------------------------
# exact nuisance quantities
# ---------------------------------------------------------------------------

def _as_hist(x_hist, t: int, d: int) -> tuple[np.ndarray, bool]:
    """Normalise a history to (n, t, d); the flag says a single history was given."""
    x = np.asarray(x_hist, dtype=np.float64)
    if x.ndim < 3 and x.size == t * d:
        return x.reshape(1, t, d), True
    return x.reshape(-1, t, d), False


def _as_prefix(a_prev, n: int, t: int) -> np.ndarray:
    if t == 1:
        return np.zeros((n, 0), dtype=np.int8)
    a = np.asarray(a_prev, dtype=np.int8).reshape(-1, t - 1)
    return np.repeat(a, n, axis=0) if a.shape[0] == 1 and n > 1 else a


def true_propensity(model: StructuralModel, t: int, x_hist, a_prev, treatment: int = 1):
    """P(A_t = treatment | X_1..X_t = x_hist, A_1..A_{t-1} = a_prev).

    Zero wherever the model declares the conditioning event impossible.
    Scalar inputs give a scalar result.
    """
    x, single = _as_hist(x_hist, t, model.covariate_dim)
    a = _as_prefix(a_prev, x.shape[0], t)
    p1 = _checked_propensity(model, t, x, a)
    p = p1 if treatment == 1 else 1.0 - p1
    p = np.where(model.is_reachable(t, x, a), p, 0.0)
    return float(p[0]) if single else p


def true_density_ratio(model: StructuralModel, t: int, x_hist, a_prev, a_prev_other):
    """Covariate transition density ratio at time t, regime prefix over alternative prefix.

    +inf where only the numerator is positive, 0 where the numerator is 0, and
    identically 1 at t = 1.
    """
    x, single = _as_hist(x_hist, t, model.covariate_dim)
    n = x.shape[0]
    if t == 1:
        out = np.ones(n)
    else:
        a = _as_prefix(a_prev, n, t)
        b = _as_prefix(a_prev_other, n, t)
        num = np.asarray(model.covariate_density(t, x[:, t - 1], x[:, :t - 1], a), dtype=np.float64)
        den = np.asarray(model.covariate_density(t, x[:, t - 1], x[:, :t - 1], b), dtype=np.float64)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(num == 0, 0.0, np.where(den == 0, np.inf, num / np.where(den == 0, 1, den)))
    return float(out[0]) if single else out
