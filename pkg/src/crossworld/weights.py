"""Propensity-score weight functions, cumulative weights and effective sample size.

A weight function maps a propensity score p in [0, 1] to a nonnegative
weight.  The supported kinds are

==============  =========================  ======================
kind            w(p)                       derivative
==============  =========================  ======================
identity_one    1                          0
linear          p                          1
hard_trim       1(p >= eps)                (non-smooth)
smooth_trim     1 - exp(-k p)              k exp(-k p)
smooth_trim     p^s / (p^s + eps^s)        (eps, shape=s form)
==============  =========================  ======================
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_SMOOTH_K = 20.0
DIVISOR_CLIP = 1e-4


class WeightError(ValueError):
    pass


@dataclass(frozen=True)
class WeightFunction:
    kind: str
    k: float | None = None
    eps: float | None = None
    shape: float | None = None

    def __post_init__(self):
        if self.kind not in ("identity_one", "linear", "hard_trim", "smooth_trim"):
            raise WeightError(f"unknown weight kind {self.kind!r}")
        if self.kind == "hard_trim":
            if self.eps is None or self.eps < 0:
                raise WeightError("hard_trim needs eps >= 0")
        if self.kind == "smooth_trim":
            if self.eps is not None or self.shape is not None:
                if self.eps is None or self.shape is None or self.eps <= 0 or self.shape < 2:
                    raise WeightError("smooth_trim(eps, shape) needs eps > 0 and shape >= 2")
            else:
                k = DEFAULT_SMOOTH_K if self.k is None else self.k
                if k <= 0:
                    raise WeightError("smooth_trim needs k > 0")
                object.__setattr__(self, "k", float(k))

    # ------------------------------------------------------------------
    @property
    def smooth(self) -> bool:
        return self.kind != "hard_trim"

    @property
    def _hill(self) -> bool:
        return self.kind == "smooth_trim" and self.shape is not None

    def __call__(self, p):
        p = np.asarray(p, dtype=np.float64)
        if self.kind == "identity_one":
            return np.ones_like(p)
        if self.kind == "linear":
            return p.copy()
        if self.kind == "hard_trim":
            return (p >= self.eps).astype(np.float64)
        if self._hill:
            ps = p ** self.shape
            return ps / (ps + self.eps ** self.shape)
        return -np.expm1(-self.k * p)

    def deriv(self, p):
        if not self.smooth:
            raise WeightError("non-smooth weight has no derivative")
        p = np.asarray(p, dtype=np.float64)
        if self.kind == "identity_one":
            return np.zeros_like(p)
        if self.kind == "linear":
            return np.ones_like(p)
        if self._hill:
            s, c = self.shape, self.eps ** self.shape
            return c * s * p ** (s - 1) / (p ** s + c) ** 2
        return self.k * np.exp(-self.k * p)

    def deriv2(self, p):
        if not self.smooth:
            raise WeightError("non-smooth weight has no derivative")
        p = np.asarray(p, dtype=np.float64)
        if self.kind in ("identity_one", "linear"):
            return np.zeros_like(p)
        if self._hill:
            s, c = self.shape, self.eps ** self.shape
            g, g1, g2 = p ** s, s * p ** (s - 1), s * (s - 1) * p ** (s - 2)
            return c * (g2 * (g + c) - 2.0 * g1 * g1) / (g + c) ** 3
        return -self.k * self.k * np.exp(-self.k * p)

    def at_zero(self) -> float:
        return float(self(0.0))

    def sup_ratio(self) -> float:
        """sup over p in (0, 1] of w(p)/p, the bound on the inverse-propensity ratio."""
        if self.kind == "linear":
            return 1.0
        if self.kind == "smooth_trim" and not self._hill:
            return self.k  # (1 - e^{-kp})/p is decreasing, limit k at 0
        if self._hill:
            grid = np.linspace(1e-6, 1.0, 200001)
            return float(np.max(self(grid) / grid))
        if self.kind == "hard_trim" and self.eps > 0:
            return 1.0 / self.eps
        return np.inf

    def to_config(self) -> dict:
        out = {"kind": self.kind}
        for key in ("k", "eps", "shape"):
            v = getattr(self, key)
            if v is not None:
                out[key] = v
        return out

    @classmethod
    def from_config(cls, cfg) -> "WeightFunction":
        if isinstance(cfg, WeightFunction):
            return cfg
        if isinstance(cfg, str):
            cfg = {"kind": cfg}
        cfg = dict(cfg)
        kind = {"one": "identity_one", "none": "identity_one", "overlap": "linear",
                "trim": "hard_trim"}.get(cfg.get("kind"), cfg.get("kind"))
        return cls(kind, cfg.get("k"), cfg.get("eps"), cfg.get("shape"))


def one() -> WeightFunction:
    return WeightFunction("identity_one")


def linear() -> WeightFunction:
    return WeightFunction("linear")


def hard_trim(eps: float) -> WeightFunction:
    return WeightFunction("hard_trim", eps=float(eps))


def smooth_trim(k: float = DEFAULT_SMOOTH_K) -> WeightFunction:
    return WeightFunction("smooth_trim", k=float(k))


def _check_prob(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if np.any(~((p >= 0.0) & (p <= 1.0))):
        raise WeightError("probability outside [0,1]")
    return p


def eval_weight(w: WeightFunction, p):
    out = w(_check_prob(p))
    return float(out) if np.ndim(out) == 0 else out


def eval_weight_deriv(w: WeightFunction, p):
    out = w.deriv(_check_prob(p))
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# weight specifications
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeightSpec:
    """Per-time pairs (w_t, w'_t): w_t acts on the first regime's propensity,
    w'_t on the second's.

    Construction rejects a pair whose members are both positive at zero,
    because then a zero propensity would leave an unbounded inverse weight.
    Pass ``unsafe_allow=True`` for positivity-respecting baselines such as
    "no weighting".
    """

    pairs: tuple[tuple[WeightFunction, WeightFunction], ...]
    unsafe_allow: bool = False

    def __post_init__(self):
        pairs = tuple((WeightFunction.from_config(w), WeightFunction.from_config(wp))
                      for w, wp in self.pairs)
        if not pairs:
            raise WeightError("weight spec needs at least one time point")
        object.__setattr__(self, "pairs", pairs)
        if not self.unsafe_allow:
            for t, (w, wp) in enumerate(pairs, start=1):
                if w.at_zero() > 0 and wp.at_zero() > 0:
                    raise WeightError(
                        f"weight pair at t={t} is positive at zero on both sides; a zero "
                        "propensity would not be trimmed (set unsafe_allow to override)")

    @property
    def horizon(self) -> int:
        return len(self.pairs)

    @property
    def smooth(self) -> bool:
        return all(w.smooth and wp.smooth for w, wp in self.pairs)

    @property
    def target(self) -> tuple[WeightFunction, ...]:
        return tuple(p[0] for p in self.pairs)

    @property
    def other(self) -> tuple[WeightFunction, ...]:
        return tuple(p[1] for p in self.pairs)

    def condition1_compliant(self, grid=None) -> bool:
        """Check w_t(0) w'_t(x) = 0 and w_t(x) w'_t(0) = 0 on a grid of x."""
        x = np.linspace(0.0, 1.0, 101) if grid is None else np.asarray(grid)
        return all(np.all(w(0.0) * wp(x) == 0) and np.all(w(x) * wp(0.0) == 0)
                   for w, wp in self.pairs)

    def swapped(self) -> "WeightSpec":
        return WeightSpec(tuple((wp, w) for w, wp in self.pairs), unsafe_allow=True)

    def product(self, pi, pi_other) -> np.ndarray:
        """W_t = w_t(pi_t) w'_t(pi'_t) for (n, T) propensity arrays."""
        pi, pi_other = np.asarray(pi), np.asarray(pi_other)
        out = np.empty(np.broadcast(pi, pi_other).shape)
        for t, (w, wp) in enumerate(self.pairs):
            out[..., t] = w(pi[..., t]) * wp(pi_other[..., t])
        return out

    @classmethod
    def all(cls, w, w_prime=None, horizon: int = 1, unsafe_allow: bool = False) -> "WeightSpec":
        w = WeightFunction.from_config(w)
        wp = w if w_prime is None else WeightFunction.from_config(w_prime)
        return cls(tuple((w, wp) for _ in range(horizon)), unsafe_allow)

    @classmethod
    def from_config(cls, cfg, horizon: int) -> "WeightSpec":
        """Parse a JSON weight configuration.

        Accepts a preset name (``overlap``, ``smooth_trim``, ``trim``, ``none``)
        or ``{"t": 1, "w": {...}, "w_prime": {...}}`` entries, alone or in a
        list; ``"t": "all"`` applies the pair everywhere.
        """
        if isinstance(cfg, WeightSpec):
            return cfg
        if isinstance(cfg, str):
            return preset(cfg, horizon)
        if isinstance(cfg, dict) and "preset" in cfg:
            kw = {k: v for k, v in cfg.items() if k != "preset"}
            return preset(cfg["preset"], horizon, **kw)
        entries = [cfg] if isinstance(cfg, dict) else list(cfg)
        unsafe = any(bool(e.get("unsafe_allow", False)) for e in entries)
        pairs: list = [None] * horizon
        for e in entries:
            pair = (WeightFunction.from_config(e["w"]),
                    WeightFunction.from_config(e.get("w_prime", e["w"])))
            t = e.get("t", "all")
            if t == "all":
                pairs = [pair] * horizon
            else:
                t = int(t)
                if not 1 <= t <= horizon:
                    raise WeightError(f"weight entry t={t} outside 1..{horizon}")
                pairs[t - 1] = pair
        if any(p is None for p in pairs):
            missing = [t + 1 for t, p in enumerate(pairs) if p is None]
            raise WeightError(f"no weight pair for t={missing}")
        return cls(tuple(pairs), unsafe)

    def to_config(self) -> list[dict]:
        return [{"t": t, "w": w.to_config(), "w_prime": wp.to_config()}
                for t, (w, wp) in enumerate(self.pairs, start=1)]


def preset(name: str, horizon: int, **kw) -> WeightSpec:
    if name == "overlap":
        return WeightSpec.all(linear(), linear(), horizon)
    if name == "smooth_trim":
        w = smooth_trim(kw.get("k", DEFAULT_SMOOTH_K))
        return WeightSpec.all(w, w, horizon)
    if name in ("trim", "hard_trim"):
        w = hard_trim(kw.get("eps", 0.05))
        return WeightSpec.all(w, w, horizon)
    if name in ("none", "identity_one"):
        return WeightSpec.all(one(), one(), horizon, unsafe_allow=True)
    raise WeightError(f"unknown weight preset {name!r}")


# ---------------------------------------------------------------------------
# ratios and diagnostics
# ---------------------------------------------------------------------------

def ratio_terms(a_obs, a_target, a_other, pi, pi_other, w: WeightFunction,
                w_other: WeightFunction, clip: float = DIVISOR_CLIP):
    """Inverse-propensity ratios (r_t, r'_t) at one time point.

    r  = 1(A = a_target) w(pi) w'(pi') / pi
    r' = 1(A = a_other)  w(pi) w'(pi') / pi'

    Zero wherever the weight product is zero. Divisors are floored at
    ``clip`` to protect the floating-point division only.
    """
    pi, pi_other = _check_prob(pi), _check_prob(pi_other)
    a_obs = np.asarray(a_obs)
    W = w(pi) * w_other(pi_other)
    for name, p in (("pi", pi), ("pi_prime", pi_other)):
        if np.any((p == 0) & (W > 0)):
            raise WeightError(f"unbounded ratio: weight pair violates condition 1 ({name} = 0 "
                              "with nonzero weight product)")
    live = W > 0
    r = np.where(live & (a_obs == a_target), W / np.maximum(pi, clip), 0.0)
    r_other = np.where(live & (a_obs == a_other), W / np.maximum(pi_other, clip), 0.0)
    if r.ndim == 0:
        return float(r), float(r_other)
    return r, r_other


def cumulative_weight(values, axis: int = -1):
    """Product of per-time weights along ``axis``."""
    v = np.asarray(values, dtype=np.float64)
    if np.any(v < 0):
        raise WeightError("weights must be nonnegative")
    return np.prod(v, axis=axis)


def effective_sample_size(weights) -> float:
    """(sum w)^2 / sum w^2."""
    w = np.asarray(weights, dtype=np.float64).ravel()
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise WeightError("weights must be finite and nonnegative")
    top = w.max(initial=0.0)
    if top == 0.0:
        raise WeightError("degenerate weights: all zero")
    # scale by the largest weight: equal weights then give exactly n
    w = w / top
    ss = float(np.dot(w, w))
    s = float(w.sum())
    return s * s / ss
