"""Monte Carlo simulation studies: repeated simulate-and-estimate runs against an oracle value."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed

from .dgp import simulate_observational
from .estimator import dr_contrast
from .models import get_model
from .weights import WeightSpec


@dataclass(frozen=True)
class Replication:
    index: int
    seed: int
    psi_hat: float
    se: float
    lo: float
    hi: float


def replication_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0])


def run_replication(model_spec, regime_a, regime_b, weights, learner, n: int, index: int,
                    seed: int, folds: int = 5, alpha: float = 0.05) -> Replication:
    model = get_model(model_spec) if isinstance(model_spec, (str, dict)) else model_spec
    spec = WeightSpec.from_config(weights, model.horizon)
    s = replication_seed(seed, index)
    data = simulate_observational(model, n, s)
    rep = dr_contrast(data, regime_a, regime_b, spec, learner, folds, alpha, seed=s)
    return Replication(index, s, rep.psi_hat, rep.se, rep.ci[0], rep.ci[1])


def run_replications(model_spec, regime_a, regime_b, weights, learner, n: int, reps: int,
                     seed: int = 0, folds: int = 5, alpha: float = 0.05,
                     n_jobs: int = 1) -> list[Replication]:
    """Independent replications; results are keyed by index so the worker count
    does not change them."""
    jobs = (delayed(run_replication)(model_spec, regime_a, regime_b, weights, learner, n, i, seed,
                                     folds, alpha) for i in range(reps))
    out = Parallel(n_jobs=n_jobs)(jobs)
    return sorted(out, key=lambda r: r.index)


def summarize(reps: list[Replication], truth: float) -> dict:
    est = np.array([r.psi_hat for r in reps])
    lo = np.array([r.lo for r in reps])
    hi = np.array([r.hi for r in reps])
    err = est - truth
    return {
        "reps": len(reps), "truth": float(truth),
        "mean": float(est.mean()), "bias": float(err.mean()), "sd": float(est.std(ddof=1)),
        "rmse": float(np.sqrt(np.mean(err ** 2))),
        "mean_se": float(np.mean([r.se for r in reps])),
        "mean_ci_width": float(np.mean(hi - lo)),
        "coverage": float(np.mean((lo <= truth) & (truth <= hi))),
        "lower_above_zero": float(np.mean(lo > 0)),
    }


def coverage_study(model_spec, regime_a, regime_b, weights, learner, n: int, reps: int,
                   truth: float, seed: int = 0, folds: int = 5, alpha: float = 0.05,
                   n_jobs: int = 1) -> tuple[dict, list[Replication]]:
    if reps < 10:
        raise ValueError("coverage study needs at least 10 replications")
    out = run_replications(model_spec, regime_a, regime_b, weights, learner, n, reps, seed, folds,
                           alpha, n_jobs)
    return summarize(out, truth), out
