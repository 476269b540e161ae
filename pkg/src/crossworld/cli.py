"""Command-line interface.

    crossworld estimate --config run.json --out results/
    crossworld coverage --config cov.json --reps 500
    crossworld oracle --config oracle.json
    crossworld simulate --config sim.json --out data/
    crossworld list-models
    crossworld regen-golden

Exit codes: 0 success, 1 configuration error, 2 estimation or numeric error.
JSON outputs are deterministic given config and seeds, apart from the
``timestamp`` field.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

from .dgp import simulate_observational
from .estimator import EstimateReport, dr_contrast, plug_in_estimate, _jsonable
from .learners import BINARY, LearnerConfig, make_learner
from .models import get_model, list_models
from .oracle import (OracleUnavailable, estimand_mc, golden_value, identified_enumeration,
                     identified_mc, regen_golden)
from .panel import (CSVFormatError, CSVSchema, PanelValidationError, Regime, parse_long_format_csv,
                    write_long_format_csv)
from .study import coverage_study
from .weights import WeightSpec

OUT_ENV = "CROSSWORLD_OUT"


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------

def load_config(args) -> dict:
    cfg: dict = {}
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
    for key in ("seed", "folds", "alpha", "reps"):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV, "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _regimes(cfg: dict, horizon: int) -> tuple[Regime, Regime]:
    regs = cfg.get("regimes", ["1" * horizon, "0" * horizon])
    if len(regs) != 2:
        raise ConfigError("config 'regimes' must list exactly two regimes")
    try:
        ra, rb = Regime.parse(regs[0]), Regime.parse(regs[1])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    for r in (ra, rb):
        if len(r) != horizon:
            raise ConfigError(f"regime {r} has length {len(r)} but the data horizon is {horizon}")
    return ra, rb


def _weights(cfg: dict, horizon: int) -> WeightSpec:
    try:
        return WeightSpec.from_config(cfg.get("weights", {"preset": "smooth_trim", "k": 20}), horizon)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"bad weight config: {exc}") from None


def _model(cfg: dict):
    if "model" not in cfg:
        raise ConfigError("config needs a 'model'")
    try:
        return get_model(cfg["model"], cfg.get("params"))
    except (KeyError, TypeError) as exc:
        raise ConfigError(str(exc).strip("'\"")) from None


def _load_data(cfg: dict):
    has_csv, has_model = "csv" in cfg, "model" in cfg
    if has_csv == has_model:
        raise ConfigError("config needs exactly one data source: 'csv' or 'model'")
    if has_csv:
        try:
            schema = CSVSchema.from_dict(cfg.get("schema", {}))
        except TypeError as exc:
            raise ConfigError(f"bad csv schema: {exc}") from None
        try:
            return parse_long_format_csv(cfg["csv"], schema)
        except OSError as exc:
            raise ConfigError(f"cannot read {cfg['csv']}: {exc}") from None
        except (CSVFormatError, PanelValidationError) as exc:
            raise ConfigError(f"invalid panel {cfg['csv']}: {exc}") from None
    model = _model(cfg)
    n = int(cfg.get("n", 2000))
    return simulate_observational(model, n, int(cfg.get("data_seed", cfg.get("seed", 0))))


def _learner(cfg: dict) -> LearnerConfig:
    try:
        learner = LearnerConfig.parse(cfg.get("learner", {"learner": "stack"}))
        for family in ("propensity", "ratio", "regression"):
            make_learner(learner.for_family(family), BINARY)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad learner config: {exc}") from None
    return learner


def _write_json(path: Path, payload: dict) -> None:
    payload = {**_jsonable(payload), "timestamp": datetime.now(timezone.utc).isoformat()}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path: Path, header: list, rows: list) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def render_report(rep: EstimateReport) -> str:
    lines = [f"{'estimand':<12}{'estimate':>12}{'95% CI' if rep.alpha == 0.05 else 'CI':>28}"]
    ci = "no valid inference" if rep.ci is None else f"[{rep.ci[0]:.3f}, {rep.ci[1]:.3f}]"
    label = " vs ".join(str(r) for r in rep.regimes)
    lines.append(f"{label:<12}{rep.psi_hat:>12.3f}{ci:>28}")
    ess = rep.diagnostics.get("ess")
    if ess:
        lines.append("ESS by time: " + ", ".join(f"{e:.1f}" for e in ess))
    return "\n".join(lines)


def cmd_estimate(cfg: dict, out: Path) -> dict:
    data = _load_data(cfg)
    ra, rb = _regimes(cfg, data.horizon)
    spec = _weights(cfg, data.horizon)
    folds = int(cfg.get("folds", 5))
    alpha = float(cfg.get("alpha", 0.05))
    if folds < 2:
        raise ConfigError("folds must be at least 2")
    if not 0 < alpha < 1:
        raise ConfigError("alpha must lie in (0, 1)")
    method = cfg.get("method", "dr")
    seed = int(cfg.get("seed", 0))
    learner = _learner(cfg)
    if method == "dr":
        rep = dr_contrast(data, ra, rb, spec, learner, folds, alpha, seed=seed)
    elif method == "plug_in":
        rep = plug_in_estimate(data, ra, rb, spec, learner, folds, contrast=True, seed=seed)
    else:
        raise ConfigError(f"unknown method {method!r}")
    _write_json(out / "report.json", {"config": cfg, "report": rep.to_dict()})
    (out / "summary.txt").write_text(render_report(rep) + "\n")
    d = rep.diagnostics
    _write_csv(out / "weights.csv", ["t", "min", "q25", "median", "mean", "q75", "max", "ess"],
               [[t + 1, *q, e] for t, (q, e) in enumerate(zip(d["weight_quantiles"], d["ess"]))])
    _write_csv(out / "rho.csv", ["t", "min", "q25", "median", "mean", "q75", "max"],
               [[t + 2, *q] for t, q in enumerate(d["rho_quantiles"])])
    print(render_report(rep))
    return rep.to_dict()


def _truth(cfg: dict, model, ra, rb, spec) -> float:
    if "truth" in cfg:
        return float(cfg["truth"])
    name = cfg["model"] if isinstance(cfg["model"], str) else None
    if name and not cfg.get("params"):
        try:
            return float(golden_value(name, [ra, rb], spec_config(cfg))["value"])
        except KeyError:
            pass
    if model.discrete:
        return identified_enumeration(model, ra, rb, spec).value
    return identified_mc(model, ra, rb, spec, 10**6, int(cfg.get("seed", 0))).value


def spec_config(cfg: dict):
    return cfg.get("weights", {"preset": "smooth_trim", "k": 20})


def cmd_coverage(cfg: dict, out: Path) -> dict:
    model = _model(cfg)
    ra, rb = _regimes(cfg, model.horizon)
    spec = _weights(cfg, model.horizon)
    reps = int(cfg.get("reps", 100))
    if reps < 10:
        raise ConfigError("coverage needs at least 10 replications (--reps)")
    truth = _truth(cfg, model, ra, rb, spec)
    summary, runs = coverage_study(model, ra, rb, spec,
                                   _learner(cfg), int(cfg.get("n", 2000)),
                                   reps, truth, int(cfg.get("seed", 0)), int(cfg.get("folds", 5)),
                                   float(cfg.get("alpha", 0.05)), int(cfg.get("n_jobs", 1)))
    _write_json(out / "coverage.json", {"config": cfg, "summary": summary})
    _write_csv(out / "replications.csv", ["index", "seed", "psi_hat", "se", "lo", "hi"],
               [[r.index, r.seed, repr(r.psi_hat), repr(r.se), repr(r.lo), repr(r.hi)] for r in runs])
    _write_csv(out / "coverage.csv", list(summary), [list(summary.values())])
    print(json.dumps(summary, indent=2))
    return summary


def cmd_oracle(cfg: dict, out: Path) -> dict:
    model = _model(cfg)
    ra, rb = _regimes(cfg, model.horizon)
    spec = _weights(cfg, model.horizon)
    method = cfg.get("method", "auto")
    draws, seed = int(cfg.get("draws", 10**6)), int(cfg.get("seed", 0))
    if method == "auto":
        method = "enumeration" if model.discrete else "monte_carlo"
    if method == "enumeration":
        try:
            res = identified_enumeration(model, ra, rb, spec)
        except OracleUnavailable as exc:
            raise ConfigError(str(exc)) from None
    elif method == "monte_carlo":
        res = estimand_mc(model, ra, rb, spec, draws, seed)
    elif method == "identified_mc":
        res = identified_mc(model, ra, rb, spec, draws, seed)
    else:
        raise ConfigError(f"unknown oracle method {method!r}")
    payload = {"config": cfg, "result": res.to_dict()}
    _write_json(out / "oracle.json", payload)
    print(json.dumps(_jsonable(res.to_dict()), indent=2))
    return res.to_dict()


def cmd_simulate(cfg: dict, out: Path) -> dict:
    model = _model(cfg)
    n = int(cfg.get("n", 1000))
    if n < 1:
        raise ConfigError("n must be >= 1")
    data = simulate_observational(model, n, int(cfg.get("seed", 0)))
    path = out / cfg.get("filename", "panel.csv")
    write_long_format_csv(data, path)
    # the schema an estimate config needs to read the file back
    schema = {"covariates": [f"x{j + 1}" for j in range(data.covariate_dim)],
              "outcome_mode": "repeated"}
    info = {"path": str(path), "n": data.n, "horizon": data.horizon, "model": model.name,
            "schema": schema}
    print(json.dumps(info))
    return info


def cmd_list_models(cfg: dict, out: Path | None) -> list:
    models = list_models()
    print(json.dumps(models, indent=2))
    return models


def cmd_regen_golden(cfg: dict, out: Path | None, path=None) -> list:
    entries = regen_golden(path)
    print(json.dumps(entries, indent=2))
    return entries


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="crossworld", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("estimate", "coverage", "oracle", "simulate", "list-models", "regen-golden"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help=f"output directory (default ${OUT_ENV} or .)")
        sp.add_argument("--folds", type=int)
        sp.add_argument("--alpha", type=float)
        sp.add_argument("--reps", type=int)
    return p


COMMANDS = {"estimate": cmd_estimate, "coverage": cmd_coverage, "oracle": cmd_oracle,
            "simulate": cmd_simulate, "list-models": cmd_list_models}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        if args.command == "regen-golden":
            path = Path(args.out) / "golden.json" if args.out else None
            cmd_regen_golden(cfg, None, path)
            return 0
        out = None if args.command == "list-models" else _out_dir(args)
        COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, ArithmeticError, OracleUnavailable) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
