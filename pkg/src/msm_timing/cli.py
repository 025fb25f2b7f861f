"""Command-line front end: ``msm-timing <subcommand> ...``.

Exit codes: 0 success, 1 numerical failure, 2 configuration or I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import causal
from .data import Schema, load_dataset
from .errors import InputError, NumericalError
from .inference import BootstrapPlan, Functional, bootstrap
from .io import (
    fit_document, load_fit_document, manifest, read_json, weight_document, weight_report, write_json,
    write_table,
)
from .pipeline import PipelineConfig, fit_pipeline, fit_weight_models
from .simlab import SimConfig, StudyPlan, run_study, scenario
from .weights import build_weight_set

THREADS_ENV = "MSM_TIMING_THREADS"


class UsageError(InputError):
    pass


def _parse_time_list(text: str) -> list:
    out = []
    for tok in text.split(","):
        tok = tok.strip().lower()
        if not tok:
            continue
        if tok in ("inf", "infinity", "never"):
            out.append(float("inf"))
            continue
        try:
            out.append(float(tok))
        except ValueError:
            raise UsageError(f"cannot read initiation time {tok!r}") from None
    if not out:
        raise UsageError("empty a-list")
    return out


def _parse_interval(text: str):
    parts = [p for p in text.replace("[", "").replace(")", "").split(",") if p.strip()]
    if len(parts) != 2:
        raise UsageError(f"interval must look like 't1,t2', got {text!r}")
    try:
        return float(parts[0]), float(parts[1])
    except ValueError:
        raise UsageError(f"cannot read interval {text!r}") from None


SIM_REPLICATES = 50  # enough for a coverage column; pass --replicates 0 to skip
SECTIONS = {"pipeline", "schema", "bootstrap", "simulation", "study"}


def _config_doc(args) -> dict:
    if not args.config:
        return {}
    if not Path(args.config).is_file():
        raise UsageError(f"config file not found: {args.config}")
    doc = read_json(args.config)
    if not isinstance(doc, dict):
        raise UsageError("config must be a JSON object")
    unknown = set(doc) - SECTIONS
    if unknown:
        raise UsageError(f"unknown config sections: {sorted(unknown)}")
    return doc


def _pipeline_config(args, doc) -> PipelineConfig:
    try:
        cfg = PipelineConfig.from_dict(doc.get("pipeline", {}))
    except (TypeError, ValueError) as exc:
        raise UsageError(f"pipeline config: {exc}") from None
    if args.truncate_weights is not None:
        cfg = replace(cfg, truncate=args.truncate_weights)
    if args.knots:
        text = args.knots
        knots = read_json(text) if Path(text).is_file() else json.loads(text)
        cfg = replace(cfg, knots=knots)
    return cfg


def _dataset(args, doc):
    if not args.data:
        raise UsageError("--data is required")
    if not Path(args.data).is_file():
        raise UsageError(f"data file not found: {args.data}")
    mapping = doc.get("schema", {})
    if args.schema:
        if not Path(args.schema).is_file():
            raise UsageError(f"schema file not found: {args.schema}")
        mapping = read_json(args.schema)
    schema = Schema.from_mapping(mapping)
    if args.strata:
        schema = replace(schema, stratum=args.strata)
    return load_dataset(args.data, schema, t_max=args.t_max)


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _workers(args) -> int:
    if args.workers is not None:
        return max(1, args.workers)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"{THREADS_ENV} must be an integer") from None
    return 1


def _functionals(args, labels) -> list:
    t0 = 52.0 if args.t0 is None else args.t0
    a_list = _parse_time_list(args.a_list) if args.a_list else [0.0]
    funcs = []
    for label in labels:
        funcs += [Functional.mortality(a, t0, label) for a in a_list]
        ivs = [_parse_interval(s) for s in args.interval or []]
        funcs += [Functional.interval(t1, t2, t0, label) for t1, t2 in ivs]
        if len(ivs) == 2:
            funcs.append(Functional.interval_difference(ivs[0], ivs[1], t0, label))
    return funcs


def _write_manifest(out, command, args, config, seed=None):
    write_json(out / "manifest.json", manifest(command, args.argv, config, seed))


# ---------------------------------------------------------------------------
# subcommands


def cmd_fit_weights(args) -> int:
    doc = _config_doc(args)
    cfg = _pipeline_config(args, doc)
    ds = _dataset(args, doc)
    out = _out(args)
    strata = {}
    for label in ds.stratum_labels():
        sub = ds if ds.strata is None else ds.stratum(label)
        tm, cm = fit_weight_models(sub, cfg)
        strata[label] = (tm, cm, build_weight_set(sub, tm, cm, cfg.truncate))
    write_json(out / "weight_models.json", weight_document(cfg, strata))
    (out / "weight_diagnostics.txt").write_text(weight_report({k: v[2] for k, v in strata.items()}))
    _write_manifest(out, "fit-weights", args, {"pipeline": cfg.to_dict()})
    return 0


def cmd_fit(args) -> int:
    doc = _config_doc(args)
    cfg = _pipeline_config(args, doc)
    ds = _dataset(args, doc)
    out = _out(args)
    fit = fit_pipeline(ds, cfg)
    write_json(out / "fit.json", fit_document(fit))
    strata = {k: (s.treatment_model, s.censoring_model, s.weights) for k, s in fit.strata.items()}
    write_json(out / "weight_models.json", weight_document(cfg, strata))
    (out / "weight_diagnostics.txt").write_text(weight_report({k: s.weights for k, s in fit.strata.items()}))
    _write_manifest(out, "fit", args, {"pipeline": cfg.to_dict()})
    return 0


def _load_fits(args):
    if not args.fit:
        raise UsageError("--fit is required")
    if not Path(args.fit).is_file():
        raise UsageError(f"fit document not found: {args.fit}")
    return load_fit_document(args.fit)


def cmd_predict(args) -> int:
    _, fits = _load_fits(args)
    out = _out(args)
    a_list = _parse_time_list(args.a_list) if args.a_list else [0.0, 8.0, 24.0, float("inf")]
    curve_rows, theta_rows, interval_rows, diff_rows = [], [], [], []
    for label, sf in fits.items():
        for a in a_list:
            c = causal.survival_curve(sf, a, source=args.fit)
            curve_rows += [[label, a, t, s] for t, s in zip(c.grid, c.survival)]
        if args.t0 is not None:
            opt = causal.optimal_initiation(sf, causal.Endpoint("survival_at", args.t0))
            theta_rows += [[label, a, th] for a, th in zip(opt.grid, opt.thetas)]
            ivs = [_parse_interval(s) for s in args.interval or []]
            vals = [causal.interval_mortality(sf, t1, t2, args.t0) for t1, t2 in ivs]
            interval_rows += [[label, t1, t2, args.t0, v] for (t1, t2), v in zip(ivs, vals)]
            if len(vals) == 2:
                diff_rows.append([label, *ivs[0], *ivs[1], args.t0, vals[0] - vals[1]])
    write_table(out / "curves.csv", ["stratum", "a", "t", "survival"], curve_rows)
    if theta_rows:
        write_table(out / "theta.csv", ["stratum", "a", "theta"], theta_rows)
    if interval_rows:
        write_table(out / "intervals.csv", ["stratum", "t1", "t2", "t0", "mortality"], interval_rows)
    if diff_rows:
        write_table(out / "interval_contrasts.csv", ["stratum", "t1", "t2", "t3", "t4", "t0", "difference"],
                    diff_rows)
    _write_manifest(out, "predict", args, {"fit": args.fit, "a_list": a_list, "t0": args.t0})
    return 0


def cmd_contrast(args) -> int:
    _, fits = _load_fits(args)
    out = _out(args)
    if args.t0 is None:
        raise UsageError("--t0 is required for contrasts")
    a_list = _parse_time_list(args.a_list) if args.a_list else [0.0]
    ref = float(args.reference)
    rows = []
    for label, sf in fits.items():
        for a in a_list:
            if a == ref:
                continue
            diff, ratio = causal.contrast(sf, a, ref, args.t0)
            rows.append([label, a, ref, args.t0, diff, ratio])
    write_table(out / "contrasts.csv", ["stratum", "a", "a_reference", "t0", "difference", "ratio"], rows)
    _write_manifest(out, "contrast", args, {"fit": args.fit, "a_list": a_list, "reference": ref, "t0": args.t0})
    return 0


def cmd_bootstrap(args) -> int:
    doc = _config_doc(args)
    cfg = _pipeline_config(args, doc)
    ds = _dataset(args, doc)
    out = _out(args)
    seed = 0 if args.seed is None else args.seed
    plan = BootstrapPlan(
        replicates=args.replicates or doc.get("bootstrap", {}).get("replicates", 1000),
        seed=seed,
        functionals=_functionals(args, ds.stratum_labels()),
        refit_weights=doc.get("bootstrap", {}).get("refit_weights", True),
        workers=_workers(args),
    )
    res = bootstrap(ds, cfg, plan)
    header, rows = res.table()
    write_table(out / "bootstrap.csv", header, rows)
    _write_manifest(out, "bootstrap", args, {"pipeline": cfg.to_dict(), "replicates": plan.replicates}, seed)
    return 0


def cmd_simulate(args) -> int:
    doc = _config_doc(args)
    out = _out(args)
    sim = dict(doc.get("simulation", {}))
    if args.seed is not None:
        sim["seed"] = args.seed
    try:
        cfg = scenario(args.scenario, **sim) if args.scenario else SimConfig.from_dict(sim)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    study = dict(doc.get("study", {}))
    pipe = doc.get("pipeline")
    if pipe is not None:
        study["pipeline"] = PipelineConfig.from_dict(pipe)
    if args.runs is not None:
        study["runs"] = args.runs
    if args.replicates is not None:
        study["replicates"] = args.replicates
    study.setdefault("replicates", SIM_REPLICATES)
    if args.a_list:
        study["a_list"] = _parse_time_list(args.a_list)
    if args.t0 is not None:
        study["t0"] = args.t0
    study["workers"] = _workers(args)
    try:
        plan = StudyPlan(**study)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    rep = run_study(cfg, plan)
    header, rows = rep.table()
    write_table(out / "sim_report.csv", header, rows)
    write_json(out / "sim_summary.json", {"config": cfg.to_dict(), "rows": rep.rows,
                                          "runs": plan.runs, "replicates": plan.replicates})
    _write_manifest(out, "simulate", args, {"simulation": cfg.to_dict(), "pipeline": plan.pipeline.to_dict()},
                    cfg.seed)
    return 0


COMMANDS = {
    "fit-weights": cmd_fit_weights,
    "fit": cmd_fit,
    "predict": cmd_predict,
    "contrast": cmd_contrast,
    "simulate": cmd_simulate,
    "bootstrap": cmd_bootstrap,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="msm-timing", description="Effects of treatment initiation time on survival.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--data", help="delimited data file, one row per subject segment")
        s.add_argument("--schema", help="JSON file mapping column roles to names")
        s.add_argument("--config", help="JSON run configuration")
        s.add_argument("--out", default=".", help="output directory")
        s.add_argument("--seed", type=int)
        s.add_argument("--strata", help="column holding stratum labels")
        s.add_argument("--knots", help="JSON knot overrides (inline or file)")
        s.add_argument("--a-list", help="comma-separated initiation times; 'inf' for never")
        s.add_argument("--t0", type=float, help="time horizon of mortality summaries")
        s.add_argument("--interval", action="append", help="initiation interval 't1,t2' (repeatable)")
        s.add_argument("--replicates", type=int)
        s.add_argument("--runs", type=int)
        s.add_argument("--truncate-weights", type=float, metavar="Q", help="cap weights at quantile Q")
        s.add_argument("--t-max", type=float, help="administrative censoring horizon")
        s.add_argument("--fit", help="fit document written by 'fit'")
        s.add_argument("--reference", default="0", help="reference initiation time for contrasts")
        s.add_argument("--scenario", help="simulation scenario: 1, 2 or 3")
        s.add_argument("--workers", type=int, help=f"parallel processes (default ${THREADS_ENV} or 1)")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.argv = list(sys.argv[1:] if argv is None else argv)
    try:
        return COMMANDS[args.command](args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        _error_report(args, exc)
        return 1
    except (InputError, OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        _error_report(args, exc)
        return 2


def _error_report(args, exc):
    if not args.out:
        return
    try:
        out = _out(args)
        doc = {"error": type(exc).__name__, "message": str(exc)}
        for attr in ("aliased", "score_norm", "trace", "n_failed", "n_total"):
            if hasattr(exc, attr):
                doc[attr] = getattr(exc, attr)
        if getattr(exc, "beta", None) is not None:
            doc["beta"] = np.asarray(exc.beta).tolist()
        write_json(out / "error.json", doc)
    except OSError:
        pass


if __name__ == "__main__":
    sys.exit(main())
