"""Text outputs: delimited tables, JSON fit documents and run manifests.

Floats are written with ``repr`` so every table reads back to the same
binary values.
"""

from __future__ import annotations

import csv
import json
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from .coxfit import FittedHazardModel
from .errors import ParseError, ValidationError
from .pipeline import PipelineConfig, PipelineFit
from .structural import StructuralFit

FIT_FORMAT = "msm-timing-fit"
WEIGHT_FORMAT = "msm-timing-weight-models"
FORMAT_VERSION = 1


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if v == float("inf"):
            return "inf"
        if v == float("-inf"):
            return "-inf"
        return repr(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def parse_value(token: str):
    """Inverse of :func:`format_value` for numeric cells; other text is returned as is."""
    if token == "":
        return None
    try:
        return float(token)
    except ValueError:
        return token


def write_table(path, header, rows):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_value(v) for v in row])


def read_table(path):
    """Return ``(header, rows)`` with numeric cells converted to float."""
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[parse_value(c) for c in r] for r in reader]
    return header, rows


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path, doc):
    Path(path).write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc.msg})", exc.lineno) from None


def fit_document(fit: PipelineFit) -> dict:
    blocks = []
    for label, s in fit.strata.items():
        blocks.append({
            "stratum": label,
            "treatment_model": s.treatment_model.to_dict(),
            "censoring_model": s.censoring_model.to_dict(),
            "structural": s.structural.to_dict(),
        })
    return {"format": FIT_FORMAT, "version": FORMAT_VERSION, "config": fit.config.to_dict(), "strata": blocks}


def weight_document(config: PipelineConfig, strata: dict) -> dict:
    """``strata`` maps labels to ``(treatment_model, censoring_model, weight_set)``."""
    blocks = []
    for label, (tm, cm, ws) in strata.items():
        blocks.append({
            "stratum": label,
            "treatment_model": tm.to_dict(),
            "censoring_model": cm.to_dict(),
            "diagnostics": ws.diagnostics(),
        })
    return {"format": WEIGHT_FORMAT, "version": FORMAT_VERSION, "config": config.to_dict(), "strata": blocks}


def load_fit_document(path):
    """Read a fit document; returns the config and ``{stratum: StructuralFit}``."""
    doc = read_json(path)
    if doc.get("format") != FIT_FORMAT:
        raise ValidationError(f"{path}: not a fit document")
    try:
        cfg = PipelineConfig.from_dict(doc["config"])
        fits = {b["stratum"]: StructuralFit.from_dict(b["structural"]) for b in doc["strata"]}
        for b in doc["strata"]:
            FittedHazardModel.from_dict(b["treatment_model"])
            FittedHazardModel.from_dict(b["censoring_model"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"{path}: malformed fit document ({exc})") from None
    return cfg, fits


def weight_report(weight_sets: dict) -> str:
    """Plain-text summary of each weight family, one block per stratum."""
    lines = []
    for label, ws in weight_sets.items():
        lines.append(f"stratum: {'all' if label is None else label}")
        diag = ws.diagnostics()
        for fam in ("w1", "w2", "wc"):
            d = diag[fam]
            if d.get("n", 0) == 0:
                lines.append(f"  {fam}: none")
                continue
            lines.append(
                f"  {fam}: n={d['n']} min={d['min']:.6g} q01={d['q01']:.6g} median={d['median']:.6g} "
                f"mean={d['mean']:.6g} q99={d['q99']:.6g} max={d['max']:.6g}"
            )
        lines.append(f"  truncation: {diag['truncation']}")
    return "\n".join(lines) + "\n"


def manifest(command: str, argv, config: dict, seed) -> dict:
    from importlib.metadata import PackageNotFoundError, version

    try:
        pkg = version("artifact")
    except PackageNotFoundError:
        pkg = "unknown"
    return {
        "command": command,
        "argv": list(argv),
        "config": config,
        "seed": seed,
        "versions": {
            "package": pkg,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "platform": sys.platform,
    }
