"""File formats: dataset CSV, model JSON, result JSON/CSV and run manifests."""

import csv
import hashlib
import json
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Sequence

import jsonschema
import numpy as np

from .errors import ValidationError
from .model import Dataset

_PRIOR = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "psi": {"type": ["number", "array"]},
        "kappa": {"type": "number", "minimum": 0},
        "beta0": {"type": ["number", "array"]},
    },
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["responses", "batches"],
    "properties": {
        "responses": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "batches": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["name"],
                "properties": {
                    "name": {"type": "string", "minLength": 1},
                    "kind": {"enum": ["intercept", "main", "interaction", "slope"]},
                    "factors": {"type": "array", "items": {"type": "string"}},
                    "covariate": {"type": "string"},
                    "transform": {"enum": ["center", "orthogonalize", "none"]},
                    "prior": _PRIOR,
                },
            },
        },
        "error_prior": _PRIOR,
        "draws": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "quantiles": {
            "type": "array",
            "items": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            "minItems": 1,
        },
        "rejection_cap": {"type": "integer", "minimum": 1},
        "fallback": {"enum": ["truncate", "fail"]},
    },
}


def validate_config(config: Any) -> dict:
    try:
        jsonschema.validate(config, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ValidationError(f"model config invalid at {where}: {exc.message}") from None
    return config


def load_config(path) -> dict:
    with open(path) as fh:
        return validate_config(json.load(fh))


def read_dataset_csv(path, config: Mapping) -> Dataset:
    """Long-format CSV: one observation per row, header required.

    Factor columns (named in the config's batches) are coded in
    first-appearance order; covariate and response columns must be numeric.
    """
    responses = list(config["responses"])
    factors = sorted({f for b in config["batches"] for f in b.get("factors", ())})
    covariates = sorted({b["covariate"] for b in config["batches"] if "covariate" in b})
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in responses + factors + covariates if c not in header]
        if missing:
            raise ValidationError(f"dataset lacks columns: {', '.join(missing)}")
        rows = list(reader)
    if not rows:
        raise ValidationError("dataset has no rows")

    def numeric(col):
        out = []
        for k, r in enumerate(rows, start=2):
            v = (r[col] or "").strip()
            try:
                x = float(v)
            except ValueError:
                raise ValidationError(f"line {k}: column {col!r} value {v!r} is not numeric") from None
            if not math.isfinite(x):
                raise ValidationError(f"line {k}: column {col!r} is missing or non-finite")
            out.append(x)
        return out

    y = np.column_stack([numeric(c) for c in responses])
    facs = {}
    for f in factors:
        vals = [(r[f] or "").strip() for r in rows]
        if any(v == "" for v in vals):
            raise ValidationError(f"factor column {f!r} has missing values")
        facs[f] = vals
    covs = {c: np.array(numeric(c)) for c in covariates}
    return Dataset.from_labels(y, facs, covs, tuple(responses))


def fmt(x: float) -> str:
    x = float(x)
    if math.isnan(x) or math.isinf(x):
        raise ValueError("non-finite value in output")
    s = f"{x:.17g}"
    if "." not in s and "e" not in s and "n" not in s:
        s += ".0"
    return s


def _encode(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (float, np.floating)):
        return fmt(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, Mapping):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.number)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _encode(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    """JSON with every float written to 17 significant digits."""
    return _encode(obj, indent, 0) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj))


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def write_dataset_csv(path, dataset: Dataset) -> None:
    fac = list(dataset.factors)
    cov = list(dataset.covariates)
    header = fac + cov + list(dataset.response_names)
    rows = []
    for i in range(dataset.n):
        row: List = [dataset.factor_labels[f][dataset.factors[f][i]] for f in fac]
        row += [float(dataset.covariates[c][i]) for c in cov]
        row += [float(v) for v in dataset.responses[i]]
        rows.append(row)
    write_csv(path, header, rows)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def manifest(subcommand: str, version: str, seed, config: Any, inputs: Mapping[str, str], outputs: Sequence[str], started: str, finished: str) -> Dict:
    return {
        "subcommand": subcommand,
        "version": version,
        "seed": seed,
        "config_digest": digest(config),
        "inputs": {name: sha256_file(p) for name, p in inputs.items()},
        "outputs": list(outputs),
        "started": started,
        "finished": finished,
    }
