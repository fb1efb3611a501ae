"""Command-line front end: ``mmanova {fit,simulate,coverage,predict}``.

Exit codes: 0 ok, 1 IO/parse failure, 2 validation error (JSON diagnostic on
stderr), 3 numerical failure.
"""

import argparse
import csv
import json
import os
import sys
import time
from pathlib import Path
from typing import List, Optional

import jsonschema
import numpy as np

from . import __version__
from .criteria import CRITERIA, PROBS, exceedance_matrix, posterior_covariances, summarize_posterior
from .errors import MMANOVAError, NumericalError, ValidationError
from .io import (
    load_config,
    manifest,
    read_dataset_csv,
    write_csv,
    write_dataset_csv,
    write_json,
)
from .model import Dataset, ModelSpec, build_model, one_way_config
from .posterior import STREAM_PREDICTIVE, SamplerConfig, run_posterior
from .predictive import ContrastSpec, NovelLevel, ObservedLevel, PredictiveScenario, predictive_contrast
from .linalg import rng_stream
from .simulation import coverage_experiment, generate_scenario

EXIT_OK, EXIT_IO, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2, 3

SCENARIO_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "levels": {
            "type": "object",
            "additionalProperties": {
                "oneOf": [
                    {"type": "integer", "minimum": 0},
                    {"type": "string"},
                    {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["level"],
                        "properties": {
                            "level": {"type": ["integer", "string"]},
                            "point_estimate": {"type": "boolean"},
                        },
                    },
                ]
            },
        },
        "point": {"type": "object", "additionalProperties": {"type": "number"}},
        "include_error": {"type": "boolean"},
        "global_mean": {"enum": ["point_estimate", "full_draws"]},
        "contrast": {
            "type": "object",
            "additionalProperties": False,
            "required": ["weights", "points"],
            "properties": {
                "weights": {"type": "array", "items": {"type": "number"}},
                "points": {"type": "array", "items": {"type": "object", "additionalProperties": {"type": "number"}}},
                "include": {"type": "object", "additionalProperties": {"type": "boolean"}},
            },
        },
    },
}


def _now() -> str:
    # SOURCE_DATE_EPOCH pins timestamps so whole output directories can be compared byte for byte
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = time.gmtime(int(epoch)) if epoch else time.gmtime()
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", t)


def _threads(arg: Optional[int]) -> int:
    if arg is not None:
        n = arg
    else:
        try:
            n = int(os.environ.get("MMANOVA_THREADS", "1"))
        except ValueError:
            raise ValidationError("MMANOVA_THREADS must be an integer") from None
    if n < 1:
        raise ValidationError("thread count must be at least 1")
    return n


def _sampler(config: dict, threads: int) -> SamplerConfig:
    return SamplerConfig(
        draws=config.get("draws", 1000),
        seed=config.get("seed", 0),
        rejection_cap=config.get("rejection_cap", 1000),
        fallback=config.get("fallback", "truncate"),
        threads=threads,
    )


def fit_from_files(data_path, config_path, threads: int = 1):
    config = load_config(config_path)
    data = read_dataset_csv(data_path, config)
    model = build_model(config, data)
    draws = run_posterior(model, data, _sampler(config, threads))
    return config, data, model, draws


def _upper_labels(d: int) -> List[str]:
    return [f"{i}{j}" for i in range(d) for j in range(i, d)]


def cmd_fit(args) -> int:
    started = _now()
    threads = _threads(args.threads)
    config, data, model, draws = fit_from_files(args.data, args.config, threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    probs = tuple(config.get("quantiles", PROBS))
    intervals = [s.as_dict() for s in summarize_posterior(draws, probs)]
    write_json(out / "intervals.json", intervals)

    exceed = {}
    for param in ("superpopulation", "finite"):
        exceed[param] = {}
        for kind in CRITERIA:
            names, m = exceedance_matrix(draws, param, kind)
            exceed[param][kind] = {"names": names, "matrix": m}
    write_json(out / "exceedance.json", exceed)
    files = ["intervals.json", "exceedance.json"]

    if args.draws_csv:
        covs = posterior_covariances(draws)
        iu = np.triu_indices(model.d)
        header = ["draw"] + [f"{b}:{p}:{lab}" for (b, p) in covs for lab in _upper_labels(model.d)]
        blocks = [covs[k][:, iu[0], iu[1]] for k in covs]
        table = np.hstack(blocks)
        write_csv(out / "draws.csv", header, ([r] + [float(v) for v in row] for r, row in enumerate(table)))
        files.append("draws.csv")

    man = manifest("fit", __version__, draws.config.seed, config, {"data": args.data, "config": args.config}, files, started, _now())
    write_json(out / "manifest.json", man)
    return EXIT_OK


def cmd_simulate(args) -> int:
    started = _now()
    scen, data = generate_scenario(args.case, args.n_alpha, args.n_eps, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_dataset_csv(out / "dataset.csv", data)
    config = dict(one_way_config(), responses=list(data.response_names), seed=args.seed, draws=args.draws)
    write_json(out / "model.json", config)
    truth = {
        "case": args.case,
        "sigma_alpha": scen.sigma_alpha,
        "sigma_eps": scen.sigma_eps,
        "finite_alpha": scen.finite_alpha,
        "alpha": scen.alpha,
    }
    write_json(out / "truth.json", truth)
    flags = {"case": args.case, "n_alpha": args.n_alpha, "n_eps": args.n_eps, "seed": args.seed, "draws": args.draws}
    man = manifest("simulate", __version__, args.seed, flags, {}, ["dataset.csv", "model.json", "truth.json"], started, _now())
    write_json(out / "manifest.json", man)
    return EXIT_OK


def _int_list(text: str) -> List[int]:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def cmd_coverage(args) -> int:
    started = _now()
    threads = _threads(args.threads)
    rep = coverage_experiment(args.case, args.n_alpha, args.n_eps, args.S, args.draws, args.level, args.seed, threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    header = ["n_alpha", "parameter", "criterion", "coverage", "mean_width", "median_width", "S"]
    rows = [
        [c.n_alpha, c.parameter, c.criterion, c.coverage, c.mean_width, c.median_width, c.S]
        for c in rep.cells + rep.reference
    ]
    write_csv(out / "coverage.csv", header, rows)
    doc = {
        "case": rep.case,
        "n_eps": rep.n_eps,
        "S": rep.S,
        "draws": rep.draws,
        "level": rep.level,
        "seed": rep.seed,
        "cells": [dict(zip(header, r)) for r in rows[: len(rep.cells)]],
        "reference": [dict(zip(header, r)) for r in rows[len(rep.cells):]],
    }
    write_json(out / "coverage.json", doc)
    flags = {k: getattr(args, k) for k in ("case", "n_eps", "S", "n_alpha", "draws", "level", "seed")}
    man = manifest("coverage", __version__, args.seed, flags, {}, ["coverage.csv", "coverage.json"], started, _now())
    write_json(out / "manifest.json", man)
    return EXIT_OK


def _resolve_level(model: ModelSpec, data: Dataset, name: str, spec):
    try:
        batch = model.batch(name)
    except KeyError:
        raise ValidationError(f"scenario names unknown batch {name!r}") from None
    point = False
    if isinstance(spec, dict):
        point = bool(spec.get("point_estimate", False))
        spec = spec["level"]
    if spec == "novel":
        return NovelLevel()
    if isinstance(spec, int):
        return ObservedLevel(spec, point)
    parts = spec.split(":")
    if len(parts) != len(batch.factors):
        raise ValidationError(f"level {spec!r} of batch {name!r} needs {len(batch.factors)} ':'-separated labels")
    idx = []
    for f, lab in zip(batch.factors, parts):
        labels = data.factor_labels[f]
        if lab not in labels:
            raise ValidationError(f"factor {f!r} has no level {lab!r}")
        idx.append(labels.index(lab))
    flat = int(np.ravel_multi_index(tuple(idx), batch.dims)) if batch.dims else 0
    return ObservedLevel(flat, point)


def cmd_predict(args) -> int:
    started = _now()
    threads = _threads(args.threads)
    config, data, model, draws = fit_from_files(args.data, args.config, threads)
    with open(args.scenario) as fh:
        doc = json.load(fh)
    try:
        jsonschema.validate(doc, SCENARIO_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ValidationError(f"scenario invalid at {where}: {exc.message}") from None
    levels = {k: _resolve_level(model, data, k, v) for k, v in doc.get("levels", {}).items()}
    scen = PredictiveScenario(levels, doc.get("point", {}), doc.get("include_error", True), doc.get("global_mean", "point_estimate"))
    if "contrast" in doc:
        c = doc["contrast"]
        contrast = ContrastSpec(c["weights"], c["points"], c.get("include", {}))
    else:
        contrast = ContrastSpec([1.0], [dict(scen.point)])
    rng = rng_stream(draws.config.seed, STREAM_PREDICTIVE)
    vals = predictive_contrast(model, draws, scen, contrast, rng)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "predictive.csv", ["draw"] + list(model.response_names), ([r] + [float(v) for v in row] for r, row in enumerate(vals)))
    man = manifest(
        "predict", __version__, draws.config.seed, {"config": config, "scenario": doc},
        {"data": args.data, "config": args.config, "scenario": args.scenario}, ["predictive.csv"], started, _now(),
    )
    write_json(out / "manifest.json", man)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mmanova", description="Multilevel multivariate ANOVA for balanced crossed designs.")
    p.add_argument("--version", action="version", version=f"mmanova {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="posterior intervals and exceedance probabilities for a dataset")
    f.add_argument("--data", required=True, help="long-format CSV")
    f.add_argument("--config", required=True, help="model JSON")
    f.add_argument("--out", required=True, help="output directory")
    f.add_argument("--threads", type=int, default=None)
    f.add_argument("--draws-csv", action="store_true", help="also write every covariance draw")
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("simulate", help="one-way scenario dataset")
    s.add_argument("--case", type=int, required=True, choices=(1, 2, 3))
    s.add_argument("--n-alpha", type=int, required=True)
    s.add_argument("--n-eps", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--draws", type=int, default=1000, help="draws recorded in the emitted model JSON")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("coverage", help="interval coverage experiment")
    c.add_argument("--case", type=int, required=True, choices=(1, 2, 3))
    c.add_argument("--n-eps", type=int, default=15)
    c.add_argument("--S", type=int, default=100, help="datasets per grid point")
    c.add_argument("--n-alpha", type=_int_list, default=[5, 20, 50])
    c.add_argument("--draws", type=int, default=1000)
    c.add_argument("--level", type=float, default=0.95)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--threads", type=int, default=None)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_coverage)

    q = sub.add_parser("predict", help="posterior predictive draws or contrasts")
    q.add_argument("--data", required=True)
    q.add_argument("--config", required=True)
    q.add_argument("--scenario", required=True, help="scenario JSON")
    q.add_argument("--threads", type=int, default=None)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_predict)
    return p


def _diagnostic(exc: MMANOVAError, kind: str) -> str:
    doc = {"error": kind, "type": type(exc).__name__, "message": str(exc)}
    batch = getattr(exc, "batch", None)
    if batch is not None:
        doc["batch"] = batch
    return json.dumps(doc)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(_diagnostic(exc, "validation"), file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(_diagnostic(exc, "numerical"), file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, csv.Error, json.JSONDecodeError, UnicodeDecodeError) as exc:
        print(json.dumps({"error": "io", "type": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
