"""Command-line interface.

Exit codes: 0 success, 2 input or configuration error, 3 non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from mmdcop import __version__
from mmdcop.bench import (
    GridConfig,
    SweepConfig,
    aggregate_json,
    gamma_sweep,
    qmc_notes,
    records_to_csv,
    run_mse_grid,
)
from mmdcop.bootstrap import bootstrap_ci
from mmdcop.copulas import Family
from mmdcop.errors import ConvergenceError, EstimationError, UnsupportedFamilyError
from mmdcop.estimators import EstimatorConfig, Method, estimate
from mmdcop.kernels import KernelSpec, Shape, Transform
from mmdcop.pseudo import pseudo_observations

EXIT_OK, EXIT_INPUT, EXIT_CONVERGENCE = 0, 2, 3
MIN_ROWS = 10


class InputError(Exception):
    pass


def read_csv_pairs(path) -> np.ndarray:
    """First two columns of a comma-separated file as an ``(n, 2)`` array.

    A first row that does not parse as numbers is taken as a header.
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except (OSError, UnicodeDecodeError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    if rows:
        try:
            [float(c) for c in rows[0]]
        except ValueError:
            rows = rows[1:]
    if not rows:
        raise InputError("no data rows")
    if any(len(r) < 2 for r in rows):
        raise InputError("every row needs at least two columns")
    try:
        x = np.array([[float(r[0]), float(r[1])] for r in rows])
    except ValueError as exc:
        raise InputError(f"non-numeric value: {exc}") from exc
    if len(x) < MIN_ROWS:
        raise InputError(f"need at least {MIN_ROWS} rows, got {len(x)}")
    if not np.all(np.isfinite(x)):
        raise InputError("non-finite values in input")
    return x


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise InputError("config must be a JSON object")
    return cfg


def _config_hash(d: dict) -> str:
    blob = json.dumps(d, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _provenance(seed, settings: dict) -> dict:
    return {"seed": seed, "config_hash": _config_hash(settings), "version": __version__}


def _dump(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _write(text: str, path) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _settings(args, file_cfg: dict) -> dict:
    """Merge flags over the config file; flags win."""
    merged = {
        "family": "gaussian",
        "method": "mmd",
        "kernel": "gaussian",
        "transform": "probit",
        "gamma": None,
        "niter": EstimatorConfig.n_iter,
        "batch": None,
        "eta0": EstimatorConfig.eta0,
        "seed": 0,
        "resamples": 1000,
        "level": 0.95,
    }
    unknown = set(file_cfg) - set(merged)
    if unknown:
        raise InputError(f"unknown config keys: {sorted(unknown)}")
    merged.update(file_cfg)
    for key in merged:
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    return merged


def _build(settings: dict):
    try:
        family = Family.parse(settings["family"])
        method = Method(settings["method"])
        transform = Transform(settings["transform"])
        gamma = settings["gamma"]
        if gamma is None:
            gamma = KernelSpec.default(transform).gamma
        kernel = KernelSpec(Shape(settings["kernel"]), transform, gamma)
        cfg = EstimatorConfig(
            n_iter=int(settings["niter"]),
            batch_size=None if settings["batch"] is None else int(settings["batch"]),
            eta0=float(settings["eta0"]),
            seed=int(settings["seed"]),
        )
    except (ValueError, TypeError) as exc:
        raise InputError(f"invalid configuration: {exc}") from exc
    return family, method, kernel, cfg


def _kernel_fields(method, kernel) -> dict:
    if method in (Method.MMD, Method.MMD_CLOSED):
        return {"kernel": kernel.shape.value, "transform": kernel.transform.value, "gamma": kernel.gamma}
    return {"kernel": None, "transform": None, "gamma": None}


def cmd_estimate(args) -> int:
    settings = _settings(args, _load_config(args.config))
    family, method, kernel, cfg = _build(settings)
    x = read_csv_pairs(args.input)
    s = pseudo_observations(x)
    base = {"family": family.value, "method": method.value, "n": len(x), "seed": cfg.seed, **_kernel_fields(method, kernel)}
    prov = _provenance(cfg.seed, {**settings, "subcommand": "estimate"})
    try:
        res = estimate(s, family, method, kernel, cfg)
    except ConvergenceError as exc:
        doc = {**base, "error": str(exc), "trajectory": exc.trajectory, "provenance": prov}
        _write(_dump(doc), args.output)
        return EXIT_CONVERGENCE
    except UnsupportedFamilyError as exc:
        raise InputError(str(exc)) from exc
    except EstimationError as exc:
        _write(_dump({**base, "error": str(exc), "provenance": prov}), args.output)
        return EXIT_CONVERGENCE
    doc = {
        **base,
        "param_hat": res.param_hat,
        "tau_hat": res.tau_hat,
        "n_iter_used": res.n_iter_used,
        "provenance": prov,
    }
    _write(_dump(doc), args.output)
    return EXIT_OK


def cmd_bootstrap(args) -> int:
    settings = _settings(args, _load_config(args.config))
    family, method, kernel, cfg = _build(settings)
    n_res, level = int(settings["resamples"]), float(settings["level"])
    if n_res < 2:
        raise InputError("--resamples must be at least 2")
    if not 0.0 < level < 1.0:
        raise InputError("--level must lie in (0, 1)")
    x = read_csv_pairs(args.input)

    def est(s):
        return estimate(s, family, method, kernel, cfg).tau_hat

    prov = _provenance(cfg.seed, {**settings, "subcommand": "bootstrap"})
    try:
        summary = bootstrap_ci(x, est, n_res, level, cfg.seed)
    except UnsupportedFamilyError as exc:
        raise InputError(str(exc)) from exc
    except EstimationError as exc:
        _write(_dump({"error": str(exc), "provenance": prov}), args.output)
        return EXIT_CONVERGENCE
    doc = {
        "family": family.value,
        "method": method.value,
        **_kernel_fields(method, kernel),
        "tau_hat": summary.point_estimate,
        "lower": summary.lower,
        "upper": summary.upper,
        "level": summary.level,
        "n_resamples": summary.n_resamples,
        "n": len(x),
        "provenance": prov,
    }
    _write(_dump(doc), args.output)
    return EXIT_OK


def _sgd_from_flags(args, base: EstimatorConfig) -> EstimatorConfig:
    kw = {}
    if args.niter is not None:
        kw["n_iter"] = args.niter
    if args.batch is not None:
        kw["batch_size"] = args.batch
    if args.eta0 is not None:
        kw["eta0"] = args.eta0
    return replace(base, **kw)


def _bench_output(args, csv_text: str, json_text: str) -> None:
    out = Path(args.output)
    out.write_text(csv_text, encoding="utf-8")
    out.with_suffix(".json").write_text(json_text, encoding="utf-8")


def _require_bench_args(args) -> dict:
    if args.seed is None:
        raise InputError("--seed is required")
    if args.output is None:
        raise InputError("--output is required")
    return _load_config(args.config)


def cmd_benchmark(args) -> int:
    raw = _require_bench_args(args)
    try:
        grid = GridConfig.from_dict(raw)
        grid = replace(grid, sgd=_sgd_from_flags(args, grid.sgd))
    except (ValueError, TypeError, KeyError) as exc:
        raise InputError(f"invalid grid: {exc}") from exc
    records = run_mse_grid(grid, args.seed, args.threads)
    notes = qmc_notes(grid.families, grid.estimators, grid.sgd)
    prov = _provenance(args.seed, {"grid": raw, "sgd": asdict(grid.sgd), "subcommand": "benchmark"})
    _bench_output(args, records_to_csv(records), aggregate_json(records, grid.tau0, notes, prov))
    return EXIT_OK


def cmd_sweep(args) -> int:
    raw = _require_bench_args(args)
    try:
        sweep = SweepConfig.from_dict(raw)
        sweep = replace(sweep, sgd=_sgd_from_flags(args, sweep.sgd))
    except (ValueError, TypeError, KeyError) as exc:
        raise InputError(f"invalid sweep: {exc}") from exc
    records = gamma_sweep(sweep, args.seed, args.threads)
    notes = qmc_notes([sweep.family], [Method.MMD], sweep.sgd)
    prov = _provenance(args.seed, {"sweep": raw, "sgd": asdict(sweep.sgd), "subcommand": "sweep"})
    _bench_output(args, records_to_csv(records), aggregate_json(records, sweep.tau0, notes, prov))
    return EXIT_OK


def _positive_float(text):
    v = float(text)
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mmdcop", description="Robust bivariate copula estimation.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, with_input):
        if with_input:
            sp.add_argument("input", help="CSV file, two numeric columns, optional header")
        sp.add_argument("--family", choices=[f.value for f in Family])
        sp.add_argument("--method", choices=[m.value for m in Method])
        sp.add_argument("--kernel", choices=[s.value for s in Shape])
        sp.add_argument("--transform", choices=[t.value for t in Transform])
        sp.add_argument("--gamma", type=_positive_float)
        sp.add_argument("--niter", type=int)
        sp.add_argument("--batch", type=int)
        sp.add_argument("--eta0", type=_positive_float)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--config", help="JSON file with settings; flags take precedence")
        sp.add_argument("--output", help="output path (default: stdout)")

    est = sub.add_parser("estimate", help="fit one copula")
    common(est, True)
    est.set_defaults(func=cmd_estimate)

    boot = sub.add_parser("bootstrap", help="basic bootstrap interval for Kendall's tau")
    common(boot, True)
    boot.add_argument("--resamples", type=int)
    boot.add_argument("--level", type=float)
    boot.set_defaults(func=cmd_bootstrap)

    for name, func, helptext in (
        ("benchmark", cmd_benchmark, "contamination MSE grid"),
        ("sweep", cmd_sweep, "kernel bandwidth sweep"),
    ):
        sp = sub.add_parser(name, help=helptext)
        common(sp, False)
        sp.add_argument("--threads", type=int, help="worker processes (default from MMDCOP_THREADS)")
        sp.set_defaults(func=func)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
