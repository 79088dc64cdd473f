"""Contamination models and Monte Carlo experiment grids.

Every record is determined by the run seed and the record's own key
(family, sample size, replication, contamination cell), so replications are
paired across estimators and kernels and results do not depend on the order
or the process in which records are computed.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from mmdcop.copulas import CopulaModel, Family
from mmdcop.errors import EstimationError, UnsupportedFamilyError
from mmdcop.estimators import EstimatorConfig, Method, estimate
from mmdcop.kernels import KernelSpec, Shape, Transform
from mmdcop.pseudo import PseudoSample, as_array, atoms_of, pseudo_observations

THREADS_ENV = "MMDCOP_THREADS"

# Desk-scale SGD budgets.  Grids start from the Kendall's tau inversion;
# the bandwidth sweep starts from independence so that it measures how
# quickly each kernel drives the descent, not the quality of the start.
BENCH_SGD = EstimatorConfig(n_iter=300, batch_size=100, eta0=1.0)
SWEEP_SGD = EstimatorConfig(n_iter=100, batch_size=100, eta0=1.0, init_tau=0.0)

CSV_HEADER = (
    "family", "estimator", "kernel", "transform", "gamma", "epsilon",
    "outlier", "n", "rep", "tau_hat", "sq_err", "failed",
)


class OutlierKind(str, Enum):
    UNIFORM = "uniform"
    TOP_LEFT = "top-left"
    BOTTOM_LEFT = "bottom-left"


@dataclass(frozen=True)
class OutlierType:
    """Law of injected outliers.

    ``uniform`` draws from the whole square, ``top-left`` from
    ``[0, q] x [1 - q, 1]`` and ``bottom-left`` from ``[0, q]^2``.
    """

    kind: OutlierKind = OutlierKind.TOP_LEFT
    q: float = 0.001

    def __post_init__(self):
        object.__setattr__(self, "kind", OutlierKind(self.kind))
        if not 0.0 < self.q < 0.5:
            raise ValueError("q must lie in (0, 0.5)")

    def draw(self, k: int, rng: np.random.Generator) -> np.ndarray:
        z = rng.random((k, 2))
        if self.kind is OutlierKind.UNIFORM:
            return z
        z = z * self.q
        if self.kind is OutlierKind.TOP_LEFT:
            z[:, 1] = 1.0 - z[:, 1]
        return z


def n_outliers(n: int, epsilon: float) -> int:
    """``round(epsilon * n)`` with halves rounded up."""
    return int(math.floor(epsilon * n + 0.5))


def inject_outliers(x, epsilon: float, ot: OutlierType, rng):
    """Copy of ``x`` with ``round(epsilon * n)`` random rows replaced by outliers.

    Returns the new array and the sorted indices of the replaced rows.
    """
    if not 0.0 <= epsilon <= 0.5:
        raise ValueError("epsilon must lie in [0, 0.5]")
    rng = np.random.default_rng(rng)
    x = as_array(x).copy()
    k = n_outliers(x.shape[0], epsilon)
    rows = np.sort(rng.choice(x.shape[0], size=k, replace=False)) if k else np.empty(0, dtype=int)
    if k:
        x[rows] = ot.draw(k, rng)
    return x, rows


def contaminate(s, epsilon: float, ot: OutlierType, rng) -> PseudoSample:
    """Replace ``round(epsilon * n)`` random rows by outliers, then re-rank.

    Replaced rows lose any diagonal flag.
    """
    x, rows = inject_outliers(s, epsilon, ot, rng)
    atoms = atoms_of(s)
    if atoms is not None:
        atoms = atoms.copy()
        atoms[rows] = False
    return pseudo_observations(x, atoms)


@dataclass(frozen=True)
class EstimatorSpec:
    """An estimator method together with its kernel when it uses one."""

    method: Method
    kernel: KernelSpec | None = None

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        uses_kernel = self.method in (Method.MMD, Method.MMD_CLOSED)
        if uses_kernel and self.kernel is None:
            object.__setattr__(self, "kernel", KernelSpec.default())
        if not uses_kernel:
            object.__setattr__(self, "kernel", None)

    @classmethod
    def parse(cls, d) -> EstimatorSpec:
        if isinstance(d, EstimatorSpec):
            return d
        if isinstance(d, str):
            return cls(Method(d))
        d = dict(d)
        method = Method(d.pop("method"))
        kernel = None
        if d:
            base = KernelSpec.default(d.get("transform", Transform.PROBIT))
            kernel = KernelSpec(
                d.get("kernel", base.shape), d.get("transform", base.transform), d.get("gamma", base.gamma)
            )
        return cls(method, kernel)


@dataclass(frozen=True)
class BenchRecord:
    family: str
    estimator: str
    kernel: str
    transform: str
    gamma: float | None
    epsilon: float
    outlier: str
    n: int
    rep: int
    tau_hat: float | None
    sq_err: float | None
    failed: bool

    def row(self) -> list:
        return [getattr(self, k) for k in CSV_HEADER]


@dataclass(frozen=True)
class GridConfig:
    """Cross product of families, estimators, contamination and sample sizes."""

    families: tuple = (Family.GAUSSIAN,)
    estimators: tuple = (EstimatorSpec(Method.ITAU),)
    epsilons: tuple = (0.0,)
    outliers: tuple = (OutlierType(),)
    ns: tuple = (1000,)
    reps: int = 100
    tau0: float = 0.5
    sgd: EstimatorConfig = BENCH_SGD

    def __post_init__(self):
        object.__setattr__(self, "families", tuple(Family.parse(f) for f in self.families))
        object.__setattr__(self, "estimators", tuple(EstimatorSpec.parse(e) for e in self.estimators))
        object.__setattr__(
            self, "outliers", tuple(o if isinstance(o, OutlierType) else OutlierType(o) for o in self.outliers)
        )
        object.__setattr__(self, "epsilons", tuple(float(e) for e in self.epsilons))
        object.__setattr__(self, "ns", tuple(int(n) for n in self.ns))
        if not (self.families and self.estimators and self.epsilons and self.outliers and self.ns):
            raise ValueError("every grid axis needs at least one value")
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        if any(not 0.0 <= e <= 0.5 for e in self.epsilons):
            raise ValueError("epsilon must lie in [0, 0.5]")
        if any(n < 2 for n in self.ns):
            raise ValueError("sample sizes must be at least 2")

    @classmethod
    def from_dict(cls, d: dict) -> GridConfig:
        d = dict(d)
        kw = {}
        for key in ("families", "estimators", "epsilons", "ns"):
            if key in d:
                kw[key] = tuple(d.pop(key))
        if "outliers" in d:
            kw["outliers"] = tuple(
                OutlierType(**o) if isinstance(o, dict) else OutlierType(o) for o in d.pop("outliers")
            )
        if "sgd" in d:
            kw["sgd"] = replace(BENCH_SGD, **d.pop("sgd"))
        for key in ("reps", "tau0"):
            if key in d:
                kw[key] = d.pop(key)
        if d:
            raise ValueError(f"unknown grid keys: {sorted(d)}")
        return cls(**kw)


@dataclass(frozen=True)
class SweepConfig:
    """Bandwidth sweep of the MMD estimator on Gaussian-copula data."""

    gammas: tuple = (0.95,)
    shapes: tuple = (Shape.GAUSSIAN,)
    transforms: tuple = (Transform.PROBIT,)
    n: int = 1000
    reps: int = 100
    tau0: float = 0.5
    family: Family = Family.GAUSSIAN
    sgd: EstimatorConfig = SWEEP_SGD

    def __post_init__(self):
        object.__setattr__(self, "gammas", tuple(float(g) for g in self.gammas))
        object.__setattr__(self, "shapes", tuple(Shape(s) for s in self.shapes))
        object.__setattr__(self, "transforms", tuple(Transform(t) for t in self.transforms))
        object.__setattr__(self, "family", Family.parse(self.family))
        if not self.gammas or any(not g > 0 for g in self.gammas):
            raise ValueError("the bandwidth grid must be nonempty and positive")
        if self.reps < 1 or self.n < 2:
            raise ValueError("need reps >= 1 and n >= 2")

    @classmethod
    def from_dict(cls, d: dict) -> SweepConfig:
        d = dict(d)
        kw = {k: tuple(d.pop(k)) for k in ("gammas", "shapes", "transforms") if k in d}
        if "sgd" in d:
            kw["sgd"] = replace(SWEEP_SGD, **d.pop("sgd"))
        for key in ("n", "reps", "tau0", "family"):
            if key in d:
                kw[key] = d.pop(key)
        if d:
            raise ValueError(f"unknown sweep keys: {sorted(d)}")
        return cls(**kw)


# ---------------------------------------------------------------------------
# Seeding

_FAMILY_CODE = {f: i for i, f in enumerate(Family)}
_OUTLIER_CODE = {k: i for i, k in enumerate(OutlierKind)}


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng([seed, *key])


def _child_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence([seed, *key]).generate_state(1)[0])


def _eps_code(eps: float) -> int:
    return int(round(eps * 1e9))


def _clean_sample(seed, family, tau0, n, rep):
    model = CopulaModel.from_tau(family, tau0)
    return model.sample(n, _stream(seed, _FAMILY_CODE[family], n, rep))


# ---------------------------------------------------------------------------
# Execution


def _fit_record(task) -> BenchRecord:
    (seed, family, spec, eps, ot, n, rep, tau0, sgd) = task
    s = _clean_sample(seed, family, tau0, n, rep)
    key = (_FAMILY_CODE[family], n, rep, _OUTLIER_CODE[ot.kind], _eps_code(eps))
    s = contaminate(s, eps, ot, _stream(seed, *key, 1))
    cfg = replace(sgd, seed=_child_seed(seed, *key, 2))
    try:
        tau_hat = float(estimate(s, family, spec.method, spec.kernel, cfg).tau_hat)
    except (EstimationError, ArithmeticError, UnsupportedFamilyError, FloatingPointError):
        tau_hat = math.nan
    failed = not math.isfinite(tau_hat)
    k = spec.kernel
    return BenchRecord(
        family=family.value,
        estimator=spec.method.value,
        kernel=k.shape.value if k else "",
        transform=k.transform.value if k else "",
        gamma=k.gamma if k else None,
        epsilon=eps,
        outlier=ot.kind.value,
        n=n,
        rep=rep,
        tau_hat=None if failed else tau_hat,
        sq_err=None if failed else (tau_hat - tau0) ** 2,
        failed=failed,
    )


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _run(tasks: list, threads: int | None) -> list[BenchRecord]:
    threads = default_threads() if threads is None else max(1, int(threads))
    if threads == 1 or len(tasks) < 2:
        return [_fit_record(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_fit_record, tasks, chunksize=max(1, len(tasks) // (4 * threads))))


def run_mse_grid(cfg: GridConfig, seed: int, threads: int | None = None) -> list[BenchRecord]:
    """Squared errors over the full grid, one record per (cell, replication)."""
    tasks = [
        (seed, fam, spec, eps, ot, n, rep, cfg.tau0, cfg.sgd)
        for fam in cfg.families
        for spec in cfg.estimators
        for ot in cfg.outliers
        for eps in cfg.epsilons
        for n in cfg.ns
        for rep in range(cfg.reps)
    ]
    return _run(tasks, threads)


def gamma_sweep(cfg: SweepConfig, seed: int, threads: int | None = None) -> list[BenchRecord]:
    """MMD squared errors across bandwidths, kernel shapes and transforms."""
    clean = OutlierType(OutlierKind.UNIFORM)
    tasks = [
        (seed, cfg.family, EstimatorSpec(Method.MMD, KernelSpec(shape, tr, g)), 0.0, clean, cfg.n, rep, cfg.tau0, cfg.sgd)
        for shape in cfg.shapes
        for tr in cfg.transforms
        for g in cfg.gammas
        for rep in range(cfg.reps)
    ]
    return _run(tasks, threads)


# ---------------------------------------------------------------------------
# Aggregation and output

_CELL = ("family", "estimator", "kernel", "transform", "gamma", "epsilon", "outlier", "n")


def _cell_key(r: BenchRecord):
    return tuple("" if v is None else v for v in (getattr(r, k) for k in _CELL))


def aggregate(records: Iterable[BenchRecord], tau0: float | None = None) -> list[dict]:
    """Mean squared error and its Monte Carlo standard error per grid cell.

    Failed replications are counted and excluded.  With ``tau0`` the mean
    bias of the estimates is reported too.
    """
    cells: dict = {}
    for r in records:
        cells.setdefault(_cell_key(r), []).append(r)
    out = []
    for key in sorted(cells, key=lambda k: tuple(str(v) for v in k)):
        rs = cells[key]
        ok = np.array([r.sq_err for r in rs if not r.failed])
        est = np.array([r.tau_hat for r in rs if not r.failed])
        cell = dict(zip(_CELL, key))
        cell["reps"] = len(rs)
        cell["failed"] = len(rs) - len(ok)
        cell["mse"] = float(ok.mean()) if len(ok) else None
        cell["mse_se"] = float(ok.std(ddof=1) / math.sqrt(len(ok))) if len(ok) > 1 else None
        cell["mean_tau_hat"] = float(est.mean()) if len(est) else None
        if tau0 is not None and len(est):
            cell["bias"] = float(est.mean() - tau0)
        out.append(cell)
    return out


def argmin_gamma(records: Iterable[BenchRecord]) -> dict:
    """Bandwidth with the smallest MSE for each (kernel shape, transform)."""
    best: dict = {}
    for cell in aggregate(records):
        if cell["mse"] is None:
            continue
        key = (cell["kernel"], cell["transform"])
        if key not in best or cell["mse"] < best[key][1]:
            best[key] = (cell["gamma"], cell["mse"])
    return {k: v[0] for k, v in best.items()}


def qmc_notes(families: Sequence, estimators: Sequence, sgd: EstimatorConfig) -> list[str]:
    notes = []
    uses_sgd = any(EstimatorSpec.parse(e).method is Method.MMD for e in estimators)
    for fam in families:
        fam = Family.parse(fam)
        if uses_sgd and sgd.qmc_for_v and not fam.supports_qmc:
            notes.append(f"quasi-Monte Carlo disabled for family '{fam.value}'; plain Monte Carlo used")
    return notes


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def records_to_csv(records: Iterable[BenchRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow([_fmt(v) for v in r.row()])
    return buf.getvalue()


def read_records_csv(text: str) -> list[BenchRecord]:
    rows = list(csv.DictReader(io.StringIO(text)))
    out = []
    for d in rows:
        out.append(
            BenchRecord(
                family=d["family"],
                estimator=d["estimator"],
                kernel=d["kernel"],
                transform=d["transform"],
                gamma=float(d["gamma"]) if d["gamma"] else None,
                epsilon=float(d["epsilon"]),
                outlier=d["outlier"],
                n=int(d["n"]),
                rep=int(d["rep"]),
                tau_hat=float(d["tau_hat"]) if d["tau_hat"] else None,
                sq_err=float(d["sq_err"]) if d["sq_err"] else None,
                failed=d["failed"] == "1",
            )
        )
    return out


def aggregate_json(records, tau0: float, notes=(), provenance=None) -> str:
    doc = {"tau0": tau0, "cells": aggregate(records, tau0), "notes": list(notes)}
    if provenance is not None:
        doc["provenance"] = provenance
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
