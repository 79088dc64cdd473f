"""Nonparametric bootstrap intervals and multiplier weights."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from mmdcop.errors import EstimationError
from mmdcop.pseudo import PseudoSample, as_array, pseudo_observations

MAX_RETRIES = 10


@dataclass(frozen=True)
class BootstrapSummary:
    point_estimate: float
    lower: float
    upper: float
    level: float
    n_resamples: int
    resample_estimates: list = field(repr=False)


def _resample_rng(seed: int, index: int, attempt: int) -> np.random.Generator:
    # Each resample owns a stream keyed by (seed, index, attempt), so the
    # result does not depend on the order resamples are evaluated in.
    return np.random.default_rng([seed, index, attempt])


def bootstrap_ci(
    raw,
    estimator: Callable[[PseudoSample], float],
    n_resamples: int = 1000,
    level: float = 0.95,
    seed: int = 0,
    atoms=None,
) -> BootstrapSummary:
    """Basic bootstrap interval for a Kendall's tau estimate.

    Parameters
    ----------
    raw : array_like, shape (n, 2)
        Raw observations.  Pseudo-observations are formed from the original
        rows and again from every resample.
    estimator : callable
        Maps a :class:`PseudoSample` to an estimate of Kendall's tau.
    n_resamples : int
        Number of resamples drawn with replacement.
    level : float
        Nominal coverage.
    seed : int
        Seed of the resampling streams.
    atoms : array_like of bool, optional
        Diagonal flags travelling with the rows.

    Returns
    -------
    BootstrapSummary
        ``[t + q_lo, t + q_hi]`` where ``q`` are type-7 quantiles of
        ``t - t*`` over the resamples.

    Raises
    ------
    EstimationError
        If a resample keeps failing after ``MAX_RETRIES`` redraws.
    """
    if n_resamples < 2:
        raise ValueError("n_resamples must be at least 2")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    x = as_array(raw)
    n = x.shape[0]
    flags = None if atoms is None else np.asarray(atoms, dtype=bool)
    theta = float(estimator(pseudo_observations(x, flags)))

    estimates = np.empty(n_resamples)
    for j in range(n_resamples):
        for attempt in range(MAX_RETRIES + 1):
            rows = _resample_rng(seed, j, attempt).integers(0, n, size=n)
            try:
                est = float(estimator(pseudo_observations(x[rows], None if flags is None else flags[rows])))
            except (EstimationError, ArithmeticError, ValueError):
                continue
            if np.isfinite(est):
                break
        else:
            raise EstimationError(f"estimator failed on resample {j} after {MAX_RETRIES} retries")
        estimates[j] = est

    alpha = 1.0 - level
    q_lo, q_hi = np.quantile(theta - estimates, [alpha / 2.0, 1.0 - alpha / 2.0])
    return BootstrapSummary(
        theta, theta + float(q_lo), theta + float(q_hi), level, n_resamples, estimates.tolist()
    )


def multiplier_weights(n: int, scheme: str = "multinomial", rng=None) -> np.ndarray:
    """Random observation weights with mean one.

    ``"multinomial"`` returns counts from ``Multinomial(n; 1/n, ..., 1/n)``;
    ``"iid-unit"`` returns i.i.d. standard exponential weights (mean and
    variance one).
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(rng)
    if scheme == "multinomial":
        return rng.multinomial(n, np.full(n, 1.0 / n)).astype(float)
    if scheme == "iid-unit":
        return rng.standard_exponential(n)
    raise ValueError(f"unknown weight scheme {scheme!r}")
