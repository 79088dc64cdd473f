"""Copula parameter estimators.

``fit_mmd`` minimizes the MMD between the model and the pseudo-sample by
stochastic gradient descent.  ``fit_mmd_gaussian_closed`` minimizes the exact
criterion available for the Gaussian family under the probit-Gaussian
kernel.  ``fit_cml`` (canonical maximum likelihood) and ``fit_itau``
(inversion of Kendall's tau) are the classical reference estimators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.stats import qmc

from mmdcop.copulas import (
    MO_ALPHA_BOUNDS,
    TAU_BOUNDS,
    CopulaModel,
    Family,
    dparam_dtau,
)
from mmdcop.errors import ConvergenceError, EstimationError, UnsupportedFamilyError
from mmdcop.kernels import KernelSpec, Shape, Transform
from mmdcop.mmd import gaussian_closed_criterion
from mmdcop.pseudo import as_array, atoms_of, kendall_tau


class Method(str, Enum):
    MMD = "mmd"
    MMD_CLOSED = "mmd-closed"
    CML = "cml"
    ITAU = "itau"


@dataclass(frozen=True)
class EstimatorConfig:
    """Settings of the stochastic gradient descent.

    ``eta0`` is the base step in the working coordinate (Kendall's tau, or
    ``alpha`` for Marshall-Olkin); step ``t`` is ``eta0 / sqrt(t)``.
    ``batch_size=None`` means ``min(n, 1024)``.
    """

    n_iter: int = 500
    batch_size: int | None = None
    eta0: float = 1.0
    qmc_for_v: bool = True
    init_tau: float | str = "from-itau"
    averaging_window: float = 0.5
    seed: int = 0
    keep_trajectory: bool = False

    def __post_init__(self):
        if self.n_iter < 1:
            raise ValueError("n_iter must be at least 1")
        if self.batch_size is not None and self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")
        if not 0.0 < self.averaging_window <= 1.0:
            raise ValueError("averaging_window must lie in (0, 1]")
        if not self.eta0 > 0.0:
            raise ValueError("eta0 must be positive")
        if isinstance(self.init_tau, str) and self.init_tau != "from-itau":
            raise ValueError("init_tau must be a number or 'from-itau'")


@dataclass
class EstimateResult:
    model: CopulaModel
    method: Method
    criterion_value: float | None = None
    n_iter_used: int = 0
    trajectory: list | None = field(default=None, repr=False)

    @property
    def tau_hat(self) -> float:
        return self.model.tau

    @property
    def param_hat(self) -> float:
        return self.model.param


def _clip_tau(family: Family, tau: float) -> float:
    lo, hi = TAU_BOUNDS[family]
    return float(min(max(tau, lo), hi))


def _check_sample(s) -> np.ndarray:
    u = as_array(s)
    if u.shape[0] < 2:
        raise ValueError("need at least two pseudo-observations")
    if not np.all((u > 0.0) & (u < 1.0)):
        raise ValueError("pseudo-observations must lie in the open unit square")
    return u


# ---------------------------------------------------------------------------
# Working coordinate: Kendall's tau, except alpha for Marshall-Olkin.


def _coord_bounds(family: Family):
    return MO_ALPHA_BOUNDS if family is Family.MO else TAU_BOUNDS[family]


def _model_at(family: Family, coord: float) -> CopulaModel:
    if family is Family.MO:
        return CopulaModel.from_param(family, coord)
    return CopulaModel.from_tau(family, coord)


def _coord_of(model: CopulaModel) -> float:
    return model.param if model.family is Family.MO else model.tau


def fit_itau(s, family) -> EstimateResult:
    """Invert the sample Kendall's tau, clipped into the family bounds."""
    family = Family.parse(family)
    u = _check_sample(s)
    tau = kendall_tau(u)
    if not math.isfinite(tau):
        tau = 0.0
    return EstimateResult(CopulaModel.from_tau(family, _clip_tau(family, tau)), Method.ITAU)


def fit_mmd(s, family, kernel: KernelSpec | None = None, cfg: EstimatorConfig | None = None):
    """MMD estimate by stochastic gradient descent.

    At each step two batches ``U`` and ``V`` of size ``m`` are drawn from
    the current model (``V`` by quasi-Monte Carlo when enabled) and the
    working coordinate moves against

        2/m sum_j score(U_j) * (mean_i K(U_j, V_i) - mean_i K(U_j, Uhat_i)),

    an unbiased estimate of the derivative of the squared MMD.  The data
    term averages over the whole pseudo-sample.  The estimate is the mean
    of the iterates in the final ``averaging_window`` fraction of the run.
    """
    family = Family.parse(family)
    kernel = kernel or KernelSpec.default()
    cfg = cfg or EstimatorConfig()
    u = _check_sample(s)
    n = u.shape[0]
    m = cfg.batch_size or min(n, 1024)
    rng = np.random.default_rng(cfg.seed)
    use_qmc = cfg.qmc_for_v and family.supports_qmc
    halton = qmc.Halton(d=2, scramble=False, seed=0) if use_qmc else None
    if halton is not None:
        halton.fast_forward(1)

    lo, hi = _coord_bounds(family)
    if cfg.init_tau == "from-itau":
        coord = _coord_of(fit_itau(u, family).model)
    else:
        coord = _coord_of(CopulaModel.from_tau(family, _clip_tau(family, float(cfg.init_tau))))
    coord = min(max(coord, lo), hi)

    feat_data = kernel.features(u)
    start_avg = cfg.n_iter - max(1, int(round(cfg.averaging_window * cfg.n_iter)))
    trajectory = [(0, coord)]
    acc, count = 0.0, 0
    for t in range(1, cfg.n_iter + 1):
        model = _model_at(family, coord)
        grad = _stochastic_gradient(model, kernel, feat_data, m, rng, halton)
        if not math.isfinite(grad):
            raise ConvergenceError(f"non-finite gradient at iteration {t}", trajectory)
        coord = min(max(coord - cfg.eta0 / math.sqrt(t) * grad, lo), hi)
        trajectory.append((t, coord))
        if t > start_avg:
            acc += coord
            count += 1
    fitted = _model_at(family, acc / count)
    return EstimateResult(
        fitted,
        Method.MMD,
        n_iter_used=cfg.n_iter,
        trajectory=trajectory if cfg.keep_trajectory else None,
    )


def _stochastic_gradient(model, kernel, feat_data, m, rng, halton) -> float:
    """One draw of the gradient of the squared MMD in the working coordinate."""
    U = model.sample(m, rng)
    if halton is not None:
        V = model.sample_qmc(halton.random(m))
    else:
        V = model.sample(m, rng)
    score = model.score(U)
    if model.family is not Family.MO:
        score = score * dparam_dtau(model.family, model.tau)
    fu = kernel.features(U.data)
    k_model = kernel.gram_features(fu, kernel.features(V.data)).mean(axis=1)
    k_data = kernel.gram_features(fu, feat_data).mean(axis=1)
    return float(2.0 * np.mean(score * (k_model - k_data)))


_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_min(f, lo, hi, xtol):
    """Golden-section search for a minimizer of ``f`` on ``[lo, hi]``."""
    a, b = lo, hi
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > xtol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    x = (a + b) / 2.0
    candidates = [(f(x), x), (f(lo), lo), (f(hi), hi)]
    return min(candidates, key=lambda p: (p[0], p[1]))


def fit_mmd_gaussian_closed(s, gamma: float = 0.95) -> EstimateResult:
    """Gaussian-copula MMD estimate under the probit-Gaussian kernel.

    Minimizes the exact criterion over the correlation in
    ``[-0.999, 0.999]`` by golden-section search.
    """
    u = _check_sample(s)
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    crit, rho = _golden_min(
        lambda r: gaussian_closed_criterion(r, u, gamma), -0.999, 0.999, 1e-8
    )
    model = CopulaModel.from_param(Family.GAUSSIAN, rho)
    return EstimateResult(model, Method.MMD_CLOSED, criterion_value=crit)


def _neg_loglik(family, u, atoms):
    def f(coord):
        try:
            ll = np.sum(_model_at(family, coord).log_density(u, atoms))
        except (FloatingPointError, ValueError):
            return math.inf
        return -float(ll) if math.isfinite(ll) else math.inf

    return f


def fit_cml(s, family, seed: int = 0) -> EstimateResult:
    """Canonical maximum likelihood on pseudo-observations.

    Golden-section search over the full parameter range, followed by three
    searches on random sub-intervals; the best of the four is returned.
    Marshall-Olkin rows flagged as atoms contribute the diagonal density.
    """
    family = Family.parse(family)
    u = _check_sample(s)
    atoms = atoms_of(s)
    lo, hi = _coord_bounds(family)
    f = _neg_loglik(family, u, atoms)
    with np.errstate(all="ignore"):
        best = _golden_min(f, lo, hi, 1e-8)
        rng = np.random.default_rng(seed)
        for _ in range(3):
            a, b = np.sort(rng.uniform(lo, hi, size=2))
            if b - a > 1e-6:
                best = min(best, _golden_min(f, a, b, 1e-8), key=lambda p: (p[0], p[1]))
    if not math.isfinite(best[0]):
        raise EstimationError("log-likelihood is not finite anywhere in the parameter range")
    return EstimateResult(_model_at(family, best[1]), Method.CML, criterion_value=-best[0])


def estimate(s, family, method="mmd", kernel: KernelSpec | None = None, cfg=None):
    """Dispatch to one of the four estimators by name."""
    method = Method(method)
    family = Family.parse(family)
    if method is Method.ITAU:
        return fit_itau(s, family)
    if method is Method.CML:
        return fit_cml(s, family, seed=(cfg or EstimatorConfig()).seed)
    if method is Method.MMD_CLOSED:
        if family is not Family.GAUSSIAN:
            raise UnsupportedFamilyError("the closed-form estimator exists for the Gaussian family only")
        kernel = kernel or KernelSpec.default()
        if kernel.shape is not Shape.GAUSSIAN or kernel.transform is not Transform.PROBIT:
            raise UnsupportedFamilyError("the closed-form estimator needs the probit-Gaussian kernel")
        return fit_mmd_gaussian_closed(s, kernel.gamma)
    return fit_mmd(s, family, kernel, cfg)
