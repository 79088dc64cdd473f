"""Bivariate one-parameter copula families.

Every family is parametrized both by its natural parameter and by Kendall's
tau; :class:`CopulaModel` keeps the two in sync.  Densities, scores and
conditional quantiles are vectorized over ``(n, 2)`` arrays of points.

The diagonal Marshall-Olkin family (``alpha == beta``) has a singular
component on the main diagonal.  Its density is taken with respect to
Lebesgue measure on the square plus Lebesgue measure on the diagonal, so the
functions below take an ``atoms`` mask telling which rows sit on the diagonal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import optimize
from scipy.special import bernoulli, ndtr, ndtri, spence
from scipy.stats import qmc

from mmdcop.errors import DomainError, UnsupportedFamilyError
from mmdcop.pseudo import PseudoSample, as_array, atoms_of

# Samples are kept strictly inside the unit square.
_EPS = 1e-15


class Family(str, Enum):
    GAUSSIAN = "gaussian"
    CLAYTON = "clayton"
    GUMBEL = "gumbel"
    FRANK = "frank"
    MO = "mo"

    @classmethod
    def parse(cls, value) -> Family:
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {"marshall-olkin": cls.MO, "marshallolkindiag": cls.MO, "normal": cls.GAUSSIAN}
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown copula family {value!r}") from None

    @property
    def absolutely_continuous(self) -> bool:
        return self is not Family.MO

    @property
    def supports_qmc(self) -> bool:
        return self is not Family.MO


# Kendall's tau bounds per family; Marshall-Olkin is bounded through alpha.
MO_ALPHA_BOUNDS = (0.05, 0.95)
TAU_BOUNDS = {
    Family.GAUSSIAN: (-0.95, 0.95),
    Family.FRANK: (-0.95, 0.95),
    Family.CLAYTON: (0.01, 0.95),
    Family.GUMBEL: (0.01, 0.95),
    Family.MO: (
        MO_ALPHA_BOUNDS[0] / (2.0 - MO_ALPHA_BOUNDS[0]),
        MO_ALPHA_BOUNDS[1] / (2.0 - MO_ALPHA_BOUNDS[1]),
    ),
}

# Bracket for the Frank tau inversion; |tau| = 0.95 needs |theta| near 78.
_FRANK_BRACKET = 120.0


def _check_points(u) -> np.ndarray:
    u = np.atleast_2d(np.asarray(u, dtype=float))
    if u.shape[-1] != 2:
        raise ValueError(f"expected points with 2 coordinates, got shape {u.shape}")
    if not np.all((u > 0.0) & (u < 1.0)):
        raise DomainError("points must lie in the open unit square")
    return u


# ---------------------------------------------------------------------------
# Frank helpers


# Series of tau(theta) = 4 sum_{k>=2} B_k theta^(k-1) / (k! (k+1)), |theta| < 2 pi.
_FRANK_SERIES = [
    4.0 * float(b) / (math.factorial(k) * (k + 1))
    for k, b in enumerate(bernoulli(24))
][2:]
_FRANK_SERIES_RADIUS = 1.0


def _debye1(theta: float) -> float:
    """First Debye function ``D1(x) = x^{-1} int_0^x t / (e^t - 1) dt``."""
    if theta == 0.0:
        return 1.0
    if theta < 0.0:
        return _debye1(-theta) - theta / 2.0
    # int_0^x t/(e^t - 1) dt = pi^2/6 + x log(1 - e^-x) - Li2(e^-x)
    z = math.exp(-theta)
    integral = math.pi**2 / 6.0 + theta * math.log1p(-z) - float(spence(1.0 - z))
    return integral / theta


def _frank_tau(theta: float) -> float:
    if abs(theta) < _FRANK_SERIES_RADIUS:
        return sum(c * theta ** (j + 1) for j, c in enumerate(_FRANK_SERIES))
    return 1.0 - 4.0 / theta + 4.0 * _debye1(theta) / theta


def _frank_dtau(theta: float) -> float:
    if abs(theta) < _FRANK_SERIES_RADIUS:
        return sum((j + 1) * c * theta**j for j, c in enumerate(_FRANK_SERIES))
    d1 = _debye1(theta)
    return 4.0 / theta**2 - 8.0 * d1 / theta**2 + 4.0 / (theta * math.expm1(theta))


# ---------------------------------------------------------------------------
# tau <-> parameter


def _param_bounds(family: Family) -> tuple[float, float]:
    """Open natural-parameter domain of each family."""
    return {
        Family.GAUSSIAN: (-1.0, 1.0),
        Family.CLAYTON: (0.0, math.inf),
        Family.GUMBEL: (1.0, math.inf),
        Family.FRANK: (-math.inf, math.inf),
        Family.MO: (0.0, 1.0),
    }[family]


def tau_to_param(family, tau: float) -> float:
    """Natural parameter with Kendall's tau equal to ``tau``.

    For the Marshall-Olkin family the parameter is ``alpha``.
    """
    family = Family.parse(family)
    tau = float(tau)
    lo, hi = TAU_BOUNDS[family]
    if not (lo - 1e-12 <= tau <= hi + 1e-12):
        raise DomainError(f"tau={tau} outside [{lo}, {hi}] for {family.value}")
    if family is Family.GAUSSIAN:
        return math.sin(math.pi * tau / 2.0)
    if family is Family.CLAYTON:
        return 2.0 * tau / (1.0 - tau)
    if family is Family.GUMBEL:
        return 1.0 / (1.0 - tau)
    if family is Family.MO:
        return 2.0 * tau / (1.0 + tau)
    if tau == 0.0:
        return 0.0
    return optimize.brentq(
        lambda t: _frank_tau(t) - tau,
        -_FRANK_BRACKET,
        _FRANK_BRACKET,
        xtol=1e-13,
        rtol=4 * np.finfo(float).eps,
        maxiter=200,
    )


def param_to_tau(family, param: float) -> float:
    """Kendall's tau of the family at natural parameter ``param``."""
    family = Family.parse(family)
    param = float(param)
    lo, hi = _param_bounds(family)
    closed = family is Family.GAUSSIAN
    inside = lo <= param <= hi if closed else lo < param < hi
    if family is Family.GUMBEL:
        inside = param >= 1.0
    if not inside or not math.isfinite(param):
        raise DomainError(f"parameter {param} outside the domain of {family.value}")
    if family is Family.GAUSSIAN:
        return 2.0 * math.asin(param) / math.pi
    if family is Family.CLAYTON:
        return param / (param + 2.0)
    if family is Family.GUMBEL:
        return 1.0 - 1.0 / param
    if family is Family.MO:
        return param / (2.0 - param)
    return _frank_tau(param)


def dparam_dtau(family, tau: float) -> float:
    """Derivative of the natural parameter with respect to Kendall's tau."""
    family = Family.parse(family)
    if family is Family.GAUSSIAN:
        return 0.5 * math.pi * math.cos(0.5 * math.pi * tau)
    if family is Family.CLAYTON:
        return 2.0 / (1.0 - tau) ** 2
    if family is Family.GUMBEL:
        return 1.0 / (1.0 - tau) ** 2
    if family is Family.MO:
        return 2.0 / (1.0 + tau) ** 2
    return 1.0 / _frank_dtau(tau_to_param(family, tau))


# ---------------------------------------------------------------------------
# log-densities


def _gauss_logpdf(u, v, rho):
    x, y = ndtri(u), ndtri(v)
    r2 = 1.0 - rho * rho
    return -0.5 * np.log(r2) - (rho * rho * (x * x + y * y) - 2.0 * rho * x * y) / (2.0 * r2)


def _gauss_score(u, v, rho):
    x, y = ndtri(u), ndtri(v)
    r2 = 1.0 - rho * rho
    return rho / r2 + (x * y * (1.0 + rho * rho) - rho * (x * x + y * y)) / (r2 * r2)


def _clayton_logS(lu, lv, theta):
    # log(u^-theta + v^-theta - 1) with u^-theta computed in log space.
    a, b = -theta * lu, -theta * lv
    m = np.logaddexp(a, b)
    return m + np.log1p(-np.exp(-m))


def _clayton_logpdf(u, v, theta):
    lu, lv = np.log(u), np.log(v)
    logS = _clayton_logS(lu, lv, theta)
    return math.log1p(theta) - (theta + 1.0) * (lu + lv) - (2.0 + 1.0 / theta) * logS


def _clayton_score(u, v, theta):
    lu, lv = np.log(u), np.log(v)
    logS = _clayton_logS(lu, lv, theta)
    # dS/dtheta / S with S = u^-t + v^-t - 1
    dS = -(np.exp(-theta * lu - logS) * lu + np.exp(-theta * lv - logS) * lv)
    return 1.0 / (1.0 + theta) - (lu + lv) + logS / theta**2 - (2.0 + 1.0 / theta) * dS


def _gumbel_parts(u, v, theta):
    x, y = -np.log(u), -np.log(v)
    lx, ly = np.log(x), np.log(y)
    logA = np.logaddexp(theta * lx, theta * ly)
    w = np.exp(logA / theta)
    return x, y, lx, ly, logA, w


def _gumbel_logpdf(u, v, theta):
    x, y, lx, ly, logA, w = _gumbel_parts(u, v, theta)
    return (
        -w
        + (theta - 1.0) * (lx + ly)
        + x
        + y
        + (-2.0 + 2.0 / theta) * logA
        + np.log1p((theta - 1.0) / w)
    )


def _gumbel_score(u, v, theta):
    x, y, lx, ly, logA, w = _gumbel_parts(u, v, theta)
    # A'/A where A = x^theta + y^theta
    px = np.exp(theta * lx - logA)
    dA_over_A = px * lx + (1.0 - px) * ly
    dlogw = -logA / theta**2 + dA_over_A / theta
    dw = w * dlogw
    q = (theta - 1.0) / w
    dq = 1.0 / w - (theta - 1.0) * dw / (w * w)
    return (
        -dw
        + (lx + ly)
        - 2.0 * logA / theta**2
        + (-2.0 + 2.0 / theta) * dA_over_A
        + dq / (1.0 + q)
    )


# Frank near independence: log c = t*a1 + t^2*a2 + t^3*a3 + O(t^4).
_FRANK_SMALL = 1e-3


def _frank_series(u, v):
    a1 = 0.5 * (2.0 * u - 1.0) * (2.0 * v - 1.0)
    a2 = u * v * (u - 1.0) * (v - 1.0) - 1.0 / 24.0
    a3 = u * v * (u - 1.0) * (2.0 * u - 1.0) * (v - 1.0) * (2.0 * v - 1.0) / 6.0
    return a1, a2, a3


def _frank_D(u, v, theta):
    # (1 - e^-t) - (1 - e^-tu)(1 - e^-tv), regrouped as a sum of two terms
    # of equal sign to avoid cancellation near (1, 1).
    return -(np.exp(-theta * u) * np.expm1(-theta * v) + np.exp(-theta * v) * np.expm1(-theta * (1.0 - v)))


def _frank_logpdf(u, v, theta):
    if abs(theta) < _FRANK_SMALL:
        a1, a2, a3 = _frank_series(u, v)
        return theta * a1 + theta**2 * a2 + theta**3 * a3
    D = _frank_D(u, v, theta)
    # theta * (1 - e^-theta) and D share sign, so logs of ratios are safe.
    return (
        math.log(theta * -math.expm1(-theta))
        - theta * (u + v)
        - 2.0 * np.log(np.abs(D))
    )


def _frank_score(u, v, theta):
    if abs(theta) < _FRANK_SMALL:
        a1, a2, a3 = _frank_series(u, v)
        return a1 + 2.0 * theta * a2 + 3.0 * theta**2 * a3
    D = _frank_D(u, v, theta)
    eu, ev = np.exp(-theta * u), np.exp(-theta * v)
    dD = math.exp(-theta) - (u * eu * (-np.expm1(-theta * v)) + v * ev * (-np.expm1(-theta * u)))
    return 1.0 / theta + 1.0 / math.expm1(theta) - (u + v) - 2.0 * dD / D


def _mo_logpdf(u, v, alpha, atoms):
    off = math.log1p(-alpha) - alpha * np.log(np.maximum(u, v))
    on = math.log(alpha) + (1.0 - alpha) * np.log(u)
    return np.where(atoms, on, off)


def _mo_score(u, v, alpha, atoms):
    off = -1.0 / (1.0 - alpha) - np.log(np.maximum(u, v))
    on = 1.0 / alpha - np.log(u)
    return np.where(atoms, on, off)


_LOGPDF = {
    Family.GAUSSIAN: _gauss_logpdf,
    Family.CLAYTON: _clayton_logpdf,
    Family.GUMBEL: _gumbel_logpdf,
    Family.FRANK: _frank_logpdf,
}
_SCORE = {
    Family.GAUSSIAN: _gauss_score,
    Family.CLAYTON: _clayton_score,
    Family.GUMBEL: _gumbel_score,
    Family.FRANK: _frank_score,
}


# ---------------------------------------------------------------------------
# conditional quantiles (inverse h-functions)


def _gumbel_hinv(u, p, theta, tol=1e-14, maxiter=100):
    # Solve w + (theta - 1) log w = x + (theta - 1) log x - log p for
    # w = A^(1/theta) >= x, by Newton in s = log w.  The target is convex and
    # increasing in s, so Newton started right of the root decreases
    # monotonically onto it.
    x = -np.log(u)
    lx = np.log(x)
    c0 = x + (theta - 1.0) * lx - np.log(p)
    s = np.log(np.maximum(c0, 1.0))
    for _ in range(maxiter):
        es = np.exp(s)
        step = (es + (theta - 1.0) * s - c0) / (es + theta - 1.0)
        s = s - step
        if np.all(np.abs(step) <= tol * np.maximum(1.0, np.abs(s))):
            break
    s = np.maximum(s, lx)
    # y = w * (1 - (x/w)^theta)^(1/theta), v = exp(-y)
    r = np.minimum(theta * (lx - s), 0.0)
    ly = s + np.log(-np.expm1(r)) / theta
    return np.exp(-np.exp(ly))


def _hinv(family: Family, param: float, u, p):
    if family is Family.GAUSSIAN:
        return ndtr(param * ndtri(u) + math.sqrt(1.0 - param * param) * ndtri(p))
    if family is Family.CLAYTON:
        theta = param
        a = -theta * np.log(u)
        b = np.log(np.expm1(-theta / (1.0 + theta) * np.log(p)))
        return np.exp(-np.logaddexp(0.0, a + b) / theta)
    if family is Family.FRANK:
        theta = param
        if theta == 0.0:
            return np.array(p, dtype=float, copy=True)
        em1 = math.expm1(-theta)
        a = np.exp(-theta * u)
        b = p * em1 / (p + a * (1.0 - p))
        return -np.log1p(b) / theta
    if family is Family.GUMBEL:
        return _gumbel_hinv(u, p, param)
    raise UnsupportedFamilyError(
        f"{family.value} has no conditional quantile; sample it by Monte Carlo"
    )


def halton_points(n: int, start: int = 0) -> np.ndarray:
    """Points ``start + 1 .. start + n`` of the base-(2, 3) Halton sequence.

    The leading point ``(0, 0)`` of the sequence is always skipped.
    """
    engine = qmc.Halton(d=2, scramble=False)
    engine.fast_forward(1 + start)
    return engine.random(n)


# ---------------------------------------------------------------------------
# the model


@dataclass(frozen=True)
class CopulaModel:
    """A copula family at a fixed parameter.

    Build it with :meth:`from_tau` or :meth:`from_param`; both keep
    ``param`` and ``tau`` consistent.
    """

    family: Family
    param: float
    tau: float

    @classmethod
    def from_tau(cls, family, tau: float) -> CopulaModel:
        family = Family.parse(family)
        return cls(family, tau_to_param(family, tau), float(tau))

    @classmethod
    def from_param(cls, family, param: float) -> CopulaModel:
        family = Family.parse(family)
        return cls(family, float(param), param_to_tau(family, param))

    def __repr__(self):
        return f"CopulaModel({self.family.value}, param={self.param:.6g}, tau={self.tau:.6g})"

    # -- sampling ---------------------------------------------------------

    def sample(self, n: int, rng) -> PseudoSample:
        """Draw ``n`` i.i.d. points.  ``rng`` is a seed or a numpy Generator."""
        if n < 1:
            raise ValueError("n must be positive")
        rng = np.random.default_rng(rng)
        if self.family is Family.MO:
            return _mo_sample(self.param, n, rng)
        return self.sample_qmc(rng.random((n, 2)))

    def sample_qmc(self, points) -> PseudoSample:
        """Map unit-square points ``(w1, w2)`` to ``(w1, C^{-1}(w2 | w1))``."""
        if not self.family.supports_qmc:
            raise UnsupportedFamilyError(
                "the Marshall-Olkin family is only sampled by plain Monte Carlo"
            )
        w = np.atleast_2d(np.asarray(points, dtype=float))
        w = np.clip(w, _EPS, 1.0 - _EPS)
        v = _hinv(self.family, self.param, w[:, 0], w[:, 1])
        return PseudoSample(np.column_stack([w[:, 0], np.clip(v, _EPS, 1.0 - _EPS)]))

    def conditional_quantile(self, u1, p):
        """Inverse conditional distribution of the second coordinate given the first."""
        u1 = np.asarray(u1, dtype=float)
        p = np.asarray(p, dtype=float)
        if not self.family.supports_qmc:
            raise UnsupportedFamilyError("no conditional quantile for Marshall-Olkin")
        if np.any((u1 <= 0) | (u1 >= 1) | (p <= 0) | (p >= 1)):
            raise DomainError("u1 and p must lie in (0, 1)")
        out = _hinv(self.family, self.param, u1, p)
        return float(out) if out.ndim == 0 else out

    # -- densities --------------------------------------------------------

    def log_density(self, u, atoms=None):
        """Log-density at each row of ``u``.

        For Marshall-Olkin, rows flagged in ``atoms`` (or in the atoms of a
        :class:`PseudoSample`) use the density along the diagonal.
        """
        pts, atoms = self._points(u, atoms)
        if self.family is Family.MO:
            out = _mo_logpdf(pts[:, 0], pts[:, 1], self.param, atoms)
        else:
            out = _LOGPDF[self.family](pts[:, 0], pts[:, 1], self.param)
        return _squeeze(out, u)

    def density(self, u, atoms=None):
        return np.exp(self.log_density(u, atoms))

    def score(self, u, atoms=None):
        """Derivative of the log-density in the natural parameter."""
        pts, atoms = self._points(u, atoms)
        if self.family is Family.MO:
            out = _mo_score(pts[:, 0], pts[:, 1], self.param, atoms)
        else:
            out = _SCORE[self.family](pts[:, 0], pts[:, 1], self.param)
        return _squeeze(out, u)

    def score_tau(self, u, atoms=None):
        """Derivative of the log-density in Kendall's tau."""
        return self.score(u, atoms) * dparam_dtau(self.family, self.tau)

    def _points(self, u, atoms):
        if atoms is None:
            atoms = atoms_of(u)
        pts = _check_points(as_array(u) if isinstance(u, PseudoSample) else u)
        if atoms is None:
            atoms = np.zeros(pts.shape[0], dtype=bool)
        else:
            atoms = np.broadcast_to(np.asarray(atoms, dtype=bool), (pts.shape[0],))
        return pts, atoms


def _squeeze(out, u):
    if not isinstance(u, PseudoSample) and np.ndim(u) == 1:
        return float(out[0])
    return out


def _mo_sample(alpha: float, n: int, rng) -> PseudoSample:
    # Common shock: T_k = min(Z_k / lam, Z_12), U_k = exp(-(lam + 1) T_k)
    # with lam = (1 - alpha) / alpha, so that alpha = 1 / (lam + 1).
    lam = (1.0 - alpha) / alpha
    z = rng.standard_exponential((n, 3))
    t1 = np.minimum(z[:, 0] / lam, z[:, 2])
    t2 = np.minimum(z[:, 1] / lam, z[:, 2])
    atoms = (z[:, 2] <= z[:, 0] / lam) & (z[:, 2] <= z[:, 1] / lam)
    rate = lam + 1.0
    u = np.exp(-rate * np.column_stack([t1, t2]))
    u = np.clip(u, _EPS, 1.0 - _EPS)
    return PseudoSample(u, atoms)


# Module-level forms of the model operations.


def sample(model: CopulaModel, n: int, rng) -> PseudoSample:
    return model.sample(n, rng)


def sample_qmc(model: CopulaModel, points) -> PseudoSample:
    return model.sample_qmc(points)


def conditional_quantile(model: CopulaModel, u1, p):
    return model.conditional_quantile(u1, p)


def log_density(model: CopulaModel, u, atoms=None):
    return model.log_density(u, atoms)


def score(model: CopulaModel, u, atoms=None):
    return model.score(u, atoms)
