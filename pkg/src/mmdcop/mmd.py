"""Empirical MMD statistics and closed forms for the Gaussian copula.

The closed forms assume the probit-Gaussian kernel
``K(u, v) = exp(-|Phi^{-1}(u) - Phi^{-1}(v)|^2 / gamma^2)``, under which every
expectation against a bivariate Gaussian copula reduces to a Gaussian
integral.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtri

from mmdcop.errors import DomainError
from mmdcop.kernels import KernelSpec
from mmdcop.pseudo import as_array

_BLOCK = 1024


def _gram_mean(k: KernelSpec, fa, fb, exclude_diagonal=False) -> float:
    # Row blocks are summed in index order so the result does not depend
    # on how the work is split.
    total = np.longdouble(0.0)
    for start in range(0, fa.shape[0], _BLOCK):
        g = k.gram_features(fa[start : start + _BLOCK], fb)
        if exclude_diagonal:
            rows = np.arange(g.shape[0])
            g[rows, start + rows] = 0.0
        total += np.sum(g, dtype=np.longdouble)
    count = fa.shape[0] * fb.shape[0]
    if exclude_diagonal:
        count -= fa.shape[0]
    return float(total / count)


def mmd2_vstat(a, b, k: KernelSpec) -> float:
    """Squared MMD between two samples, full double sums (V-statistic)."""
    fa, fb = k.features(as_array(a)), k.features(as_array(b))
    if len(fa) == 0 or len(fb) == 0:
        raise ValueError("samples must be nonempty")
    aa = _gram_mean(k, fa, fa)
    ab = _gram_mean(k, fa, fb)
    bb = _gram_mean(k, fb, fb)
    # A norm in the RKHS; only rounding can push it below zero.
    return max(aa - 2.0 * ab + bb, 0.0)


def mmd2_ustat(a, b, k: KernelSpec) -> float:
    """Unbiased squared MMD (within-sample diagonals dropped); may be negative."""
    fa, fb = k.features(as_array(a)), k.features(as_array(b))
    if len(fa) < 2 or len(fb) < 2:
        raise ValueError("each sample needs at least two points")
    return (
        _gram_mean(k, fa, fa, exclude_diagonal=True)
        - 2.0 * _gram_mean(k, fa, fb)
        + _gram_mean(k, fb, fb, exclude_diagonal=True)
    )


# ---------------------------------------------------------------------------
# Gaussian copula, probit-Gaussian kernel


def _f(x, gamma):
    c = gamma * gamma / 2.0
    rad = (2.0 + c) ** 2 - 4.0 * np.square(x)
    if np.any(rad <= 0.0):
        raise DomainError("closed form undefined: nonpositive radicand")
    return c / np.sqrt(rad)


def gaussian_closed_I(theta1, theta2, gamma):
    """Expected kernel value between independent draws of two Gaussian copulas.

    Depends on the correlations only through their mean ``s``:
    ``(gamma^2 / 2) / sqrt((2 + gamma^2 / 2)^2 - 4 s^2)``.
    """
    if np.any(np.abs(theta1) > 1.0) or np.any(np.abs(theta2) > 1.0):
        raise DomainError("correlations must lie in [-1, 1]")
    return _f((np.asarray(theta1) + np.asarray(theta2)) / 2.0, gamma)


def gaussian_closed_J(theta, a, b, gamma):
    """``E exp(-((X1 - a)^2 + (X2 - b)^2) / gamma^2)`` for standard normals with
    correlation ``theta``.  Vectorized over ``a`` and ``b``."""
    if abs(theta) >= 1.0:
        raise DomainError("|theta| must be below 1")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    g2 = gamma * gamma
    d = 1.0 + g2 / 2.0 - theta * theta
    inv_g2 = 2.0 / g2 + theta * theta / d + 1.0
    lam_over_g2 = 2.0 * b / g2 + a * theta / d
    expo = 0.5 * lam_over_g2**2 / inv_g2 - b * b / g2 - a * a / (2.0 * d)
    return gamma / math.sqrt(2.0) / math.sqrt(d * inv_g2) * np.exp(expo)


def gaussian_closed_criterion(theta, s, gamma) -> float:
    """MMD criterion of a pseudo-sample against the Gaussian copula at ``theta``,
    up to the data-only constant."""
    u = as_array(s)
    if u.shape[0] == 0:
        raise ValueError("empty sample")
    if np.any((u <= 0.0) | (u >= 1.0)):
        raise DomainError("pseudo-observations must lie in the open unit square")
    x = ndtri(u)
    j = gaussian_closed_J(theta, x[:, 0], x[:, 1], gamma)
    return float(gaussian_closed_I(theta, theta, gamma) - 2.0 * np.mean(j))


def gaussian_mmd_distance(theta1, theta2, gamma) -> float:
    """MMD between two Gaussian copulas under the probit-Gaussian kernel."""
    d2 = _f(theta1, gamma) + _f(theta2, gamma) - 2.0 * _f((theta1 + theta2) / 2.0, gamma)
    if d2 < -1e-12:
        raise ArithmeticError(f"negative squared distance {d2}")
    return math.sqrt(max(float(d2), 0.0))


def gaussian_B(theta0, gamma) -> float:
    """Closed-form curvature constant ``B`` at ``theta0``.

    Equals three quarters of the second derivative of
    ``s -> gaussian_closed_I(s, s, gamma)`` at ``theta0``.
    """
    if abs(theta0) >= 1.0:
        raise DomainError("|theta0| must be below 1")
    a2 = (2.0 + gamma * gamma / 2.0) ** 2
    t2 = theta0 * theta0
    return 3.0 * gamma**2 * (a2 + 8.0 * t2) / (2.0 * (a2 - 4.0 * t2) ** 2.5)


def alpha_gamma(gamma) -> float:
    """Strong-convexity modulus of ``x -> gaussian_closed_I(x, x, gamma)``."""
    c = gamma * gamma / 2.0
    return c / (2.0 + c) ** 3


def c_gamma(gamma) -> float:
    """Constant with ``|theta1 - theta2| <= c_gamma * MMD`` for Gaussian copulas."""
    if gamma <= 0:
        raise DomainError("gamma must be positive")
    return (4.0 + gamma * gamma) ** 1.5 / gamma
