"""Kernels on the unit square.

A kernel is ``K(u, v) = exp(-dist(h(u), h(v)) / scale)`` where ``h`` is
applied coordinatewise and is either the identity or the standard normal
quantile function (probit).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import ndtri

from mmdcop.errors import DomainError

# Probit inputs are clamped into this interval.
PROBIT_CLAMP = 1e-15


class Shape(str, Enum):
    GAUSSIAN = "gaussian"
    EXP_L2 = "exp-l2"
    EXP_L1 = "exp-l1"


class Transform(str, Enum):
    IDENTITY = "id"
    PROBIT = "probit"


@dataclass(frozen=True)
class KernelSpec:
    shape: Shape = Shape.GAUSSIAN
    transform: Transform = Transform.PROBIT
    gamma: float = 0.95

    def __post_init__(self):
        object.__setattr__(self, "shape", Shape(self.shape))
        object.__setattr__(self, "transform", Transform(self.transform))
        gamma = float(self.gamma)
        if not (gamma > 0.0 and np.isfinite(gamma)):
            raise ValueError(f"kernel bandwidth must be positive, got {self.gamma}")
        object.__setattr__(self, "gamma", gamma)

    @classmethod
    def default(cls, transform=Transform.PROBIT) -> KernelSpec:
        """Gaussian kernel with the bandwidth tuned for each transform."""
        transform = Transform(transform)
        gamma = 0.95 if transform is Transform.PROBIT else 0.23
        return cls(Shape.GAUSSIAN, transform, gamma)

    @property
    def separable(self) -> bool:
        """Whether the kernel factors as a product over coordinates."""
        return self.shape is not Shape.EXP_L2

    def features(self, u) -> np.ndarray:
        """Apply the coordinate map ``h``."""
        u = np.asarray(u, dtype=float)
        if self.transform is Transform.IDENTITY:
            return u
        if np.any((u <= 0.0) | (u >= 1.0)):
            raise DomainError("probit kernel needs points in the open unit square")
        return ndtri(np.clip(u, PROBIT_CLAMP, 1.0 - PROBIT_CLAMP))

    def from_distance_parts(self, diff_a, diff_b):
        """Kernel value from coordinatewise feature differences."""
        if self.shape is Shape.GAUSSIAN:
            return np.exp(-(diff_a * diff_a + diff_b * diff_b) / self.gamma**2)
        if self.shape is Shape.EXP_L2:
            return np.exp(-np.sqrt(diff_a * diff_a + diff_b * diff_b) / self.gamma)
        return np.exp(-(np.abs(diff_a) + np.abs(diff_b)) / self.gamma)

    def gram_features(self, fa, fb) -> np.ndarray:
        """Gram matrix between two arrays of already transformed points."""
        return self.from_distance_parts(
            fa[:, 0, None] - fb[None, :, 0], fa[:, 1, None] - fb[None, :, 1]
        )

    def gram(self, a, b) -> np.ndarray:
        """``(len(a), len(b))`` matrix of kernel values."""
        fa = self.features(np.atleast_2d(a))
        fb = self.features(np.atleast_2d(b))
        return self.gram_features(fa, fb)

    def __call__(self, u, v):
        return kernel_eval(self, u, v)


def kernel_eval(k: KernelSpec, u, v) -> float:
    """Kernel value between two points of the unit square."""
    fu = k.features(np.asarray(u, dtype=float).reshape(2))
    fv = k.features(np.asarray(v, dtype=float).reshape(2))
    return float(k.from_distance_parts(fu[0] - fv[0], fu[1] - fv[1]))
