"""Robust copula estimation by maximum mean discrepancy."""

from mmdcop.copulas import CopulaModel, Family, param_to_tau, tau_to_param
from mmdcop.estimators import (
    EstimateResult,
    EstimatorConfig,
    Method,
    estimate,
    fit_cml,
    fit_itau,
    fit_mmd,
    fit_mmd_gaussian_closed,
)
from mmdcop.kernels import KernelSpec, Shape, Transform
from mmdcop.pseudo import PseudoSample, kendall_tau, pseudo_observations

__version__ = "0.1.0"

__all__ = [
    "CopulaModel",
    "EstimateResult",
    "EstimatorConfig",
    "Family",
    "KernelSpec",
    "Method",
    "PseudoSample",
    "Shape",
    "Transform",
    "estimate",
    "fit_cml",
    "fit_itau",
    "fit_mmd",
    "fit_mmd_gaussian_closed",
    "kendall_tau",
    "param_to_tau",
    "pseudo_observations",
    "tau_to_param",
]
