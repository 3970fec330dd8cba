"""Bivariate copula families and their dependence measures."""

from smstree.copulas.families import (
    BivariateCopula,
    CopulaFamily,
    copula_cdf,
    copula_log_pdf,
    copula_sample,
)
from smstree.copulas.measures import (
    Quadrature,
    density_mass,
    expected_log_density,
    negative_entropy,
    rho_attainable,
    rho_from_theta,
    rho_range,
    theta_from_rho,
)

__all__ = [
    "BivariateCopula", "CopulaFamily", "Quadrature", "copula_cdf", "copula_log_pdf",
    "copula_sample", "density_mass", "expected_log_density", "negative_entropy",
    "rho_attainable", "rho_from_theta", "rho_range", "theta_from_rho",
]
