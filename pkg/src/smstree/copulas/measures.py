"""Dependence measures of a copula: Spearman's rho and negative entropy.

Both are computed with tensor-product Gauss-Legendre rules on the unit
square.  Spearman's rho integrates the CDF directly.  Expected
log-densities integrate ``log c`` in conditional coordinates
``(u, w)`` with ``v = h^{-1}(w | u)``, which turns ``c log c dudv`` into
``log c dudw``; the log-density is only logarithmically singular at the
corners, so the rule stays accurate for strongly dependent copulas
whose densities concentrate on the diagonal.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from smstree.copulas.families import (
    BivariateCopula,
    CopulaFamily,
    log_pdf_unchecked,
)
from smstree.errors import NumericalError, RangeError

_TINY = 1e-300
_ONE_MINUS = 1.0 - 2.0 ** -53


@dataclass(frozen=True)
class Quadrature:
    """Resolution of the tensor-product Gauss-Legendre rule."""

    nodes: int = 200

    def __post_init__(self):
        if int(self.nodes) < 2:
            raise ValueError("quadrature needs at least 2 nodes per axis")

    @functools.cached_property
    def rule(self):
        x, w = np.polynomial.legendre.leggauss(int(self.nodes))
        return 0.5 * (x + 1.0), 0.5 * w

    def grid(self):
        x, w = self.rule
        uu, vv = np.meshgrid(x, x, indexing="ij")
        return uu, vv, np.outer(w, w)


DEFAULT_QUADRATURE = Quadrature()


def _quadrature(resolution):
    if resolution is None:
        return DEFAULT_QUADRATURE
    if isinstance(resolution, Quadrature):
        return resolution
    return Quadrature(int(resolution))


def gaussian_rho(theta):
    return 6.0 / math.pi * math.asin(theta / 2.0)


@functools.lru_cache(maxsize=16)
def _upper_triangle(nodes):
    # Every family here is exchangeable, C(u, v) = C(v, u), so the tensor
    # rule only needs the nodes on and above the diagonal.
    x, w = Quadrature(nodes).rule
    i, j = np.triu_indices(nodes)
    weights = np.outer(w, w)[i, j] * np.where(i == j, 1.0, 2.0)
    return x[i], x[j], weights


@functools.lru_cache(maxsize=65536)
def _rho_quadrature(family, theta, nodes):
    uu, vv, ww = _upper_triangle(nodes)
    c = BivariateCopula(family, theta)
    value = 12.0 * float(np.sum(ww * c.cdf(uu, vv))) - 3.0
    if not math.isfinite(value):
        raise NumericalError(
            f"Spearman's rho quadrature for {family.value} at theta={theta!r} "
            f"is not finite ({nodes} nodes)"
        )
    return value


def rho_from_theta(family, theta, resolution=None, method="auto"):
    """Spearman's rho of a copula, 12 * int C(u, v) du dv - 3.

    The Gaussian family uses its closed form unless ``method="quadrature"``.
    """
    family = CopulaFamily.from_token(family)
    theta = family.check_theta(theta)
    if family is CopulaFamily.GAUSSIAN and method != "quadrature":
        return gaussian_rho(theta)
    return _rho_quadrature(family, theta, _quadrature(resolution).nodes)


def theta_bounds(family):
    """Finite parameter interval searched when inverting the rho map.

    Open support ends are nudged inside; unbounded ends use the family cap.
    """
    family = CopulaFamily.from_token(family)
    s = family.theta_support
    lo = s.lower + (1e-10 if s.lower_open else 0.0)
    hi = family.theta_cap if math.isinf(s.upper) else s.upper - (1e-10 if s.upper_open else 0.0)
    return lo, hi


@functools.lru_cache(maxsize=64)
def rho_range(family, resolution=None):
    """Attainable (min, max) Spearman's rho over the usable parameter interval."""
    family = CopulaFamily.from_token(family)
    if family is CopulaFamily.GAUSSIAN:
        return -1.0, 1.0
    s = family.theta_support
    lo, hi = theta_bounds(family)
    ends = []
    for theta, open_end in ((lo, s.lower_open), (hi, s.upper_open and math.isfinite(s.upper))):
        # An open end contributes its limit; at the nudged parameter the
        # map is within ~1e-10 of that limit, so round it off.
        r = rho_from_theta(family, theta, resolution)
        ends.append(round(r, 9) if open_end else r)
    return min(ends), max(ends)


def rho_attainable(family, rho, resolution=None):
    """Whether some parameter value of ``family`` has Spearman's rho ``rho``."""
    family = CopulaFamily.from_token(family)
    rho = float(rho)
    if not math.isfinite(rho):
        return False
    lo, hi = rho_range(family, resolution)
    s = family.theta_support
    if family is CopulaFamily.GAUSSIAN:
        return -1.0 < rho < 1.0
    # Which end of the rho range corresponds to an open parameter end.
    forward = family.ordering_direction > 0
    lo_open = s.lower_open if forward else (s.upper_open and math.isfinite(s.upper))
    hi_open = (s.upper_open and math.isfinite(s.upper)) if forward else s.lower_open
    above = rho > lo if lo_open else rho >= lo
    below = rho < hi if hi_open else rho <= hi
    return above and below


def theta_from_rho(family, rho, resolution=None, xtol=1e-13):
    """Invert :func:`rho_from_theta` on the family's parameter interval.

    Raises :class:`RangeError` when ``rho`` is not attainable by the family.
    """
    family = CopulaFamily.from_token(family)
    rho = float(rho)
    if not rho_attainable(family, rho, resolution):
        lo, hi = rho_range(family, resolution)
        raise RangeError(
            f"Spearman's rho {rho!r} is outside the attainable range "
            f"[{lo:.6g}, {hi:.6g}] of the {family.value} family"
        )
    if family is CopulaFamily.GAUSSIAN:
        return 2.0 * math.sin(math.pi * rho / 6.0)
    independence = family.independence_theta
    if rho == 0.0 and independence is not None:
        return independence
    lo, hi = theta_bounds(family)
    nodes = _quadrature(resolution).nodes

    def gap(theta):
        return _rho_quadrature(family, min(max(theta, lo), hi), nodes) - rho

    g_lo, g_hi = gap(lo), gap(hi)
    if g_lo == 0.0:
        return lo
    if g_hi == 0.0:
        return hi
    if g_lo * g_hi > 0:
        # Open-end limit values: the root lies within 1e-10 of the end.
        return lo if abs(g_lo) < abs(g_hi) else hi
    theta, info = optimize.brentq(gap, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps,
                                  maxiter=200, full_output=True)
    if not info.converged:
        raise NumericalError(
            f"rho inversion for {family.value} did not converge at rho={rho!r}: {info.flag}"
        )
    return theta


def _conditional_grid(c, quad):
    uu, ww_, weights = quad.grid()
    vv = np.clip(c.h_inverse(uu, ww_), _TINY, _ONE_MINUS)
    return uu, vv, weights


def expected_log_density(sampling, evaluated, resolution=None):
    """E[log c_eval(U, V)] for (U, V) distributed as the ``sampling`` copula.

    With both arguments equal this is the negative entropy; with different
    parameters it is the cross term of a Kullback-Leibler divergence.
    """
    quad = _quadrature(resolution)
    uu, vv, weights = _conditional_grid(sampling, quad)
    logs = log_pdf_unchecked(evaluated.family, evaluated.theta, uu, vv)
    value = float(np.sum(weights * logs))
    if not math.isfinite(value):
        raise NumericalError(
            f"log-density quadrature diverged for {evaluated.family.value} "
            f"theta={evaluated.theta!r} under {sampling.family.value} "
            f"theta={sampling.theta!r} ({quad.nodes} nodes)"
        )
    return value


def negative_entropy(c, resolution=None):
    """Negative differential entropy, the integral of c log c over the unit square."""
    return expected_log_density(c, c, resolution)


def density_mass(c, resolution=None):
    """Integral of the density over the unit square with the plain tensor rule."""
    uu, vv, weights = _quadrature(resolution).grid()
    return float(np.sum(weights * np.exp(log_pdf_unchecked(c.family, c.theta, uu, vv))))
