"""Numerical checks of the ordering and entropy-monotonicity theory.

Four checks, each returning a :class:`VerificationReport`:

* ``pqd``: pointwise ordering of the copula CDFs in the parameter;
* ``tp2``: sign of the mixed partial of ``log c`` (TP2 <=> supermodular);
* ``monotonicity``: negative entropy along a parameter grid;
* ``proof_chain``: the two integral inequalities behind the monotonicity,
  whose second gap is a Kullback-Leibler divergence.

The expected direction of the entropy ordering is the family's ordering
direction times +1 for TP2 and -1 for RR2 densities: reversing both the
dependence order and the density class leaves the inequality intact.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from smstree.copulas.families import BivariateCopula, CopulaFamily, log_pdf_unchecked
from smstree.copulas.measures import expected_log_density
from smstree.errors import ConfigError

PQD_TOL = 1e-9
TP2_TOL = 1e-6
TP2_STEP = 1e-4
TP2_GRID = 50
TP2_RANGE = (0.02, 0.98)
ENTROPY_SLACK = 1e-3
CSV_HEADER = ("family", "check", "theta1", "theta2", "verdict", "worst_violation", "u", "v")

# Ten parameter values per family for the density-class check, twenty for
# the entropy grid; both stay clear of the numerical caps.
TP2_GRIDS = {
    CopulaFamily.GAUSSIAN: np.linspace(-0.9, 0.9, 10),
    CopulaFamily.FGM: np.linspace(-0.9, 0.9, 10),
    CopulaFamily.AMH: np.linspace(-0.9, 0.9, 10),
    CopulaFamily.GUMBEL: np.linspace(1.2, 8.0, 10),
    CopulaFamily.FRANK: np.linspace(0.5, 20.0, 10),
    CopulaFamily.CLAYTON: np.linspace(0.3, 10.0, 10),
    CopulaFamily.JOE: np.linspace(1.2, 8.0, 10),
    CopulaFamily.GUMBEL_BARNETT: np.linspace(0.1, 1.0, 10),
}
ENTROPY_GRIDS = {
    CopulaFamily.GAUSSIAN: np.linspace(0.0, 0.95, 20),
    CopulaFamily.FGM: np.linspace(0.0, 1.0, 20),
    CopulaFamily.AMH: np.linspace(0.0, 1.0, 20),
    CopulaFamily.GUMBEL: np.linspace(1.0, 10.0, 20),
    CopulaFamily.FRANK: np.linspace(0.5, 30.0, 20),
    CopulaFamily.CLAYTON: np.linspace(0.25, 15.0, 20),
    CopulaFamily.JOE: np.linspace(1.0, 12.0, 20),
    CopulaFamily.GUMBEL_BARNETT: np.linspace(0.05, 1.0, 20),
}


@dataclass(frozen=True)
class VerificationReport:
    family: CopulaFamily
    check: str
    theta1: float
    theta2: float
    passed: bool
    worst_violation: float
    u: float = math.nan
    v: float = math.nan
    classification: str = ""

    @property
    def verdict(self):
        word = "pass" if self.passed else "fail"
        return f"{word}:{self.classification}" if self.classification else word

    def row(self):
        def num(x):
            return "" if x is None or (isinstance(x, float) and math.isnan(x)) else "%.10g" % x

        return [self.family.value, self.check, num(self.theta1), num(self.theta2),
                self.verdict, num(self.worst_violation), num(self.u), num(self.v)]


def entropy_direction(family, theta_a, theta_b):
    """Expected sign of -H(theta_b) - (-H(theta_a)) for theta_a < theta_b.

    Returns 0 when the pair straddles a change of density class.
    """
    family = CopulaFamily.from_token(family)
    indep = family.independence_theta
    if indep is not None and theta_a < indep < theta_b:
        return 0
    cls = family.density_class(0.5 * (theta_a + theta_b))
    return family.ordering_direction * (1 if cls == "TP2" else -1)


def interior_grid(n):
    return np.arange(1, n + 1) / (n + 1.0)


def pqd_check(family, theta1, theta2, grid_n=100, tol=PQD_TOL):
    """Check C_theta1 <= C_theta2 on an interior grid (reversed when negatively ordered)."""
    family = CopulaFamily.from_token(family)
    theta1, theta2 = float(theta1), float(theta2)
    if theta1 > theta2:
        raise ConfigError("pqd_check needs theta1 <= theta2")
    x = interior_grid(int(grid_n))
    uu, vv = np.meshgrid(x, x, indexing="ij")
    c1 = BivariateCopula(family, theta1).cdf(uu, vv)
    c2 = BivariateCopula(family, theta2).cdf(uu, vv)
    excess = family.ordering_direction * (c1 - c2)
    k = int(np.argmax(excess))
    worst = max(0.0, float(excess.flat[k]))
    return VerificationReport(family, "pqd", theta1, theta2, worst <= tol, worst,
                              float(uu.flat[k]), float(vv.flat[k]))


def mixed_partial(family, theta, u, v, step=TP2_STEP):
    """Centred finite-difference d^2 log c / du dv."""
    def lc(a, b):
        return log_pdf_unchecked(family, theta, a, b)

    return (lc(u + step, v + step) - lc(u + step, v - step)
            - lc(u - step, v + step) + lc(u - step, v - step)) / (4.0 * step * step)


def _classify(values, tol):
    tp2 = float(values.min()) >= -tol
    rr2 = float(values.max()) <= tol
    if tp2 and rr2:
        return "both"
    return "TP2" if tp2 else ("RR2" if rr2 else "neither")


def tp2_check(family, theta, grid_n=TP2_GRID, step=TP2_STEP, tol=TP2_TOL):
    """Classify the density as TP2/RR2 from the mixed partial of its log.

    Passes when the observed class contains the expected one and halving
    the finite-difference step flips the sign at no grid point.
    """
    family = CopulaFamily.from_token(family)
    theta = family.check_theta(theta)
    x = np.linspace(*TP2_RANGE, int(grid_n))
    uu, vv = np.meshgrid(x, x, indexing="ij")
    d = mixed_partial(family, theta, uu, vv, step)
    d_half = mixed_partial(family, theta, uu, vv, step / 2.0)
    if not (np.all(np.isfinite(d)) and np.all(np.isfinite(d_half))):
        from smstree.errors import NumericalError
        raise NumericalError(f"mixed partial of log c is not finite for {family.value} theta={theta!r}")
    observed = _classify(d, tol)
    expected = family.density_class(theta)
    violation = -d if expected == "TP2" else d
    k = int(np.argmax(violation))
    worst = max(0.0, float(violation.flat[k]))
    flips = int(np.sum(((d > tol) & (d_half < -tol)) | ((d < -tol) & (d_half > tol))))
    passed = observed in (expected, "both") and flips == 0
    return VerificationReport(family, "tp2", theta, math.nan, passed, worst,
                              float(uu.flat[k]), float(vv.flat[k]), observed)


def sign_flips_on_halving(family, theta, grid_n=TP2_GRID, step=TP2_STEP, tol=TP2_TOL):
    """Number of grid points whose mixed-partial sign flips when the step is halved."""
    family = CopulaFamily.from_token(family)
    theta = family.check_theta(theta)
    x = np.linspace(*TP2_RANGE, int(grid_n))
    uu, vv = np.meshgrid(x, x, indexing="ij")
    d = mixed_partial(family, theta, uu, vv, step)
    d_half = mixed_partial(family, theta, uu, vv, step / 2.0)
    return int(np.sum(((d > tol) & (d_half < -tol)) | ((d < -tol) & (d_half > tol))))


def entropy_profile(family, theta_grid, resolution=None):
    family = CopulaFamily.from_token(family)
    return np.array([expected_log_density(BivariateCopula(family, t),
                                          BivariateCopula(family, t), resolution)
                     for t in theta_grid])


def monotonicity_check(family, theta_grid=None, resolution=None, slack=ENTROPY_SLACK):
    """Negative entropy along a sorted grid follows the expected direction."""
    family = CopulaFamily.from_token(family)
    grid = np.asarray(ENTROPY_GRIDS[family] if theta_grid is None else theta_grid, dtype=float)
    if grid.size < 10:
        raise ConfigError("monotonicity_check needs at least 10 grid points")
    if np.any(np.diff(grid) <= 0):
        raise ConfigError("monotonicity_check needs a strictly increasing grid")
    values = entropy_profile(family, grid, resolution)
    worst, where = 0.0, (grid[0], grid[1])
    for a in range(grid.size - 1):
        sign = entropy_direction(family, grid[a], grid[a + 1])
        violation = -sign * (values[a + 1] - values[a])
        if violation > worst:
            worst, where = float(violation), (grid[a], grid[a + 1])
    return VerificationReport(family, "monotonicity", float(where[0]), float(where[1]),
                              worst <= slack, worst)


@dataclass(frozen=True)
class ChainIntegrals:
    own1: float    # integral of c1 log c1
    cross: float   # integral of c2 log c1
    own2: float    # integral of c2 log c2

    @property
    def kl_gap(self):
        return self.own2 - self.cross


def chain_integrals(family, theta1, theta2, resolution=None):
    c1 = BivariateCopula(family, theta1)
    c2 = BivariateCopula(family, theta2)
    return ChainIntegrals(expected_log_density(c1, c1, resolution),
                          expected_log_density(c2, c1, resolution),
                          expected_log_density(c2, c2, resolution))


def gaussian_copula_kl(theta_p, theta_q):
    """KL(c_p || c_q) between Gaussian copulas, equal to the bivariate-normal KL."""
    p, q = float(theta_p), float(theta_q)
    return 0.5 * ((2.0 - 2.0 * p * q) / (1.0 - q * q) - 2.0
                  + math.log((1.0 - q * q) / (1.0 - p * p)))


def proof_chain_check(family, theta1, theta2, resolution=None, slack=ENTROPY_SLACK):
    """Both inequalities int c1 log c1 <= int c2 log c1 <= int c2 log c2.

    For a decreasing pair the chain is taken from theta2 to theta1 instead.
    The Gaussian family also compares the second gap with its closed-form KL.
    """
    family = CopulaFamily.from_token(family)
    theta1, theta2 = float(theta1), float(theta2)
    if theta1 > theta2:
        raise ConfigError("proof_chain_check needs theta1 <= theta2")
    sign = entropy_direction(family, theta1, theta2) if theta1 < theta2 else 1
    if sign == 0:
        raise ConfigError("theta pair straddles a change of density class")
    lo, hi = (theta1, theta2) if sign > 0 else (theta2, theta1)
    chain = chain_integrals(family, lo, hi, resolution)
    worst = max(0.0, chain.own1 - chain.cross, chain.cross - chain.own2)
    if family is CopulaFamily.GAUSSIAN:
        worst = max(worst, abs(chain.kl_gap - gaussian_copula_kl(hi, lo)))
    return VerificationReport(family, "proof_chain", theta1, theta2, worst <= slack, worst)


def proof_chain_pairs(family, count=5):
    """``count`` consecutive pairs from the family's entropy grid (single-class regime)."""
    grid = ENTROPY_GRIDS[CopulaFamily.from_token(family)]
    idx = np.linspace(0, grid.size - 1, count + 1).round().astype(int)
    return [(float(grid[a]), float(grid[b])) for a, b in zip(idx[:-1], idx[1:])]


def default_checks(family, thetas=None, resolution=None):
    """All four checks for one family on the default grids.

    ``thetas`` restricts the TP2 check to the given values (PQD then uses
    consecutive pairs of them).
    """
    family = CopulaFamily.from_token(family)
    tp2_grid = list(TP2_GRIDS[family] if thetas is None else thetas)
    reports = [tp2_check(family, t) for t in tp2_grid]
    pqd_grid = sorted(tp2_grid)
    for a, b in zip(pqd_grid[:-1], pqd_grid[1:]):
        reports.append(pqd_check(family, a, b))
    if thetas is None:
        reports.append(monotonicity_check(family, resolution=resolution))
        for a, b in proof_chain_pairs(family):
            reports.append(proof_chain_check(family, a, b, resolution))
    return reports


def format_reports(reports, comments=()):
    buf = io.StringIO()
    for line in comments:
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in reports:
        writer.writerow(r.row())
    return buf.getvalue()
