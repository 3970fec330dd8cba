"""Characteristic curves: expected log-likelihood as a function of Spearman's rho.

A raw curve tabulates the negative copula entropy of one family along a
grid of rho values.  Adding the log of a prior density over rho (obtained
from a prior over the dependence parameter by change of variables) gives
the posterior curve used to choose an edge's family from its empirical
rho alone.
"""

from __future__ import annotations

import math
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from smstree.copulas.families import BivariateCopula, CopulaFamily
from smstree.copulas.measures import (
    negative_entropy,
    rho_attainable,
    rho_range,
    theta_from_rho,
)
from smstree.errors import ConfigError, FormatError, RangeError, SelectionError

GRID_LIMIT = 0.99
DEFAULT_STEP = 0.01
DEFAULT_FAMILIES = (CopulaFamily.GAUSSIAN, CopulaFamily.GUMBEL, CopulaFamily.CLAYTON)
FILE_MAGIC = "SMSCURVES v1"

# Selection tie-break order: lower rank wins.
_TIE_ORDER = {CopulaFamily.GAUSSIAN: 0, CopulaFamily.GUMBEL: 1, CopulaFamily.CLAYTON: 2}

PRIOR_FORMS = {
    "truncated_laplace_on_theta": ("location", "scale"),
    "shifted_exponential_on_theta": ("rate", "shift"),
    "exponential_on_theta": ("rate",),
    "flat": (),
}


@dataclass(frozen=True)
class FamilyPrior:
    """Prior over a family's dependence parameter, truncated to its support.

    ``form`` is one of :data:`PRIOR_FORMS`; ``flat`` is an improper constant
    prior kept for comparisons with the raw curves.  With ``jacobian`` off
    the rho-space log-density omits the change-of-variables term.
    """

    family: CopulaFamily
    form: str
    params: tuple = ()
    jacobian: bool = True

    def __post_init__(self):
        object.__setattr__(self, "family", CopulaFamily.from_token(self.family))
        if self.form not in PRIOR_FORMS:
            raise ConfigError(
                f"unknown prior form {self.form!r}; valid forms: {', '.join(PRIOR_FORMS)}"
            )
        params = tuple((str(k), float(v)) for k, v in dict(self.params).items())
        names = PRIOR_FORMS[self.form]
        if tuple(k for k, _ in params) != names:
            raise ConfigError(f"prior form {self.form} takes parameters {names}, got {params}")
        for k, v in params:
            if k in ("scale", "rate") and not (v > 0 and math.isfinite(v)):
                raise ConfigError(f"prior parameter {k} must be a positive real, got {v}")
        object.__setattr__(self, "params", params)

    @property
    def p(self):
        return dict(self.params)

    def _normaliser(self):
        s = self.family.theta_support
        a, b = s.lower, s.upper
        p = self.p
        if self.form == "truncated_laplace_on_theta":
            loc, scale = p["location"], p["scale"]

            def mass(x):  # integral of exp(-|t - loc| / scale) from -inf to x
                if x <= loc:
                    return scale * math.exp((x - loc) / scale)
                return scale * (2.0 - math.exp(-(x - loc) / scale))

            return mass(b) - mass(a)
        if self.form in ("shifted_exponential_on_theta", "exponential_on_theta"):
            rate, shift = p["rate"], p.get("shift", 0.0)
            lo = max(a, shift)
            return math.exp(-rate * (lo - shift)) - (0.0 if math.isinf(b) else math.exp(-rate * (b - shift)))
        return 1.0

    def log_density_theta(self, theta):
        """Log prior density of the dependence parameter (``-inf`` off support)."""
        theta = float(theta)
        if theta not in self.family.theta_support:
            return -math.inf
        p = self.p
        if self.form == "flat":
            return 0.0
        if self.form == "truncated_laplace_on_theta":
            log_kernel = -abs(theta - p["location"]) / p["scale"]
        else:
            rate, shift = p["rate"], p.get("shift", 0.0)
            if theta < shift:
                return -math.inf
            log_kernel = math.log(rate) - rate * (theta - shift)
        return log_kernel - math.log(self._normaliser())

    def spec(self):
        """Serialised ``form:key=value,...`` string used in curve files."""
        parts = [f"{k}={v!r}" for k, v in self.params]
        parts.append(f"jacobian={int(self.jacobian)}")
        return f"{self.form}:{','.join(parts)}"

    @classmethod
    def parse(cls, family, text):
        form, _, rest = text.partition(":")
        items = {}
        for part in filter(None, rest.split(",")):
            key, sep, value = part.partition("=")
            if not sep:
                raise ConfigError(f"malformed prior parameter {part!r}")
            items[key.strip()] = value.strip()
        jacobian = items.pop("jacobian", "1") not in ("0", "false", "False")
        try:
            params = tuple((k, float(v)) for k, v in items.items())
        except ValueError as exc:
            raise ConfigError(f"malformed prior specification {text!r}") from exc
        return cls(family, form.strip(), params, jacobian)


def default_prior(family):
    """Independence-favouring prior matching each family's parameter support.

    Gaussian: Laplace(0, 1) truncated to (-1, 1); Gumbel: unit-rate
    exponential shifted to start at 1; Clayton: exponential with rate 4.
    Other families follow the same pattern with unit rates.
    """
    family = CopulaFamily.from_token(family)
    if family is CopulaFamily.CLAYTON:
        return FamilyPrior(family, "exponential_on_theta", (("rate", 4.0),))
    if family in (CopulaFamily.GUMBEL, CopulaFamily.JOE):
        return FamilyPrior(family, "shifted_exponential_on_theta", (("rate", 1.0), ("shift", 1.0)))
    if family in (CopulaFamily.FRANK, CopulaFamily.GUMBEL_BARNETT):
        return FamilyPrior(family, "exponential_on_theta", (("rate", 1.0),))
    return FamilyPrior(family, "truncated_laplace_on_theta", (("location", 0.0), ("scale", 1.0)))


_JACOBIAN_STEP = 1e-4


def theta_rho_jacobian(family, rho, step=_JACOBIAN_STEP):
    """|d theta / d rho| by centred differences of the inverse rho map.

    Falls back to a one-sided difference where rho +/- step leaves the
    attainable range.
    """
    family = CopulaFamily.from_token(family)
    lo = rho - step if rho_attainable(family, rho - step) else rho
    hi = rho + step if rho_attainable(family, rho + step) else rho
    if hi == lo:
        raise RangeError(f"cannot difference the rho map of {family.value} at {rho!r}")
    return abs(theta_from_rho(family, hi) - theta_from_rho(family, lo)) / (hi - lo)


def prior_log_density_in_rho(prior, rho):
    """log f(rho) = log f_theta(theta(rho)) + log |d theta / d rho|."""
    theta = theta_from_rho(prior.family, rho)
    value = prior.log_density_theta(theta)
    if prior.jacobian and prior.form != "flat":
        value += math.log(theta_rho_jacobian(prior.family, rho))
    return value


def rho_grid(family, step=DEFAULT_STEP):
    """Multiples of ``step`` in [-0.99, 0.99] attainable by ``family``."""
    if not (0 < step <= 0.1):
        raise ConfigError(f"grid step must lie in (0, 0.1], got {step!r}")
    k = int(math.floor(GRID_LIMIT / step + 1e-9))
    points = [round(i * step, 12) for i in range(-k, k + 1)]
    lo, hi = rho_range(family)
    candidates = [r for r in points if lo - 1e-12 <= r <= hi + 1e-12]
    return np.array([r for r in candidates if rho_attainable(family, r)])


@dataclass(eq=False)
class CharacteristicCurve:
    family: CopulaFamily
    rho_grid: np.ndarray
    raw_values: np.ndarray
    step: float = DEFAULT_STEP
    prior: FamilyPrior | None = None
    posterior_values: np.ndarray | None = None
    thetas: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.family = CopulaFamily.from_token(self.family)
        self.rho_grid = np.asarray(self.rho_grid, dtype=float)
        self.raw_values = np.asarray(self.raw_values, dtype=float)
        if self.rho_grid.ndim != 1 or self.rho_grid.shape != self.raw_values.shape:
            raise ConfigError("curve grid and values must be 1-D and the same length")
        if self.rho_grid.size == 0:
            raise ConfigError(f"{self.family.value} curve has an empty grid")
        if np.any(np.diff(self.rho_grid) <= 0):
            raise ConfigError("curve grid must be strictly increasing")
        if self.posterior_values is not None:
            self.posterior_values = np.asarray(self.posterior_values, dtype=float)
            if self.posterior_values.shape != self.rho_grid.shape:
                raise ConfigError("posterior values must match the grid")

    def covers(self, rho):
        return rho_attainable(self.family, rho)

    def _interp(self, values, rho):
        return float(np.interp(rho, self.rho_grid, values))

    def raw_at(self, rho):
        return self._interp(self.raw_values, rho)

    def posterior_at(self, rho):
        if self.posterior_values is None:
            raise ConfigError(f"{self.family.value} curve has no posterior values")
        return self._interp(self.posterior_values, rho)

    def __eq__(self, other):
        if not isinstance(other, CharacteristicCurve):
            return NotImplemented

        def same(a, b):
            if a is None or b is None:
                return a is b
            return np.array_equal(a, b, equal_nan=True)

        return (self.family is other.family and self.step == other.step
                and self.prior == other.prior
                and same(self.rho_grid, other.rho_grid)
                and same(self.raw_values, other.raw_values)
                and same(self.posterior_values, other.posterior_values))


def _map(fn, items, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def build_raw_curve(family, grid_step=DEFAULT_STEP, resolution=None, threads=None):
    """Negative entropy along the rho grid of one family."""
    family = CopulaFamily.from_token(family)
    grid = rho_grid(family, grid_step)

    def point(rho):
        try:
            theta = theta_from_rho(family, rho, resolution)
            return theta, negative_entropy(BivariateCopula(family, theta), resolution)
        except Exception as exc:
            raise type(exc)(f"{exc} (curve {family.value}, rho={rho!r})") from exc

    results = _map(point, grid, threads)
    thetas = np.array([t for t, _ in results])
    raw = np.array([v for _, v in results])
    return CharacteristicCurve(family, grid, raw, step=float(grid_step), thetas=thetas)


def build_posterior_curve(raw, prior, threads=None):
    """Copy of ``raw`` with posterior = raw + log prior density in rho."""
    if prior.family is not raw.family:
        raise ConfigError(
            f"prior for {prior.family.value} cannot calibrate a {raw.family.value} curve"
        )
    log_prior = np.array(_map(lambda r: prior_log_density_in_rho(prior, r), raw.rho_grid, threads))
    return CharacteristicCurve(raw.family, raw.rho_grid.copy(), raw.raw_values.copy(),
                               step=raw.step, prior=prior,
                               posterior_values=raw.raw_values + log_prior,
                               thetas=raw.thetas)


def build_curves(families=DEFAULT_FAMILIES, priors=None, grid_step=DEFAULT_STEP,
                 resolution=None, threads=None):
    """Raw and posterior curves for several families (priors default per family)."""
    priors = dict(priors or {})
    curves = []
    for family in families:
        family = CopulaFamily.from_token(family)
        prior = priors.get(family) or default_prior(family)
        raw = build_raw_curve(family, grid_step, resolution, threads)
        curves.append(build_posterior_curve(raw, prior, threads))
    return curves


def select_family(curves, rho_hat, posterior=True):
    """Family whose (posterior) curve is highest at ``rho_hat``.

    Curves whose family cannot attain ``rho_hat`` are skipped; ties go to
    gaussian, then gumbel, then clayton, then the remaining families.
    """
    rho_hat = float(rho_hat)
    best = None
    for curve in curves:
        if not curve.covers(rho_hat):
            continue
        value = curve.posterior_at(rho_hat) if posterior else curve.raw_at(rho_hat)
        key = (-value, _TIE_ORDER.get(curve.family, 3), list(CopulaFamily).index(curve.family))
        if best is None or key < best[0]:
            best = (key, curve.family, value)
    if best is None:
        names = ", ".join(c.family.value for c in curves) or "none"
        raise SelectionError(f"no characteristic curve ({names}) covers rho={rho_hat!r}")
    return best[1], best[2]


def _fmt(x):
    return "%.17g" % x


def save_curves(curves, path, comments=()):
    """Write curves atomically in the ``SMSCURVES v1`` text format."""
    lines = [FILE_MAGIC]
    lines += [f"# {c}" for c in comments]
    for curve in curves:
        prior = curve.prior.spec() if curve.prior is not None else "none"
        lines.append("")
        lines.append(f"family={curve.family.value} prior={prior} step={_fmt(curve.step)} "
                     f"points={curve.rho_grid.size}")
        post = curve.posterior_values
        for i, r in enumerate(curve.rho_grid):
            p = _fmt(post[i]) if post is not None else "nan"
            lines.append(f"{_fmt(r)} {_fmt(curve.raw_values[i])} {p}")
    atomic_write(path, "\n".join(lines) + "\n")


def atomic_write(path, text):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _parse_header(line, line_no):
    fields = {}
    for token in line.split():
        key, sep, value = token.partition("=")
        if not sep:
            raise FormatError(f"malformed family header token {token!r}", line=line_no)
        fields[key] = value
    missing = {"family", "prior", "step", "points"} - fields.keys()
    if missing:
        raise FormatError(f"family header lacks {', '.join(sorted(missing))}", line=line_no)
    try:
        family = CopulaFamily.from_token(fields["family"])
        prior = None if fields["prior"] == "none" else FamilyPrior.parse(family, fields["prior"])
        step = float(fields["step"])
        points = int(fields["points"])
    except (ConfigError, ValueError) as exc:
        raise FormatError(str(exc), line=line_no) from exc
    return family, prior, step, points


def load_curves(path):
    """Read an ``SMSCURVES v1`` file; any defect raises :class:`FormatError`."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if not lines or lines[0].strip() != FILE_MAGIC:
        found = lines[0].strip() if lines else ""
        raise FormatError(f"expected {FILE_MAGIC!r}, found {found!r}", line=1)
    curves = []
    current = None

    def finish(block, line_no):
        family, prior, step, points, rows = block
        if len(rows) != points:
            raise FormatError(
                f"{family.value} curve declares {points} points but has {len(rows)} "
                "(truncated file?)", line=line_no)
        arr = np.array(rows)
        post = None if np.all(np.isnan(arr[:, 2])) else arr[:, 2]
        curves.append(CharacteristicCurve(family, arr[:, 0], arr[:, 1], step=step,
                                          prior=prior, posterior_values=post))

    for line_no, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("family="):
            if current is not None:
                finish(current, line_no)
            current = (*_parse_header(line, line_no), [])
            continue
        if current is None:
            raise FormatError("data row before any family header", line=line_no)
        parts = line.split()
        if len(parts) != 3:
            raise FormatError(f"expected 3 numbers, found {len(parts)}", line=line_no)
        try:
            row = [float(x) for x in parts]
        except ValueError as exc:
            raise FormatError(f"unparsable number in {line!r}", line=line_no) from exc
        rows = current[-1]
        if rows and not row[0] > rows[-1][0]:
            raise FormatError("rho grid must be strictly increasing", line=line_no)
        rows.append(row)
    if current is None:
        raise FormatError("file contains no curves", line=len(lines))
    finish(current, len(lines))
    return curves
