"""The eight bivariate copula families and their pointwise functions.

Every family exposes a CDF, a log-density and the conditional
distribution ``h(v | u) = dC(u, v)/du`` used for sampling and for
quadrature in conditional coordinates.  All kernels are vectorised over
``u`` and ``v`` and written in log space where the closed forms overflow
for strong dependence.
"""

from __future__ import annotations

import enum
import math
import threading
from dataclasses import dataclass

import numpy as np
from scipy import special

from smstree.errors import ConfigError, ParameterDomainError

DENSITY_FLOOR = 1e-300
LOG_DENSITY_FLOOR = math.log(DENSITY_FLOOR)


class _ClampCounter:
    def __init__(self):
        self._lock = threading.Lock()
        self._count = 0

    def add(self, n):
        if n:
            with self._lock:
                self._count += int(n)

    def reset(self):
        with self._lock:
            count, self._count = self._count, 0
        return count

    @property
    def count(self):
        return self._count


density_clamps = _ClampCounter()


@dataclass(frozen=True)
class Support:
    lower: float
    upper: float
    lower_open: bool
    upper_open: bool

    def __contains__(self, theta):
        theta = float(theta)
        if math.isnan(theta):
            return False
        above = theta > self.lower if self.lower_open else theta >= self.lower
        below = theta < self.upper if self.upper_open else theta <= self.upper
        return above and below

    def __str__(self):
        left = "(" if self.lower_open else "["
        right = ")" if self.upper_open else "]"
        return f"{left}{self.lower:g}, {self.upper:g}{right}"


class CopulaFamily(enum.Enum):
    GAUSSIAN = "gaussian"
    FGM = "fgm"
    GUMBEL = "gumbel"
    FRANK = "frank"
    CLAYTON = "clayton"
    JOE = "joe"
    AMH = "amh"
    GUMBEL_BARNETT = "gumbel_barnett"

    @property
    def token(self):
        return self.value

    @classmethod
    def from_token(cls, token):
        if isinstance(token, cls):
            return token
        try:
            return cls(str(token).strip().lower())
        except ValueError:
            valid = ", ".join(f.value for f in cls)
            raise ConfigError(
                f"unknown copula family {token!r}; valid tokens: {valid}"
            ) from None

    @property
    def theta_support(self):
        return _SUPPORTS[self]

    @property
    def ordering_direction(self):
        """+1 when larger theta is more PQD, -1 for negatively ordered families."""
        return -1 if self is CopulaFamily.GUMBEL_BARNETT else 1

    @property
    def independence_theta(self):
        """Parameter value giving the independence copula, if it is in the support."""
        return _INDEPENDENCE.get(self)

    @property
    def theta_cap(self):
        """Finite stand-in for an unbounded upper support end.

        Chosen so that Spearman's rho at the cap is just above 0.99.
        """
        return _THETA_CAP.get(self, self.theta_support.upper)

    def density_class(self, theta):
        """'TP2' or 'RR2' per the total-positivity classification of the density."""
        theta = float(theta)
        if self is CopulaFamily.GUMBEL_BARNETT:
            return "RR2"
        if self in (CopulaFamily.GAUSSIAN, CopulaFamily.FGM, CopulaFamily.AMH):
            return "TP2" if theta >= 0 else "RR2"
        return "TP2"

    def check_theta(self, theta):
        theta = float(theta)
        if theta not in self.theta_support:
            raise ParameterDomainError(
                f"{self.value} copula requires theta in {self.theta_support}, got {theta!r}"
            )
        return theta


_INF = math.inf
_SUPPORTS = {
    CopulaFamily.GAUSSIAN: Support(-1.0, 1.0, True, True),
    CopulaFamily.FGM: Support(-1.0, 1.0, False, False),
    CopulaFamily.GUMBEL: Support(1.0, _INF, False, True),
    CopulaFamily.FRANK: Support(0.0, _INF, True, True),
    CopulaFamily.CLAYTON: Support(0.0, _INF, True, True),
    CopulaFamily.JOE: Support(1.0, _INF, False, True),
    CopulaFamily.AMH: Support(-1.0, 1.0, False, False),
    CopulaFamily.GUMBEL_BARNETT: Support(0.0, 1.0, True, False),
}
_INDEPENDENCE = {
    CopulaFamily.GAUSSIAN: 0.0,
    CopulaFamily.FGM: 0.0,
    CopulaFamily.GUMBEL: 1.0,
    CopulaFamily.JOE: 1.0,
    CopulaFamily.AMH: 0.0,
}
_THETA_CAP = {
    CopulaFamily.GUMBEL: 16.0,
    CopulaFamily.FRANK: 80.0,
    CopulaFamily.CLAYTON: 32.0,
    CopulaFamily.JOE: 30.0,
}


def _log_expm1(x):
    """log(exp(x) - 1) for x >= 0 without overflow."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        big = x > 30.0
        return np.where(big, x + np.log1p(-np.exp(-np.where(big, x, 30.0))),
                        np.log(np.expm1(np.where(big, 1.0, x))))


# Family kernels.  Each takes broadcastable arrays u, v in (0, 1) and a
# scalar theta already validated against the support.

class _Gaussian:
    @staticmethod
    def log_pdf(u, v, t):
        x, y = special.ndtri(u), special.ndtri(v)
        s = 1.0 - t * t
        return -0.5 * math.log(s) - (t * t * (x * x + y * y) - 2.0 * t * x * y) / (2.0 * s)

    @staticmethod
    def h(u, v, t):
        x, y = special.ndtri(u), special.ndtri(v)
        return special.ndtr((y - t * x) / math.sqrt(1.0 - t * t))

    @staticmethod
    def h_inverse(u, w, t):
        x, z = special.ndtri(u), special.ndtri(w)
        return special.ndtr(t * x + math.sqrt(1.0 - t * t) * z)

    # Gauss-Legendre nodes on [0, 1] for the angular form of the
    # bivariate normal CDF (integrand is bounded and smooth).
    _nodes, _weights = np.polynomial.legendre.leggauss(64)

    @classmethod
    def cdf(cls, u, v, t):
        x, y = special.ndtri(u), special.ndtri(v)
        base = special.ndtr(x) * special.ndtr(y)
        if t == 0.0:
            return base
        top = math.asin(t)
        phi = 0.5 * top * (cls._nodes + 1.0)
        s, c2 = np.sin(phi), np.cos(phi) ** 2
        xe, ye = np.asarray(x)[..., None], np.asarray(y)[..., None]
        with np.errstate(invalid="ignore", over="ignore"):
            expo = -(xe * xe - 2.0 * xe * ye * s + ye * ye) / (2.0 * c2)
            integral = np.exp(expo) @ cls._weights * (0.5 * top)
        return base + integral / (2.0 * math.pi)


class _FGM:
    @staticmethod
    def log_pdf(u, v, t):
        with np.errstate(divide="ignore"):
            return np.log1p(t * (1.0 - 2.0 * u) * (1.0 - 2.0 * v))

    @staticmethod
    def cdf(u, v, t):
        return u * v * (1.0 + t * (1.0 - u) * (1.0 - v))

    @staticmethod
    def h(u, v, t):
        return v * (1.0 + t * (1.0 - 2.0 * u) * (1.0 - v))


class _Gumbel:
    @staticmethod
    def _parts(u, v, t):
        x, y = -np.log(u), -np.log(v)
        with np.errstate(divide="ignore"):
            lx, ly = np.log(x), np.log(y)
        log_a = np.logaddexp(t * lx, t * ly) / t
        return x, y, lx, ly, log_a

    @classmethod
    def log_pdf(cls, u, v, t):
        x, y, lx, ly, log_a = cls._parts(u, v, t)
        a = np.exp(log_a)
        return (-a + x + y + special.xlogy(t - 1.0, x) + special.xlogy(t - 1.0, y)
                + (1.0 - 2.0 * t) * log_a + np.log(a + t - 1.0))

    @classmethod
    def cdf(cls, u, v, t):
        return np.exp(-np.exp(cls._parts(u, v, t)[-1]))

    @classmethod
    def h(cls, u, v, t):
        x, _, _, _, log_a = cls._parts(u, v, t)
        return np.exp(-np.exp(log_a) + x + special.xlogy(t - 1.0, x) + (1.0 - t) * log_a)


class _Frank:
    # With m = min(u, v), M = max(u, v):
    #   tau(1) - tau(u) tau(v) = exp(-t m) * B,
    #   B = -expm1(-t M) + exp(-t (M - m)) * -expm1(-t (1 - M)),
    # a sum of nonnegative terms, so no cancellation for any t.
    @staticmethod
    def _log_b(lo, hi, t):
        b = -np.expm1(-t * hi) + np.exp(-t * (hi - lo)) * -np.expm1(-t * (1.0 - hi))
        return np.log(b)

    @classmethod
    def log_pdf(cls, u, v, t):
        lo, hi = np.minimum(u, v), np.maximum(u, v)
        return (math.log(t) + math.log(-math.expm1(-t)) - t * (hi - lo)
                - 2.0 * cls._log_b(lo, hi, t))

    @classmethod
    def cdf(cls, u, v, t):
        if t < 1.0:
            # -log1p(q) / t with q = expm1(-tu) expm1(-tv) / expm1(-t); q is
            # O(t), so this avoids the 1/t amplification of the form below.
            q = np.expm1(-t * u) * np.expm1(-t * v) / math.expm1(-t)
            return -np.log1p(q) / t
        lo, hi = np.minimum(u, v), np.maximum(u, v)
        with np.errstate(divide="ignore"):
            return lo - (cls._log_b(lo, hi, t) - math.log(-math.expm1(-t))) / t

    @classmethod
    def h(cls, u, v, t):
        lo, hi = np.minimum(u, v), np.maximum(u, v)
        return np.exp(-t * (u - lo) + np.log(-np.expm1(-t * v)) - cls._log_b(lo, hi, t))


class _Clayton:
    @staticmethod
    def _log_s(u, v, t):
        # s = u^-t + v^-t - 1 = u^-t + expm1(-t log v)
        return np.logaddexp(-t * np.log(u), _log_expm1(-t * np.log(v)))

    @classmethod
    def log_pdf(cls, u, v, t):
        return (math.log1p(t) - (1.0 + t) * (np.log(u) + np.log(v))
                - (2.0 + 1.0 / t) * cls._log_s(u, v, t))

    @classmethod
    def cdf(cls, u, v, t):
        with np.errstate(divide="ignore"):
            return np.exp(-cls._log_s(u, v, t) / t)

    @classmethod
    def h(cls, u, v, t):
        with np.errstate(divide="ignore"):
            return np.exp(-(t + 1.0) * np.log(u) - (1.0 / t + 1.0) * cls._log_s(u, v, t))


class _Joe:
    @staticmethod
    def _parts(u, v, t):
        with np.errstate(divide="ignore"):
            lu, lv = np.log1p(-u), np.log1p(-v)
        la, lb = t * lu, t * lv
        # S = a + b - ab = a + b (1 - a)
        with np.errstate(divide="ignore"):
            log_s = np.logaddexp(la, lb + np.log1p(-np.exp(la)))
        return lu, lv, la, lb, log_s

    @classmethod
    def log_pdf(cls, u, v, t):
        lu, lv, _, _, log_s = cls._parts(u, v, t)
        return ((1.0 / t - 2.0) * log_s + (t - 1.0) * (lu + lv)
                + np.log(t - 1.0 + np.exp(log_s)))

    @classmethod
    def cdf(cls, u, v, t):
        return -np.expm1(cls._parts(u, v, t)[-1] / t)

    @classmethod
    def h(cls, u, v, t):
        lu, _, _, lb, log_s = cls._parts(u, v, t)
        with np.errstate(divide="ignore"):
            return np.exp((1.0 / t - 1.0) * log_s + (t - 1.0) * lu + np.log1p(-np.exp(lb)))


class _AMH:
    @staticmethod
    def log_pdf(u, v, t):
        ub, vb = 1.0 - u, 1.0 - v
        num = 1.0 + t * ((1.0 + u) * (1.0 + v) - 3.0) + t * t * ub * vb
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(num) - 3.0 * np.log1p(-t * ub * vb)

    @staticmethod
    def cdf(u, v, t):
        return u * v / (1.0 - t * (1.0 - u) * (1.0 - v))

    @staticmethod
    def h(u, v, t):
        vb = 1.0 - v
        return v * (1.0 - t * vb) / (1.0 - t * (1.0 - u) * vb) ** 2


class _GumbelBarnett:
    @staticmethod
    def log_pdf(u, v, t):
        a, b = np.log(u), np.log(v)
        return -t * a * b + np.log((1.0 - t * a) * (1.0 - t * b) - t)

    @staticmethod
    def cdf(u, v, t):
        with np.errstate(divide="ignore", invalid="ignore"):
            a, b = np.log(u), np.log(v)
            return np.where((u == 0) | (v == 0), 0.0, u * v * np.exp(-t * a * b))

    @staticmethod
    def h(u, v, t):
        a, b = np.log(u), np.log(v)
        return v * np.exp(-t * a * b) * (1.0 - t * b)


_KERNELS = {
    CopulaFamily.GAUSSIAN: _Gaussian,
    CopulaFamily.FGM: _FGM,
    CopulaFamily.GUMBEL: _Gumbel,
    CopulaFamily.FRANK: _Frank,
    CopulaFamily.CLAYTON: _Clayton,
    CopulaFamily.JOE: _Joe,
    CopulaFamily.AMH: _AMH,
    CopulaFamily.GUMBEL_BARNETT: _GumbelBarnett,
}

_BISECTION_STEPS = 90


def _bisect_h_inverse(kernel, u, w, t):
    """Solve h(v | u) = w for v by bisection on the logit of v."""
    u, w = np.broadcast_arrays(np.asarray(u, float), np.asarray(w, float))
    lo = np.full(u.shape, -745.0)
    hi = np.full(u.shape, 745.0)
    with np.errstate(all="ignore"):
        for _ in range(_BISECTION_STEPS):
            mid = 0.5 * (lo + hi)
            below = kernel.h(u, special.expit(mid), t) < w
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
    return special.expit(0.5 * (lo + hi))


def _as_unit(x, name):
    x = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(x)) or np.any((x < 0.0) | (x > 1.0)):
        raise ParameterDomainError(f"{name} must lie in [0, 1]")
    return x


@dataclass(frozen=True)
class BivariateCopula:
    """A copula family paired with a value of its dependence parameter."""

    family: CopulaFamily
    theta: float

    def __post_init__(self):
        family = CopulaFamily.from_token(self.family)
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "theta", family.check_theta(self.theta))

    @property
    def _kernel(self):
        return _KERNELS[self.family]

    def cdf(self, u, v):
        """C(u, v) with exact values on the boundary of the unit square."""
        u, v = np.broadcast_arrays(_as_unit(u, "u"), _as_unit(v, "v"))
        interior = (u > 0) & (u < 1) & (v > 0) & (v < 1)
        ui = np.where(interior, u, 0.5)
        vi = np.where(interior, v, 0.5)
        with np.errstate(all="ignore"):
            inner = self._kernel.cdf(ui, vi, self.theta)
        edge = np.where((u == 0) | (v == 0), 0.0, np.where(u == 1, v, u))
        out = np.clip(np.where(interior, inner, edge), 0.0, 1.0)
        return out[()] if out.ndim == 0 else out

    def log_pdf(self, u, v):
        """log c(u, v) on the open unit square; densities below the floor are clamped."""
        u, v = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
        if np.any(~((u > 0) & (u < 1))) or np.any(~((v > 0) & (v < 1))):
            raise ParameterDomainError("copula density needs u, v strictly inside (0, 1)")
        out = log_pdf_unchecked(self.family, self.theta, u, v)
        return out[()] if out.ndim == 0 else out

    def pdf(self, u, v):
        return np.exp(self.log_pdf(u, v))

    def h(self, u, v):
        """Conditional CDF P(V <= v | U = u) = dC(u, v)/du."""
        with np.errstate(all="ignore"):
            return np.clip(self._kernel.h(np.asarray(u, float), np.asarray(v, float),
                                          self.theta), 0.0, 1.0)

    def h_inverse(self, u, w):
        """Quantile of V given U = u at probability level w."""
        kernel = self._kernel
        if hasattr(kernel, "h_inverse"):
            return kernel.h_inverse(np.asarray(u, float), np.asarray(w, float), self.theta)
        return _bisect_h_inverse(kernel, u, w, self.theta)

    def sample(self, m, seed):
        """Draw ``m`` pairs by the conditional-distribution method.

        Returns an ``(m, 2)`` array; the same seed always yields the same draws.
        """
        m = int(m)
        if m < 1:
            raise ConfigError("sample size must be at least 1")
        rng = np.random.default_rng(seed)
        if self.family is CopulaFamily.GAUSSIAN:
            z = rng.standard_normal((m, 2))
            t = self.theta
            x = z[:, 0]
            y = t * x + math.sqrt(1.0 - t * t) * z[:, 1]
            return np.column_stack([special.ndtr(x), special.ndtr(y)])
        u = rng.random(m)
        w = rng.random(m)
        v = self.h_inverse(u, w)
        return np.column_stack([u, v])


def log_pdf_unchecked(family, theta, u, v):
    """Floored log-density without argument validation (used by quadrature)."""
    with np.errstate(all="ignore"):
        out = np.asarray(_KERNELS[family].log_pdf(u, v, theta), dtype=float)
    low = ~(out >= LOG_DENSITY_FLOOR)
    n_low = int(np.count_nonzero(low))
    if n_low:
        density_clamps.add(n_low)
        out = np.where(low, LOG_DENSITY_FLOOR, out)
    return out


def copula_cdf(c, u, v):
    return c.cdf(u, v)


def copula_log_pdf(c, u, v):
    return c.log_pdf(u, v)


def copula_sample(c, m, seed):
    return c.sample(m, seed)
