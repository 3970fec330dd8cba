"""Rank statistics, kernel marginals and CSV ingestion for raw data."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from smstree.errors import DataError, FormatError

CDF_CLAMP = 1e-6


@dataclass(frozen=True, eq=False)
class Dataset:
    """``M`` samples of ``n`` named real-valued variables."""

    variable_names: tuple
    values: np.ndarray

    def __post_init__(self):
        names = tuple(str(n) for n in self.variable_names)
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise DataError("dataset values must form a 2-D matrix")
        if len(names) != values.shape[1]:
            raise DataError(
                f"{len(names)} variable names for {values.shape[1]} columns"
            )
        if len(set(names)) != len(names):
            raise DataError("variable names must be unique")
        if values.shape[1] < 2:
            raise DataError("a dataset needs at least 2 variables")
        if values.shape[0] < 3:
            raise DataError("a dataset needs at least 3 samples")
        bad = np.argwhere(~np.isfinite(values))
        if bad.size:
            r, c = bad[0]
            raise DataError(f"non-finite value at row {r}, column {names[c]!r}")
        values.setflags(write=False)
        object.__setattr__(self, "variable_names", names)
        object.__setattr__(self, "values", values)

    @property
    def M(self):
        return self.values.shape[0]

    @property
    def n(self):
        return self.values.shape[1]

    def column(self, j):
        return self.values[:, j]

    def subset(self, rows):
        return Dataset(self.variable_names, self.values[np.asarray(rows)])

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.variable_names == other.variable_names
                and np.array_equal(self.values, other.values))

    __hash__ = None


def read_csv(path):
    """Load a dataset from a UTF-8 CSV whose first row holds the variable names.

    Lines starting with ``#`` are skipped.  Raises :class:`FormatError` with
    the 1-based line and column of the first unparsable or missing cell.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = None
        rows = []
        for line_no, row in enumerate(reader, start=1):
            if not row or row[0].startswith("#"):
                continue
            if header is None:
                header = [h.strip() for h in row]
                continue
            if len(row) != len(header):
                raise FormatError(
                    f"expected {len(header)} cells, found {len(row)}", line=line_no
                )
            parsed = []
            for col, cell in enumerate(row):
                try:
                    value = float(cell)
                except ValueError:
                    value = math.nan
                if not math.isfinite(value):
                    raise FormatError(
                        f"column {col + 1} ({header[col]!r}): cannot parse {cell!r} "
                        "as a finite real", line=line_no)
                parsed.append(value)
            rows.append(parsed)
    if header is None:
        raise FormatError("empty CSV file", line=1)
    if not rows:
        raise FormatError("CSV file has a header but no samples", line=2)
    return Dataset(header, np.array(rows))


def write_csv(dataset, path_or_file, comments=()):
    close = False
    fh = path_or_file
    if isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__"):
        fh = open(path_or_file, "w", newline="", encoding="utf-8")
        close = True
    try:
        for line in comments:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(dataset.variable_names)
        for row in dataset.values:
            writer.writerow([repr(float(x)) for x in row])
    finally:
        if close:
            fh.close()


def average_ranks(x):
    """Ranks 1..M with tied values sharing the mean of their positions."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise DataError("ranks need a non-empty 1-D sequence")
    if not np.all(np.isfinite(x)):
        raise DataError("ranks need finite values")
    return stats.rankdata(x, method="average")


def _centred(ranks, label):
    d = ranks - ranks.mean()
    ss = float(d @ d)
    if ss == 0.0:
        raise DataError(f"{label} is constant; Spearman's rho is undefined")
    return d, ss


def spearman_rho(x, y):
    """Pearson correlation of the average ranks of ``x`` and ``y``."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise DataError("spearman_rho needs two 1-D sequences of equal length")
    if x.size < 3:
        raise DataError("spearman_rho needs at least 3 samples")
    dx, sx = _centred(average_ranks(x), "x")
    dy, sy = _centred(average_ranks(y), "y")
    r = float(np.sum(dx * dy)) / math.sqrt(sx * sy)
    return min(1.0, max(-1.0, r))


def pairwise_rho_matrix(dataset):
    """Symmetric matrix of Spearman's rho over all column pairs.

    Each variable is ranked once; every entry is then a dot product of
    unit-norm centred rank vectors, so the result does not depend on the
    order in which pairs are visited.
    """
    ranks = np.apply_along_axis(average_ranks, 0, dataset.values)
    d = ranks - ranks.mean(axis=0)
    ss = np.einsum("ij,ij->j", d, d)
    flat = np.flatnonzero(ss == 0.0)
    if flat.size:
        raise DataError(
            f"variable {dataset.variable_names[flat[0]]!r} is constant; "
            "Spearman's rho is undefined"
        )
    z = d / np.sqrt(ss)
    gram = z.T @ z
    upper = np.triu(gram, 1)
    out = np.clip(upper + upper.T, -1.0, 1.0)
    np.fill_diagonal(out, 1.0)
    return out


def pseudo_observations(dataset):
    """Column-wise ``rank / (M + 1)``, strictly inside (0, 1)."""
    ranks = np.apply_along_axis(average_ranks, 0, dataset.values)
    return ranks / (dataset.M + 1.0)


@dataclass(frozen=True, eq=False)
class EmpiricalMarginal:
    """Gaussian-kernel estimate of one variable's distribution."""

    centers: np.ndarray
    bandwidth: float

    def cdf(self, x):
        """Kernel-mixture CDF clamped to ``[CDF_CLAMP, 1 - CDF_CLAMP]``."""
        return np.clip(self.raw_cdf(x), CDF_CLAMP, 1.0 - CDF_CLAMP)

    def raw_cdf(self, x):
        x = np.asarray(x, dtype=float)
        z = (x[..., None] - self.centers) / self.bandwidth
        out = special.ndtr(z).mean(axis=-1)
        return out[()] if out.ndim == 0 else out

    def log_pdf(self, x):
        x = np.asarray(x, dtype=float)
        z = (x[..., None] - self.centers) / self.bandwidth
        out = (special.logsumexp(-0.5 * z * z, axis=-1)
               - math.log(self.centers.size * self.bandwidth * math.sqrt(2.0 * math.pi)))
        return out[()] if out.ndim == 0 else out

    def pdf(self, x):
        return np.exp(self.log_pdf(x))


def silverman_bandwidth(x):
    x = np.asarray(x, dtype=float)
    sd = float(np.std(x, ddof=1))
    q75, q25 = np.percentile(x, [75, 25])
    iqr = float(q75 - q25) / 1.34
    sigma = min(sd, iqr) if iqr > 0 else sd
    return 1.06 * sigma * x.size ** -0.2


def fit_marginal(x):
    """Kernel marginal with Silverman's rule-of-thumb bandwidth."""
    x = np.array(x, dtype=float)
    if x.ndim != 1 or x.size < 3:
        raise DataError("a marginal needs at least 3 samples")
    if not np.all(np.isfinite(x)):
        raise DataError("a marginal needs finite samples")
    if np.all(x == x[0]):
        raise DataError("cannot fit a marginal to a constant column")
    x.setflags(write=False)
    return EmpiricalMarginal(centers=x, bandwidth=silverman_bandwidth(x))


def marginal_cdf(m, x):
    return m.cdf(x)


def marginal_log_pdf(m, x):
    return m.log_pdf(x)
