"""Joint density of a fitted copula tree and the held-out comparison metrics."""

from __future__ import annotations

import io
import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from smstree.copulas.families import log_pdf_unchecked
from smstree.empirical import Dataset, fit_marginal
from smstree.errors import ConfigError, SchemaError, SMSError
from smstree.tree import learn, learn_timing

REPORT_HEADER = ("split", "method", "metric", "value")
METRICS = ("avg_logprob", "overlap_vs_mle", "family_agreement_vs_mle", "scoring_seconds")


class UndefinedMetricError(SMSError, ValueError):
    """A comparison metric has no defined value for the given trees."""

    exit_code = 5


@dataclass(frozen=True, eq=False)
class FittedModel:
    """A copula tree plus one kernel marginal per variable."""

    tree: object
    marginals: tuple

    def __post_init__(self):
        marginals = tuple(self.marginals)
        if len(marginals) != self.tree.n:
            raise ConfigError(
                f"{len(marginals)} marginals for a tree over {self.tree.n} variables"
            )
        object.__setattr__(self, "marginals", marginals)

    @classmethod
    def fit(cls, tree, train):
        """Attach kernel marginals estimated from the training data."""
        _check_schema(tree, train)
        return cls(tree, tuple(fit_marginal(train.column(k)) for k in range(train.n)))


def _check_schema(tree, data):
    if tuple(data.variable_names) != tuple(tree.variable_names):
        raise SchemaError(
            "variable names do not match the model: expected "
            f"{list(tree.variable_names)}, got {list(data.variable_names)}"
        )


def _log_density_rows(model, x):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != model.tree.n:
        raise SchemaError(f"expected {model.tree.n} values per row, got {x.shape[1]}")
    u = np.column_stack([m.cdf(x[:, k]) for k, m in enumerate(model.marginals)])
    total = np.zeros(x.shape[0])
    for k, m in enumerate(model.marginals):
        total += m.log_pdf(x[:, k])
    for e in model.tree.edges:
        total += log_pdf_unchecked(e.family, e.theta, u[:, e.i], u[:, e.j])
    return total


def log_density(model, x):
    """Log joint density: edge copula log-densities plus marginal log-densities.

    ``x`` may be a single n-vector or a matrix of rows.
    """
    x = np.asarray(x, dtype=float)
    out = _log_density_rows(model, x)
    return float(out[0]) if x.ndim == 1 else out


def avg_test_logprob(model, test):
    """Mean log density of the held-out rows under train-fitted marginals."""
    if not isinstance(test, Dataset):
        raise ConfigError("test data must be a Dataset")
    _check_schema(model.tree, test)
    return float(np.mean(_log_density_rows(model, test.values)))


def _check_same_variables(a, b):
    if tuple(a.variable_names) != tuple(b.variable_names):
        raise SchemaError("trees are defined over different variable sets")


def edge_overlap(a, b):
    """Fraction of the n - 1 edges shared by the two trees (unordered pairs)."""
    _check_same_variables(a, b)
    return len(a.pairs() & b.pairs()) / (a.n - 1)


def family_agreement(a, b):
    """Among edges common to both trees, the fraction with the same family."""
    _check_same_variables(a, b)
    ea, eb = a.edge_map(), b.edge_map()
    common = sorted(ea.keys() & eb.keys())
    if not common:
        raise UndefinedMetricError("family agreement is undefined: the trees share no edge")
    same = sum(ea[p].family is eb[p].family for p in common)
    return same / len(common)


def equal_split(m, seed, split):
    """Random train/test halves for one split; sizes differ by at most one row."""
    rng = np.random.default_rng([int(seed), int(split)])
    perm = rng.permutation(m)
    cut = (m + 1) // 2
    return np.sort(perm[:cut]), np.sort(perm[cut:])


@dataclass(frozen=True)
class SplitResult:
    split: int
    method: str
    metric: str
    value: float


def _run_split(data, methods, curves, seed, split, reference):
    train_rows, test_rows = equal_split(data.M, seed, split)
    train, test = data.subset(train_rows), data.subset(test_rows)
    trees, rows = {}, []
    for label, cfg in methods.items():
        try:
            tree = learn(train, cfg, curves)
            timing = learn_timing(train, cfg, curves=curves)
            model = FittedModel.fit(tree, train)
            score = avg_test_logprob(model, test)
        except SMSError as exc:
            raise type(exc)(f"split {split}, method {label}: {exc}") from exc
        trees[label] = tree
        rows.append(SplitResult(split, label, "avg_logprob", score))
        rows.append(SplitResult(split, label, "scoring_seconds", timing.wall_seconds))
    if reference in trees:
        for label, tree in trees.items():
            if label == reference:
                continue
            rows.append(SplitResult(split, label, "overlap_vs_mle",
                                    edge_overlap(tree, trees[reference])))
            try:
                agree = family_agreement(tree, trees[reference])
            except UndefinedMetricError:
                agree = float("nan")
            rows.append(SplitResult(split, label, "family_agreement_vs_mle", agree))
    return rows


def crossval_report(data, folds, methods, curves=None, seed=0, threads=None,
                    reference="mle"):
    """Train every method on random equal splits and score it on the held-out half.

    ``methods`` maps a report label to a :class:`~smstree.tree.LearnConfig`.
    Rows come back sorted by split, then in method and metric order.
    """
    folds = int(folds)
    if folds < 2:
        raise ConfigError("crossval_report needs at least 2 folds")
    if not methods:
        raise ConfigError("crossval_report needs at least one method")

    def one(k):
        return _run_split(data, methods, curves, seed, k, reference)

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(one, range(folds)))
    else:
        parts = [one(k) for k in range(folds)]
    return [row for part in parts for row in part]


def format_report(rows, comments=()):
    buf = io.StringIO()
    for line in comments:
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_HEADER)
    for r in rows:
        writer.writerow([r.split, r.method, r.metric, "%.17g" % r.value])
    return buf.getvalue()


def parse_report(text):
    rows = []
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader, None)
    if tuple(header or ()) != REPORT_HEADER:
        raise ConfigError(f"unexpected report header {header!r}")
    for split, method, metric, value in reader:
        rows.append(SplitResult(int(split), method, metric, float(value)))
    return rows
