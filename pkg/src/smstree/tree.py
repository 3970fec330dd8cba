"""Copula tree learning: Spearman-based SMS and the exact MLE baseline."""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from smstree.copulas.families import BivariateCopula, CopulaFamily, log_pdf_unchecked
from smstree.copulas.measures import rho_attainable, theta_bounds, theta_from_rho
from smstree.curves import DEFAULT_FAMILIES, atomic_write, select_family
from smstree.empirical import Dataset, pairwise_rho_matrix, pseudo_observations
from smstree.errors import ConfigError, DataError, FormatError, NumericalError, SMSError

FILE_MAGIC = "SMSTREE v1"
WEAK_RHO = 0.01
MLE_RHO_CAP = 0.99

_TIE_ORDER = {CopulaFamily.GAUSSIAN: 0, CopulaFamily.GUMBEL: 1, CopulaFamily.CLAYTON: 2}


def _tie_rank(family):
    return _TIE_ORDER.get(family, 3), list(CopulaFamily).index(family)


@dataclass(frozen=True)
class Edge:
    i: int
    j: int
    family: CopulaFamily
    theta: float
    rho_hat: float
    score: float

    @property
    def pair(self):
        return (self.i, self.j)

    @property
    def copula(self):
        return BivariateCopula(self.family, self.theta)


@dataclass(frozen=True)
class CopulaTree:
    """Spanning tree over the variables with one bivariate copula per edge."""

    variable_names: tuple
    edges: tuple

    def __post_init__(self):
        names = tuple(str(n) for n in self.variable_names)
        edges = tuple(sorted(self.edges, key=lambda e: (e.i, e.j)))
        object.__setattr__(self, "variable_names", names)
        object.__setattr__(self, "edges", edges)
        n = len(names)
        if n < 2:
            raise ConfigError("a copula tree needs at least 2 variables")
        if len(edges) != n - 1:
            raise ConfigError(f"a spanning tree on {n} nodes has {n - 1} edges, got {len(edges)}")
        parent = list(range(n))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for e in edges:
            if not (0 <= e.i < e.j < n):
                raise ConfigError(f"edge ({e.i}, {e.j}) must satisfy 0 <= i < j < {n}")
            ri, rj = find(e.i), find(e.j)
            if ri == rj:
                raise ConfigError(f"edge ({e.i}, {e.j}) closes a cycle")
            parent[ri] = rj
            e.family.check_theta(e.theta)
            if not (-1.0 <= e.rho_hat <= 1.0):
                raise ConfigError(f"edge ({e.i}, {e.j}) has rho_hat outside [-1, 1]")

    @property
    def n(self):
        return len(self.variable_names)

    def pairs(self):
        return {e.pair for e in self.edges}

    def edge_map(self):
        return {e.pair: e for e in self.edges}


@dataclass(frozen=True)
class LearnConfig:
    family_set: tuple = DEFAULT_FAMILIES
    method: str = "sms"
    mle_tolerance: float = 1e-6
    seed: int = 0
    threads: int | None = None
    refine_mle: bool = False

    def __post_init__(self):
        families = tuple(CopulaFamily.from_token(f) for f in self.family_set)
        if not families:
            raise ConfigError("family_set must not be empty")
        object.__setattr__(self, "family_set", tuple(dict.fromkeys(families)))
        if self.method not in ("sms", "mle"):
            raise ConfigError(f"method must be 'sms' or 'mle', got {self.method!r}")
        if not self.mle_tolerance > 0:
            raise ConfigError("mle_tolerance must be positive")


def max_spanning_tree(weights):
    """Kruskal's maximum spanning tree with ties broken by lexicographic (i, j)."""
    w = np.asarray(weights, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise DataError("weights must be a square matrix")
    n = w.shape[0]
    if n < 2:
        raise DataError("a spanning tree needs at least 2 nodes")
    iu, ju = np.triu_indices(n, 1)
    upper = w[iu, ju]
    if not np.all(np.isfinite(upper)):
        k = int(np.flatnonzero(~np.isfinite(upper))[0])
        raise DataError(f"non-finite weight at ({iu[k]}, {ju[k]})")
    order = np.lexsort((ju, iu, -upper))
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    edges = []
    for k in order:
        i, j = int(iu[k]), int(ju[k])
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
            edges.append((i, j))
            if len(edges) == n - 1:
                break
    return sorted(edges)


def _weak_edge(i, j, rho):
    theta = theta_from_rho(CopulaFamily.GAUSSIAN, rho)
    return Edge(i, j, CopulaFamily.GAUSSIAN, theta, rho, 0.0)


def _sms_edge(curves, i, j, rho):
    if abs(rho) < WEAK_RHO:
        return _weak_edge(i, j, rho)
    try:
        family, score = select_family(curves, rho)
        theta = theta_from_rho(family, rho)
    except SMSError as exc:
        raise type(exc)(f"edge ({i}, {j}): {exc}") from exc
    return Edge(i, j, family, theta, rho, score)


def sms_learn(dataset, curves, cfg=None):
    """Speedy model selection.

    Ranks edges by |Spearman's rho|, takes the maximum spanning tree and
    picks each edge's family from the posterior curves at its empirical
    rho.  The parameter is set by inverting the rho map; no per-sample
    likelihood is evaluated unless ``cfg.refine_mle`` is set.
    """
    cfg = cfg or LearnConfig()
    chosen = [c for c in curves if c.family in cfg.family_set]
    missing = set(cfg.family_set) - {c.family for c in chosen}
    if missing:
        names = ", ".join(sorted(f.value for f in missing))
        raise ConfigError(f"no characteristic curves loaded for: {names}")
    rho = pairwise_rho_matrix(dataset)
    edges = []
    for i, j in max_spanning_tree(np.abs(rho)):
        edges.append(_sms_edge(chosen, i, j, float(rho[i, j])))
    if cfg.refine_mle:
        pseudo = pseudo_observations(dataset)
        refined = []
        for e in edges:
            theta, loglik = mle_edge_fit(pseudo[:, e.i], pseudo[:, e.j], e.family,
                                         cfg.mle_tolerance)
            refined.append(Edge(e.i, e.j, e.family, theta, e.rho_hat, e.score))
        edges = refined
    return CopulaTree(dataset.variable_names, tuple(edges))


def mle_bounds(family):
    """Search interval for the MLE: support ends, unbounded ends capped at rho = 0.99."""
    family = CopulaFamily.from_token(family)
    lo, hi = theta_bounds(family)
    s = family.theta_support
    if s.lower_open:
        lo = s.lower + 1e-6
    if math.isinf(s.upper):
        hi = theta_from_rho(family, MLE_RHO_CAP)
    elif s.upper_open:
        hi = s.upper - 1e-6
    if family is CopulaFamily.GAUSSIAN:
        cap = theta_from_rho(family, MLE_RHO_CAP)
        lo, hi = -cap, cap
    return lo, hi


def copula_loglik(family, theta, u, v):
    return float(np.sum(log_pdf_unchecked(family, theta, u, v)))


def mle_edge_fit(u, v, family, tol=1e-6, maxiter=500):
    """Maximise the copula log-likelihood of pseudo-observations over theta.

    Bounded Brent search on the family's (capped) support; the support
    ends and the independence value are checked too so an optimum on the
    boundary is not missed.  Returns ``(theta_hat, loglik)``.
    """
    family = CopulaFamily.from_token(family)
    u, v = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
    if u.shape != v.shape or u.ndim != 1:
        raise DataError("mle_edge_fit needs two 1-D columns of equal length")
    if np.any((u <= 0) | (u >= 1) | (v <= 0) | (v >= 1)):
        raise DataError("pseudo-observations must lie strictly inside (0, 1)")
    lo, hi = mle_bounds(family)

    def nll(theta):
        return -copula_loglik(family, theta, u, v)

    res = optimize.minimize_scalar(nll, bounds=(lo, hi), method="bounded",
                                   options={"xatol": tol, "maxiter": maxiter})
    if not res.success or not math.isfinite(res.fun):
        raise NumericalError(
            f"MLE for {family.value} did not converge after {res.nfev} evaluations "
            f"(bounds [{lo:.6g}, {hi:.6g}], status {res.status}: {res.message})"
        )
    best_theta, best_ll = float(res.x), -float(res.fun)
    candidates = [lo, hi]
    if family.independence_theta is not None:
        candidates.append(family.independence_theta)
    for theta in candidates:
        ll = copula_loglik(family, theta, u, v)
        if ll > best_ll:
            best_theta, best_ll = float(theta), ll
    return best_theta, best_ll


def _best_family_fit(u, v, families, tol):
    best = None
    for family in families:
        theta, ll = mle_edge_fit(u, v, family, tol)
        key = (-ll, *_tie_rank(family))
        if best is None or key < best[0]:
            best = (key, family, theta, ll)
    return best[1:]


def _all_pair_fits(pseudo, families, tol, threads):
    n = pseudo.shape[1]
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]

    def fit(pair):
        i, j = pair
        try:
            return _best_family_fit(pseudo[:, i], pseudo[:, j], families, tol)
        except SMSError as exc:
            raise type(exc)(f"pair ({i}, {j}): {exc}") from exc

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(fit, pairs))
    else:
        results = [fit(p) for p in pairs]
    return dict(zip(pairs, results))


def mle_learn(dataset, cfg=None):
    """Exact baseline: best-family MLE for every pair, then the maximum spanning tree.

    Edge weights are the best per-pair log-likelihoods over ``cfg.family_set``.
    """
    cfg = cfg or LearnConfig(method="mle")
    pseudo = pseudo_observations(dataset)
    fits = _all_pair_fits(pseudo, cfg.family_set, cfg.mle_tolerance, cfg.threads)
    n = dataset.n
    weights = np.zeros((n, n))
    for (i, j), (_, _, ll) in fits.items():
        weights[i, j] = weights[j, i] = ll
    rho = pairwise_rho_matrix(dataset)
    edges = []
    for i, j in max_spanning_tree(weights):
        family, theta, ll = fits[(i, j)]
        edges.append(Edge(i, j, family, theta, float(rho[i, j]), ll))
    return CopulaTree(dataset.variable_names, tuple(edges))


def learn(dataset, cfg, curves=None):
    if cfg.method == "sms":
        if curves is None:
            raise ConfigError("the sms method needs characteristic curves")
        return sms_learn(dataset, curves, cfg)
    return mle_learn(dataset, cfg)


@dataclass(frozen=True)
class Timing:
    method: str
    wall_seconds: float
    per_edge_seconds: float
    candidate_edges: int
    tree_edges: int = field(default=0)


def learn_timing(dataset, cfg, repeats=None, curves=None):
    """Wall time of the edge-scoring phase only (no I/O or parameter annotation).

    SMS scoring is the Spearman matrix and, when ``curves`` are given, the
    spanning tree plus one curve lookup per tree edge; MLE scoring is every
    pair fitted for every family.  The minimum over ``repeats`` runs is
    reported (default 7 for sms, 1 for mle).
    """
    if repeats is None:
        repeats = 7 if cfg.method == "sms" else 1
    n = dataset.n
    candidates = n * (n - 1) // 2
    best = math.inf
    for _ in range(max(1, int(repeats))):
        start = time.perf_counter()
        if cfg.method == "sms":
            rho = pairwise_rho_matrix(dataset)
            if curves is not None:
                chosen = [c for c in curves if c.family in cfg.family_set]
                for i, j in max_spanning_tree(np.abs(rho)):
                    if abs(rho[i, j]) >= WEAK_RHO:
                        select_family(chosen, rho[i, j])
        else:
            _all_pair_fits(pseudo_observations(dataset), cfg.family_set,
                           cfg.mle_tolerance, cfg.threads)
        best = min(best, time.perf_counter() - start)
    return Timing(cfg.method, best, best / candidates, candidates, n - 1)


def _fmt(x):
    return "%.17g" % x


def save_tree(tree, path, comments=()):
    """Write the ``SMSTREE v1`` text format atomically."""
    for name in tree.variable_names:
        if "," in name or "\n" in name:
            raise ConfigError(f"variable name {name!r} cannot be stored in a model file")
    lines = [FILE_MAGIC, ",".join(tree.variable_names)]
    lines += [f"# {c}" for c in comments]
    for e in tree.edges:
        lines.append(f"{e.i} {e.j} {e.family.value} {_fmt(e.theta)} {_fmt(e.rho_hat)} {_fmt(e.score)}")
    atomic_write(path, "\n".join(lines) + "\n")


def read_tree_comments(path):
    with open(path, encoding="utf-8") as fh:
        return [line[1:].strip() for line in fh if line.startswith("#")]


def load_tree(path):
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if not lines or lines[0].strip() != FILE_MAGIC:
        raise FormatError(f"expected {FILE_MAGIC!r}", line=1)
    if len(lines) < 2 or not lines[1].strip():
        raise FormatError("missing variable-name line", line=2)
    names = [s.strip() for s in lines[1].split(",")]
    edges = []
    for line_no, raw in enumerate(lines[2:], start=3):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 6:
            raise FormatError(f"expected 6 fields, found {len(parts)}", line=line_no)
        try:
            edge = Edge(int(parts[0]), int(parts[1]), CopulaFamily.from_token(parts[2]),
                        float(parts[3]), float(parts[4]), float(parts[5]))
        except (ValueError, ConfigError) as exc:
            raise FormatError(str(exc), line=line_no) from exc
        edges.append(edge)
    try:
        return CopulaTree(tuple(names), tuple(edges))
    except ConfigError as exc:
        raise FormatError(str(exc), line=len(lines)) from exc


def sample_tree(tree, m, seed, marginal="normal"):
    """Draw a dataset from a copula tree by root-to-leaf conditional sampling.

    Variable 0 is the root.  Each child is drawn from its edge copula
    conditioned on its parent (every family here is exchangeable, so the
    same conditional form serves either edge orientation).  Uniform scores
    are mapped through the standard normal quantile unless ``marginal`` is
    ``"uniform"``.
    """
    m = int(m)
    if m < 3:
        raise ConfigError("synthesised datasets need at least 3 samples")
    n = tree.n
    rng = np.random.default_rng(seed)
    adjacency = {k: [] for k in range(n)}
    for e in tree.edges:
        adjacency[e.i].append((e.j, e))
        adjacency[e.j].append((e.i, e))
    uniforms = np.empty((m, n))
    draws = rng.random((m, n))
    uniforms[:, 0] = draws[:, 0]
    visited = {0}
    stack = [0]
    while stack:
        node = stack.pop()
        for child, e in sorted(adjacency[node], key=lambda t: t[0]):
            if child in visited:
                continue
            visited.add(child)
            uniforms[:, child] = e.copula.h_inverse(uniforms[:, node], draws[:, child])
            stack.append(child)
    uniforms = np.clip(uniforms, 1e-16, 1.0 - 1e-16)
    values = uniforms if marginal == "uniform" else special.ndtri(uniforms)
    return Dataset(tree.variable_names, values)


def random_tree(n, families, rho_low, rho_high, seed, names=None, negative_family=None):
    """Random ground-truth tree: uniform random labelled tree (Pruefer code).

    Each edge draws a family from ``families`` and |rho| uniformly from
    ``[rho_low, rho_high]``.  When ``negative_family`` is given, edges flip
    to negative dependence with probability 1/2 and use that family.
    """
    rng = np.random.default_rng(seed)
    families = [CopulaFamily.from_token(f) for f in families]
    names = tuple(names or (f"X{k}" for k in range(n)))
    if n == 2:
        pairs = [(0, 1)]
    else:
        code = list(rng.integers(0, n, size=n - 2))
        degree = [1] * n
        for c in code:
            degree[c] += 1
        pairs = []
        for c in code:
            leaf = min(k for k in range(n) if degree[k] == 1)
            pairs.append(tuple(sorted((leaf, int(c)))))
            degree[leaf] -= 1
            degree[c] -= 1
        last = [k for k in range(n) if degree[k] == 1]
        pairs.append((last[0], last[1]))
    edges = []
    for i, j in pairs:
        family = families[int(rng.integers(len(families)))]
        rho = float(rng.uniform(rho_low, rho_high))
        if negative_family is not None and rng.random() < 0.5:
            family, rho = CopulaFamily.from_token(negative_family), -rho
        if not rho_attainable(family, rho):
            raise ConfigError(f"{family.value} cannot attain rho={rho:.3f}")
        edges.append(Edge(i, j, family, theta_from_rho(family, rho), rho, 0.0))
    return CopulaTree(names, tuple(edges))
