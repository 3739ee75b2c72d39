"""Conditional-inference survival tree for LTRC data (LTRCIT).

Each node rescores its own records with LTRC log-rank scores, tests every
covariate for association with the scores under the permutation null, and
stops unless the smallest Bonferroni-adjusted p-value is at most ``alpha``.
The selected covariate is then split at the cut maximizing the standardized
two-sample score statistic.  Trees are not pruned.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import special

from .data import Dataset
from .estimators import SurvivalCurve, km_arrays, logrank_scores_arrays, logrank_scores_ltrc
from .tree import Node, SplitRule, Tree

_LOG2 = math.log(2.0)
MAX_EXHAUSTIVE_LEVELS = 10


@dataclass(frozen=True)
class CtreeControls:
    alpha: float = 0.05
    min_split: int = 20
    min_bucket: int = 7
    max_depth: int = 0

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.min_bucket < 1:
            raise ValueError("min_bucket must be >= 1")
        if self.min_split < 2 * self.min_bucket:
            raise ValueError("min_split must be >= 2 * min_bucket")
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0 (0 = unlimited)")


def node_influence(data_subset: Dataset) -> np.ndarray:
    """Log-rank scores recomputed from the node's own product-limit curve."""
    return logrank_scores_ltrc(data_subset)


# ---------------------------------------------------------------- testing

def _log_norm_two_sided(z: float) -> float:
    return _LOG2 + float(special.log_ndtr(-abs(z)))


def _association(x, u, kind):
    """Return (statistic, log p-value) for covariate ``x`` against scores ``u``."""
    n = u.shape[0]
    if n < 2:
        return 0.0, 0.0
    uc = u - u.mean()
    vu = float(uc @ uc) / n
    if vu <= 0.0:
        return 0.0, 0.0
    if kind == "nominal":
        levels, inv, counts = np.unique(x, return_inverse=True, return_counts=True)
        if levels.size < 2:
            return 0.0, 0.0
        sums = np.bincount(inv, weights=uc, minlength=levels.size)
        stat = float(np.sum(sums * sums / counts)) / (vu * n / (n - 1))
        df = levels.size - 1
        return stat, float(np.log(special.chdtrc(df, stat))) if stat < 1e4 else _chi2_logsf(stat, df)
    g = x - x.mean()
    sgg = float(g @ g)
    if sgg <= 0.0:
        return 0.0, 0.0
    z = float(g @ uc) / math.sqrt(vu * sgg * n / (n - 1))
    return abs(z), _log_norm_two_sided(z)


def _chi2_logsf(stat, df):
    from scipy.stats import chi2

    return float(chi2.logsf(stat, df))


def association_test(x, u, kind: str = "numeric") -> tuple[float, float]:
    """Permutation-moment test of covariate ``x`` against scores ``u``.

    Ordered covariates (numeric, ordinal level index) use the standardized
    linear statistic sum(x_i u_i) and a two-sided normal p-value; the returned
    statistic is |z|.  Nominal covariates use the quadratic form of the
    per-level score sums against their permutation covariance, referred to a
    chi-square with (observed levels - 1) degrees of freedom.  Degenerate
    variance gives p = 1.
    """
    stat, logp = _association(np.asarray(x, dtype=float), np.asarray(u, dtype=float), kind)
    return stat, math.exp(logp)


def _select(X, u, kinds, alpha):
    m = len(kinds)
    best_j, best_logp, best_stat = None, math.inf, 0.0
    for j, kind in enumerate(kinds):
        stat, logp = _association(X[:, j], u, kind)
        if logp < best_logp:
            best_j, best_logp, best_stat = j, logp, stat
    if best_j is None:
        return None
    log_adj = min(0.0, best_logp + math.log(m))
    if log_adj > math.log(alpha):
        return None
    return best_j, math.exp(log_adj), best_stat


def select_split_variable(data: Dataset, controls: CtreeControls = CtreeControls()):
    """Return ``(covariate index, adjusted p)`` or None when the node should stop."""
    if len(data) < controls.min_split or data.event.sum() == 0:
        return None
    u = logrank_scores_ltrc(data)
    res = _select(data.X, u, [c.kind for c in data.schema.columns], controls.alpha)
    return None if res is None else (res[0], res[1])


def association_logp(data: Dataset) -> np.ndarray:
    """Unadjusted log p-value of every covariate against the data's log-rank scores."""
    u = logrank_scores_ltrc(data)
    return np.array([_association(data.X[:, j], u, c.kind)[1]
                     for j, c in enumerate(data.schema.columns)])


# ---------------------------------------------------------------- splitting

def _two_sample_z(left_sums, m, n, vu):
    return np.abs(left_sums) / np.sqrt(vu * m * (n - m) / (n - 1))


def _best_ordered_cut(x, uc, vu, min_bucket):
    n = x.shape[0]
    order = np.argsort(x, kind="stable")
    xs = x[order]
    cs = np.cumsum(uc[order])
    # candidate positions: last index of each run of equal values
    ends = np.flatnonzero(np.diff(xs) > 0)
    m = ends + 1
    ok = (m >= min_bucket) & (n - m >= min_bucket)
    if not np.any(ok):
        return None
    ends, m = ends[ok], m[ok]
    z = _two_sample_z(cs[ends], m, n, vu)
    k = int(np.argmax(z))
    return 0.5 * (xs[ends[k]] + xs[ends[k] + 1]), float(z[k])


def _best_subset(x, uc, vu, min_bucket):
    n = x.shape[0]
    levels, inv, counts = np.unique(x, return_inverse=True, return_counts=True)
    k = levels.size
    if k < 2:
        return None
    sums = np.bincount(inv, weights=uc, minlength=k)
    if k <= MAX_EXHAUSTIVE_LEVELS:
        best = None
        for mask in range(1, 2 ** (k - 1)):
            sel = np.array([(mask >> b) & 1 for b in range(k)], dtype=bool)
            m = int(counts[sel].sum())
            if m < min_bucket or n - m < min_bucket:
                continue
            z = float(_two_sample_z(sums[sel].sum(), m, n, vu))
            if best is None or z > best[1]:
                best = (sel, z)
        if best is None:
            return None
        sel, z = best
    else:
        order = np.argsort(sums / counts, kind="stable")
        cm = np.cumsum(counts[order])[:-1]
        cs = np.cumsum(sums[order])[:-1]
        ok = (cm >= min_bucket) & (n - cm >= min_bucket)
        if not np.any(ok):
            return None
        z = np.where(ok, _two_sample_z(cs, cm, n, vu), -np.inf)
        cut = int(np.argmax(z))
        sel = np.zeros(k, dtype=bool)
        sel[order[: cut + 1]] = True
        z = float(z[cut])
    return frozenset(levels[sel].tolist()), frozenset(levels[~sel].tolist()), z


def _best_split(x, u, kind, var, min_bucket):
    uc = u - u.mean()
    vu = float(uc @ uc) / u.shape[0]
    if vu <= 0.0:
        return None
    if kind == "nominal":
        res = _best_subset(x, uc, vu, min_bucket)
        if res is None:
            return None
        return SplitRule(var, None, res[0], res[1]), res[2]
    res = _best_ordered_cut(x, uc, vu, min_bucket)
    if res is None:
        return None
    return SplitRule(var, float(res[0])), res[1]


def best_binary_split(data: Dataset, covariate: int,
                      controls: CtreeControls = CtreeControls()) -> SplitRule | None:
    """Cut of ``covariate`` maximizing the standardized two-sample score statistic.

    Ordered covariates are cut at midpoints between consecutive distinct
    values (ties go to the smaller cut); nominal covariates try every proper
    bipartition of the observed levels when there are at most ten, otherwise
    levels are ordered by mean score and scanned.  Returns None when no
    candidate leaves ``min_bucket`` records on both sides.
    """
    u = logrank_scores_ltrc(data)
    kind = data.schema.columns[covariate].kind
    res = _best_split(data.X[:, covariate], u, kind, covariate, controls.min_bucket)
    return None if res is None else res[0]


# ---------------------------------------------------------------- fitting

def fit_ltrcit(data: Dataset, controls: CtreeControls = CtreeControls()) -> Tree:
    """Grow a conditional-inference tree; leaves carry product-limit curves."""
    if len(data) == 0 or data.event.sum() == 0:
        raise ValueError("fitting needs at least one event")
    kinds = [c.kind for c in data.schema.columns]
    L, R, E, X = data.left, data.right, data.event, data.X

    def grow(idx, depth):
        node = Node(0, depth, idx, int(E[idx].sum()))
        split = None
        if (idx.size >= controls.min_split and node.events > 0
                and not (controls.max_depth and depth >= controls.max_depth)):
            u = logrank_scores_arrays(L[idx], R[idx], E[idx])
            sel = _select(X[idx], u, kinds, controls.alpha)
            if sel is not None:
                j, p_adj, stat = sel
                res = _best_split(X[idx, j], u, kinds[j], j, controls.min_bucket)
                if res is not None:
                    split = res[0]
                    node.p_value, node.statistic = p_adj, stat
        if split is None:
            node.curve = km_arrays(L[idx], R[idx], E[idx])
            return node
        go = split.goes_left(X[idx, split.var])
        node.rule = split
        node.left = grow(idx[go], depth + 1)
        node.right = grow(idx[~go], depth + 1)
        return node

    root = grow(np.arange(len(data)), 0)
    return Tree("ltrcit", data.schema, root, asdict(controls), member_ids=data.ids).renumber()


def predict_ltrcit(tree: Tree, covariates) -> SurvivalCurve:
    """Product-limit curve of the terminal node reached by ``covariates``."""
    return tree.route(covariates).curve


def predict_curves(tree: Tree, X) -> list[SurvivalCurve]:
    ids = tree.apply(X)
    by_id = {nd.id: nd.curve for nd in tree.leaves()}
    return [by_id[i] for i in ids]
