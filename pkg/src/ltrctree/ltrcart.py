"""Relative-risk survival tree for LTRC data (LTRCART).

The fit runs in three steps: a Nelson-Aalen baseline cumulative hazard on
all training data, per-record exposures Lambda0(R) - Lambda0(L), and a
Poisson regression tree with the event flag as count and the exposure as
time.  The grown tree is pruned by weakest-link cost complexity and the
subtree is chosen by cross-validated Poisson deviance.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import xlogy

from .data import Dataset
from .errors import NumericalError
from .estimators import CumulativeHazard, SurvivalCurve, nelson_aalen_ltrc
from .tree import Node, SplitRule, Tree


@dataclass(frozen=True)
class CartControls:
    min_split: int = 20
    min_bucket: int = 7
    max_depth: int = 30
    cv_folds: int = 10
    se_rule: float = 0.0
    cp_min: float = 0.001

    def __post_init__(self):
        if self.cv_folds < 2:
            raise ValueError("cv_folds must be >= 2")
        if self.se_rule < 0:
            raise ValueError("se_rule must be >= 0")
        if self.min_bucket < 1 or self.min_split < 2:
            raise ValueError("min_bucket must be >= 1 and min_split >= 2")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.cp_min < 0:
            raise ValueError("cp_min must be >= 0")


@dataclass
class NodeStats:
    events: float
    exposure: float
    theta: float
    deviance: float


@dataclass
class PruneSequence:
    """Nested subtrees indexed by complexity threshold, largest tree first."""

    alphas: np.ndarray
    n_leaves: np.ndarray
    train_deviance: np.ndarray
    cv_risk: np.ndarray | None = None
    cv_se: np.ndarray | None = None
    selected: int | None = None

    def __len__(self):
        return self.alphas.shape[0]

    def to_table(self) -> list[dict]:
        rows = []
        for k in range(len(self)):
            row = {"alpha": float(self.alphas[k]), "n_leaves": int(self.n_leaves[k]),
                   "deviance": float(self.train_deviance[k])}
            if self.cv_risk is not None:
                row["cv_risk"] = float(self.cv_risk[k])
                row["cv_se"] = float(self.cv_se[k])
            row["selected"] = k == self.selected
            rows.append(row)
        return rows


# ------------------------------------------------------------ primitives

def exposures(data: Dataset, lambda0: CumulativeHazard) -> np.ndarray:
    """Baseline cumulative hazard accrued over each record's interval."""
    return np.maximum(lambda0(data.right) - lambda0(data.left), 0.0)


def deviance_contribution(delta, e, theta):
    """Per-record Poisson deviance 2[d log(d/(e theta)) - (d - e theta)].

    Infinite when an event meets zero expected count.
    """
    delta = np.asarray(delta, dtype=float)
    mu = np.asarray(e, dtype=float) * np.asarray(theta, dtype=float)
    with np.errstate(divide="ignore"):
        out = 2.0 * (xlogy(delta, delta) - xlogy(delta, mu) - (delta - mu))
    return out if out.ndim else float(out)


def poisson_deviance(counts, times) -> float:
    """Deviance of a single-rate Poisson model with rate sum(counts)/sum(times)."""
    c = np.asarray(counts, dtype=float)
    t = np.asarray(times, dtype=float)
    rate = c.sum() / t.sum() if t.sum() > 0 else 0.0
    fitted = rate * t
    total = 0.0
    for ci, fi in zip(c, fitted):
        if ci > 0:
            if fi <= 0:
                return math.inf
            total += ci * math.log(ci / fi)
        total -= ci - fi
    return 2.0 * total


def node_stats(delta, e) -> NodeStats:
    D = float(np.sum(delta))
    E = float(np.sum(e))
    theta = D / E if E > 0 else 0.0
    dev = float(np.sum(deviance_contribution(delta, e, theta))) if D > 0 else 2.0 * theta * E
    return NodeStats(D, E, theta, dev)


def _dlogtheta(D, E):
    """D * log(D / E) with 0 log 0 = 0, vectorized."""
    with np.errstate(divide="ignore", invalid="ignore"):
        return xlogy(D, D) - xlogy(D, E)


# ------------------------------------------------------------ growing

def _scan_ordered(xs, ds, es, n, D, E, min_bucket, parent_term):
    """Best cut over a sorted column; returns (gain, cut) or None."""
    brk = np.flatnonzero(xs[1:] > xs[:-1])
    if brk.size == 0:
        return None
    m = brk + 1
    ok = (m >= min_bucket) & (n - m >= min_bucket)
    if not np.any(ok):
        return None
    brk, m = brk[ok], m[ok]
    cD = np.cumsum(ds)[brk]
    cE = np.cumsum(es)[brk]
    gain = 2.0 * (_dlogtheta(cD, cE) + _dlogtheta(D - cD, E - cE)) - parent_term
    k = int(np.argmax(gain))
    return float(gain[k]), 0.5 * (xs[brk[k]] + xs[brk[k] + 1])


def _scan_nominal(x, ds, es, min_bucket, parent_term, D, E):
    levels, inv = np.unique(x, return_inverse=True)
    if levels.size < 2:
        return None
    lD = np.bincount(inv, weights=ds, minlength=levels.size)
    lE = np.bincount(inv, weights=es, minlength=levels.size)
    cnt = np.bincount(inv, minlength=levels.size)
    with np.errstate(divide="ignore", invalid="ignore"):
        rate = np.where(lE > 0, lD / lE, np.where(lD > 0, np.inf, 0.0))
    order = np.argsort(rate, kind="stable")
    cm = np.cumsum(cnt[order])[:-1]
    cD = np.cumsum(lD[order])[:-1]
    cE = np.cumsum(lE[order])[:-1]
    n = x.shape[0]
    ok = (cm >= min_bucket) & (n - cm >= min_bucket)
    if not np.any(ok):
        return None
    gain = 2.0 * (_dlogtheta(cD, cE) + _dlogtheta(D - cD, E - cE)) - parent_term
    gain = np.where(ok, gain, -np.inf)
    k = int(np.argmax(gain))
    left = frozenset(levels[order[: k + 1]].tolist())
    right = frozenset(levels[order[k + 1:]].tolist())
    return float(gain[k]), (left, right)


def _best_rule(X, kinds, delta, e, members, sorted_cols, controls, stats):
    """Largest deviance reduction over all covariates: ``(gain, SplitRule)`` or None."""
    n = members.size
    D, E = stats.events, stats.exposure
    parent_term = 2.0 * _dlogtheta(D, E)
    best = None
    for j, kind in enumerate(kinds):
        if kind == "nominal":
            res = _scan_nominal(X[members, j], delta[members], e[members],
                                controls.min_bucket, parent_term, D, E)
            if res is not None:
                rule = SplitRule(j, None, res[1][0], res[1][1])
        else:
            order = sorted_cols[j]
            res = _scan_ordered(X[order, j], delta[order], e[order], n, D, E,
                                controls.min_bucket, parent_term)
            if res is not None:
                rule = SplitRule(j, res[1])
        if res is not None and (best is None or res[0] > best[0]):
            best = (res[0], rule)
    return best


def root_split(data: Dataset, exposure, controls: CartControls = CartControls()):
    """Best root split ignoring the growth gate: ``(gain, SplitRule)`` or None."""
    kinds = [c.kind for c in data.schema.columns]
    idx = np.arange(len(data))
    delta = data.event.astype(float)
    e = np.asarray(exposure, dtype=float)
    cols = {j: np.argsort(data.X[:, j], kind="stable") for j, k in enumerate(kinds) if k != "nominal"}
    return _best_rule(data.X, kinds, delta, e, idx, cols, controls, node_stats(delta, e))


def _grow(X, kinds, delta, e, idx, controls, gate=None):
    """Grow an unpruned Poisson tree on rows ``idx``."""
    ordered = [j for j, k in enumerate(kinds) if k != "nominal"]
    orders = {j: idx[np.argsort(X[idx, j], kind="stable")] for j in ordered}
    root_stats = node_stats(delta[idx], e[idx])
    min_gain = controls.cp_min * root_stats.deviance if gate is None else gate

    def grow(members, sorted_cols, depth, stats):
        node = Node(0, depth, members, int(stats.events), exposure=stats.exposure,
                    theta=stats.theta, deviance=stats.deviance)
        n = members.size
        if n < controls.min_split or depth >= controls.max_depth or stats.events == 0:
            return node
        best = _best_rule(X, kinds, delta, e, members, sorted_cols, controls, stats)
        if best is None or not best[0] > 0 or best[0] < min_gain:
            return node
        rule = best[1]
        go = rule.goes_left(X[members, rule.var])
        left_m, right_m = members[go], members[~go]
        mask = np.zeros(X.shape[0], dtype=bool)
        mask[left_m] = True
        left_cols = {j: o[mask[o]] for j, o in sorted_cols.items()}
        right_cols = {j: o[~mask[o]] for j, o in sorted_cols.items()}
        node.rule = rule
        node.extra["gain"] = best[0]
        node.left = grow(left_m, left_cols, depth + 1, node_stats(delta[left_m], e[left_m]))
        node.right = grow(right_m, right_cols, depth + 1, node_stats(delta[right_m], e[right_m]))
        return node

    return grow(idx, orders, 0, root_stats)


def grow_poisson_tree(data: Dataset, exposure, controls: CartControls = CartControls()) -> Tree:
    """Greedy deviance-reduction splitting; every node stores its rate statistics.

    Splits must reduce deviance by at least ``cp_min`` times the root deviance.
    """
    exposure = np.asarray(exposure, dtype=float)
    if data.event.sum() < 1:
        raise ValueError("growing needs at least one event")
    kinds = [c.kind for c in data.schema.columns]
    root = _grow(data.X, kinds, data.event.astype(float), exposure, np.arange(len(data)), controls)
    return Tree("ltrcart", data.schema, root, asdict(controls), member_ids=data.ids).renumber()


# ------------------------------------------------------------ pruning

def _weakest_link(root: Node) -> None:
    """Store in ``node.extra['alpha']`` the threshold at which each internal node collapses."""
    internal = [nd for nd in root.walk() if not nd.is_leaf]
    for nd in internal:
        nd.extra.pop("alpha", None)

    def subtree(nd):
        if nd.is_leaf or "alpha" in nd.extra:
            return nd.deviance, 1
        r1, n1 = subtree(nd.left)
        r2, n2 = subtree(nd.right)
        return r1 + r2, n1 + n2

    while True:
        live = [nd for nd in internal if "alpha" not in nd.extra]
        if not live:
            break
        g = {}
        for nd in live:
            r, k = subtree(nd)
            g[id(nd)] = (nd.deviance - r) / (k - 1)
        a = min(g.values())
        tol = 1e-10 * max(abs(a), 1e-300)
        for nd in live:  # pre-order: ancestors first
            if "alpha" in nd.extra:
                continue
            if g[id(nd)] <= a + tol:
                for sub in nd.walk():
                    if not sub.is_leaf and "alpha" not in sub.extra:
                        sub.extra["alpha"] = a


def _collapse_alpha(nd: Node) -> float:
    return -math.inf if nd.is_leaf else nd.extra["alpha"]


def _leaves_at(root: Node, alpha: float):
    if root.is_leaf or _collapse_alpha(root) <= alpha:
        return [root]
    return _leaves_at(root.left, alpha) + _leaves_at(root.right, alpha)


def cost_complexity_sequence(tree: Tree) -> PruneSequence:
    """Weakest-link thresholds alpha_0 = 0 < alpha_1 < ... (last one is the root-only tree)."""
    _weakest_link(tree.root)
    cuts = sorted({nd.extra["alpha"] for nd in tree.root.walk() if not nd.is_leaf})
    alphas = np.array([0.0] + cuts)
    n_leaves, dev = [], []
    for a in alphas:
        lv = _leaves_at(tree.root, a)
        n_leaves.append(len(lv))
        dev.append(sum(nd.deviance for nd in lv))
    return PruneSequence(alphas, np.array(n_leaves), np.array(dev))


def prune(tree: Tree, alpha: float) -> Tree:
    """Copy of ``tree`` with every node whose collapse threshold is <= alpha made terminal."""
    if any("alpha" not in nd.extra for nd in tree.root.walk() if not nd.is_leaf):
        _weakest_link(tree.root)

    def copy(nd):
        out = Node(0, nd.depth, nd.members, nd.events, exposure=nd.exposure, theta=nd.theta,
                   deviance=nd.deviance, extra=dict(nd.extra))
        if not nd.is_leaf and _collapse_alpha(nd) > alpha:
            out.rule = nd.rule
            out.left = copy(nd.left)
            out.right = copy(nd.right)
        return out

    return Tree(tree.algorithm, tree.schema, copy(tree.root), tree.controls, tree.baseline,
                tree.member_ids, tree.prune_table).renumber()


# ------------------------------------------------------------ cross-validation

def stratified_folds(event, k: int, seed) -> np.ndarray:
    """Fold label per record, balanced within each event class."""
    rng = np.random.default_rng(seed)
    event = np.asarray(event)
    folds = np.empty(event.shape[0], dtype=np.int64)
    offset = 0
    for cls in (1, 0):
        idx = np.flatnonzero(event == cls)
        perm = rng.permutation(idx)
        folds[perm] = (np.arange(perm.size) + offset) % k
        offset = (offset + perm.size) % k
    return folds


def _path_matrices(root: Node, X, held):
    """For each held-out row: collapse thresholds, rates and exposures along its root-to-leaf path."""
    rows = []
    for i in held:
        nd, path = root, []
        while True:
            path.append(nd)
            if nd.is_leaf:
                break
            go = nd.rule.goes_left(X[i:i + 1, nd.rule.var])[0]
            nd = nd.left if go else nd.right
        rows.append(path)
    depth = max(len(p) for p in rows)
    A = np.full((len(rows), depth), -np.inf)
    TH = np.zeros((len(rows), depth))
    for r, path in enumerate(rows):
        for c, nd in enumerate(path):
            A[r, c] = _collapse_alpha(nd)
            theta = nd.theta
            # terminals without training exposure or events borrow the ancestor rate
            if (nd.exposure <= 0 or nd.events == 0) and c > 0:
                theta = TH[r, c - 1]
            TH[r, c] = theta
        A[r, len(path) - 1] = -np.inf
    return A, TH


def cv_select_subtree(data: Dataset, exposure, seq: PruneSequence, tree: Tree,
                      controls: CartControls = CartControls(), seed=0) -> Tree:
    """Pick the subtree with smallest cross-validated Poisson deviance (``se_rule`` SEs allowed).

    Folds are stratified by event flag.  Each fold grows its own tree and is
    evaluated at the geometric midpoints of the full-data thresholds.
    """
    exposure = np.asarray(exposure, dtype=float)
    n = len(data)
    k = controls.cv_folds
    if k > n:
        raise ValueError("cv_folds exceeds the number of records")
    kinds = [c.kind for c in data.schema.columns]
    delta = data.event.astype(float)
    a = seq.alphas
    beta = np.empty_like(a)
    beta[:-1] = np.sqrt(a[:-1] * a[1:])
    beta[-1] = np.inf
    folds = stratified_folds(data.event, k, seed)
    loss = np.zeros((n, a.size))
    for f in range(k):
        held = np.flatnonzero(folds == f)
        train = np.flatnonzero(folds != f)
        if held.size == 0:
            continue
        if exposure[train].sum() <= 0 or delta[train].sum() == 0:
            folds = stratified_folds(data.event, k, [*np.atleast_1d(seed).tolist(), f, 1])
            held = np.flatnonzero(folds == f)
            train = np.flatnonzero(folds != f)
            if exposure[train].sum() <= 0 or delta[train].sum() == 0:
                raise NumericalError(f"fold {f} has no training exposure after reshuffle")
        root = _grow(data.X, kinds, delta, exposure, train, controls)
        _weakest_link(root)
        A, TH = _path_matrices(root, data.X, held)
        # first node along the path already collapsed at beta
        hit = A[:, :, None] <= beta[None, None, :]
        pos = np.argmax(hit, axis=1)
        theta = np.take_along_axis(TH, pos, axis=1)
        loss[held] = deviance_contribution(delta[held, None], exposure[held, None], theta)
    risk = loss.sum(axis=0)
    with np.errstate(invalid="ignore"):
        se = np.sqrt(n * loss.var(axis=0))
    finite = np.isfinite(risk)
    if not np.any(finite):
        best = len(a) - 1
    else:
        best = int(np.flatnonzero(risk == risk[finite].min())[-1])
    limit = risk[best] + controls.se_rule * (se[best] if np.isfinite(se[best]) else 0.0)
    chosen = int(np.flatnonzero(risk <= limit)[-1])
    seq.cv_risk, seq.cv_se, seq.selected = risk, se, chosen
    out = prune(tree, a[chosen])
    out.prune_table = seq.to_table()
    return out


# ------------------------------------------------------------ pipeline

def fit_ltrcart(data: Dataset, controls: CartControls = CartControls(), seed=0) -> Tree:
    """Nelson-Aalen baseline, exposures, grow, then prune by cross-validation."""
    if len(data) == 0 or data.event.sum() == 0:
        raise ValueError("fitting needs at least one event")
    lambda0 = nelson_aalen_ltrc(data)
    e = exposures(data, lambda0)
    full = grow_poisson_tree(data, e, controls)
    full.baseline = lambda0
    seq = cost_complexity_sequence(full)
    if len(seq) == 1:
        seq.selected = 0
        full.prune_table = seq.to_table()
        return full
    k = min(controls.cv_folds, len(data))
    ctl = controls if k == controls.cv_folds else CartControls(**{**asdict(controls), "cv_folds": k})
    return cv_select_subtree(data, e, seq, full, ctl, seed)


def predict_ltrcart(tree: Tree, covariates, lambda0: CumulativeHazard | None = None):
    """Return ``(theta, curve)`` with curve S(t) = exp(-theta * Lambda0(t))."""
    lambda0 = tree.baseline if lambda0 is None else lambda0
    theta = tree.route(covariates).theta
    return theta, relative_risk_curve(theta, lambda0)


def relative_risk_curve(theta: float, lambda0: CumulativeHazard) -> SurvivalCurve:
    return SurvivalCurve(lambda0.knots, np.exp(-theta * lambda0.values), 1.0)


def predict_curves(tree: Tree, X, lambda0: CumulativeHazard | None = None) -> list[SurvivalCurve]:
    lambda0 = tree.baseline if lambda0 is None else lambda0
    ids = tree.apply(X)
    cache = {nd.id: relative_risk_curve(nd.theta, lambda0) for nd in tree.leaves()}
    return [cache[i] for i in ids]
