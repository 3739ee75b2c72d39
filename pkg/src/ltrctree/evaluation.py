"""Prediction scoring and tree-structure comparison.

Brier scores use inverse-probability-of-censoring weights from the
product-limit curve of the censoring times.  Because every ingredient is a
right-continuous step function, the integrated score is computed exactly on
the merged knot grid.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .estimators import StepFunction, SurvivalCurve
from .tree import Tree


@dataclass
class PredictionSet:
    """Predicted curves paired with observed ``(time, event)`` per test subject."""

    curves: list
    time: np.ndarray
    event: np.ndarray

    def __post_init__(self):
        self.time = np.asarray(self.time, dtype=float)
        self.event = np.asarray(self.event, dtype=np.int64)
        if len(self.curves) != self.time.shape[0] or self.event.shape != self.time.shape:
            raise ValueError("curves, time and event must have equal length")
        if not np.all(np.isfinite(self.time)):
            raise ValueError("observed times must be finite")
        for c in self.curves:
            if not isinstance(c, StepFunction):
                raise TypeError("predictions must be SurvivalCurve objects")

    def __len__(self):
        return self.time.shape[0]


def censoring_km(time, event) -> SurvivalCurve:
    """Product-limit curve of the censoring distribution (censorings counted as events).

    The risk set at ``t`` is every subject with observed time >= t.
    """
    time = np.asarray(time, dtype=float)
    event = np.asarray(event)
    if time.size == 0:
        raise ValueError("empty test set")
    cens, d = np.unique(time[event == 0], return_counts=True)
    n = time.size - np.searchsorted(np.sort(time), cens, side="left")
    return SurvivalCurve(cens, np.cumprod(1.0 - d / n), 1.0)


def _curve_matrix(curves, grid):
    """Evaluate each curve at ``grid``, sharing work between identical curve objects."""
    out = np.empty((len(curves), grid.size))
    seen: dict[int, np.ndarray] = {}
    for i, c in enumerate(curves):
        row = seen.get(id(c))
        if row is None:
            row = np.atleast_1d(c(grid))
            seen[id(c)] = row
        out[i] = row
    return out


def _weights(preds: PredictionSet, g: StepFunction, grid):
    """IPCW pieces: G(Y-) per subject and G(t) on the grid."""
    return np.atleast_1d(g.left_limit(preds.time)), np.atleast_1d(g(grid))


def _brier_grid(preds: PredictionSet, g: StepFunction, grid):
    S = _curve_matrix(preds.curves, grid)
    gy, gt = _weights(preds, g, grid)
    Y = preds.time[:, None]
    died = (Y <= grid[None, :]) & (preds.event[:, None] == 1)
    alive = Y > grid[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(died, S**2 / gy[:, None], 0.0) + np.where(alive, (1.0 - S) ** 2 / gt[None, :], 0.0)
    bad = (died & (gy[:, None] <= 0)) | (alive & (gt[None, :] <= 0))
    term = np.where(bad, 0.0, term)
    return term.sum(axis=0) / preds.time.shape[0], bad.any(axis=1)


def brier_at_t(t: float, preds: PredictionSet, g: StepFunction | None = None) -> float:
    """Weighted Brier score at time ``t``.

    Records whose required weight is zero contribute nothing and are counted
    in a warning.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    if g is None:
        g = censoring_km(preds.time, preds.event)
    bs, bad = _brier_grid(preds, g, np.array([float(t)]))
    if bad.any():
        warnings.warn(f"{int(bad.sum())} record(s) excluded: zero censoring weight", RuntimeWarning)
    return float(bs[0])


def ibs(preds: PredictionSet, g: StepFunction | None = None) -> float:
    """Integrated Brier score over [0, max observed time], divided by max observed time."""
    tmax = float(preds.time.max())
    if tmax <= 0:
        raise ValueError("max observed time must be positive")
    if g is None:
        g = censoring_km(preds.time, preds.event)
    pts = [np.array([0.0]), preds.time, g.knots]
    pts += [c.knots for c in {id(c): c for c in preds.curves}.values()]
    grid = np.unique(np.concatenate(pts))
    grid = grid[(grid >= 0) & (grid <= tmax)]
    bs, bad = _brier_grid(preds, g, grid[:-1])
    if bad.any():
        warnings.warn(f"{int(bad.sum())} record(s) excluded: zero censoring weight", RuntimeWarning)
    return float(np.dot(bs, np.diff(grid)) / tmax)


# ---------------------------------------------------------------- structure

@dataclass
class TruthPartition:
    """Target partition of covariate space.

    ``support`` maps a covariate name to either a sorted list of its possible
    (encoded) values or a ``(low, high)`` interval for continuous variables.
    Each leaf maps covariate names to a set of allowed values (discrete) or a
    ``(low, high]`` interval; unmentioned covariates are unrestricted.
    Continuous cut points match when within ``tol`` times the support width.
    """

    support: dict
    leaves: list
    tol: float = 0.1

    def discrete(self, name) -> bool:
        return not isinstance(self.support[name], tuple)


def _full(truth, name):
    s = truth.support[name]
    return frozenset(float(x) for x in s) if truth.discrete(name) else (float(s[0]), float(s[1]))


def _leaf_boxes(tree: Tree, truth: TruthPartition):
    names = tree.schema.names
    boxes = []

    def rec(nd, box):
        if nd.is_leaf:
            boxes.append(box)
            return
        name = names[nd.rule.var]
        if name not in truth.support:
            # split on a variable outside the truth: always finer than the target
            boxes.append(None)
            boxes.append(None)
            return
        cur = box[name]
        for side in ("left", "right"):
            new = dict(box)
            if truth.discrete(name) and nd.rule.nominal:
                # levels unseen at fitting time land on neither side
                levels = nd.rule.left_levels if side == "left" else nd.rule.right_levels
                new[name] = frozenset(v for v in cur if v in levels)
            elif truth.discrete(name):
                keep = [v for v in cur if (v <= nd.rule.cut) == (side == "left")]
                new[name] = frozenset(keep)
            else:
                lo, hi = cur
                c = nd.rule.cut
                new[name] = (lo, min(hi, c)) if side == "left" else (max(lo, c), hi)
            rec(nd.left if side == "left" else nd.right, new)

    rec(tree.root, {name: _full(truth, name) for name in truth.support})
    return boxes


def _empty(box):
    for v in box.values():
        if isinstance(v, frozenset):
            if not v:
                return True
        elif v[0] >= v[1]:
            return True
    return False


def _same(box, target, truth):
    for name, v in box.items():
        want = target.get(name, _full(truth, name))
        if truth.discrete(name):
            if v != frozenset(float(x) for x in want):
                return False
        else:
            lo, hi = truth.support[name]
            tol = truth.tol * (hi - lo)
            w = (max(lo, want[0]), min(hi, want[1]))
            if abs(v[0] - w[0]) > tol or abs(v[1] - w[1]) > tol:
                return False
    return True


def structure_recovered(fitted: Tree, truth: TruthPartition) -> bool:
    """True iff the fitted tree's terminal regions coincide with the truth leaves.

    Split order does not matter; empty regions are ignored.
    """
    boxes = _leaf_boxes(fitted, truth)
    if any(b is None for b in boxes):
        return False
    boxes = [b for b in boxes if not _empty(b)]
    if len(boxes) != len(truth.leaves):
        return False
    used = set()
    for b in boxes:
        hits = [k for k, t in enumerate(truth.leaves) if k not in used and _same(b, t, truth)]
        if not hits:
            return False
        used.add(hits[0])
    return True


# ---------------------------------------------------------------- testing

def wilcoxon_signed_rank(a, b) -> float:
    """Two-sided signed-rank p-value for paired samples (normal approximation).

    Zero differences are dropped, tied magnitudes get mid-ranks and the
    variance is tie-corrected.  All-zero differences give p = 1.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("paired samples must have equal length")
    if a.size < 6:
        raise ValueError("need at least 6 pairs")
    d = a - b
    d = d[d != 0]
    n = d.size
    if n == 0:
        return 1.0
    mag = np.abs(d)
    order = np.argsort(mag, kind="stable")
    ranks = np.empty(n)
    sorted_mag = mag[order]
    _, start, counts = np.unique(sorted_mag, return_index=True, return_counts=True)
    mid = start + (counts + 1) / 2.0
    ranks[order] = np.repeat(mid, counts)
    w_plus = float(ranks[d > 0].sum())
    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(counts**3 - counts)) / 48.0
    if var <= 0:
        return 1.0
    z = (w_plus - mean) / math.sqrt(var)
    return float(min(1.0, 2.0 * ndtr(-abs(z))))
