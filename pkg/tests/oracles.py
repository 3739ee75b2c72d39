"""Slow, loop-based reference implementations used only by the tests."""

from __future__ import annotations

import math

import numpy as np

from ltrctree.data import CovariateSchema, Dataset


def xlogx(x):
    return 0.0 if x == 0 else x * math.log(x)


def km_right_censored(time, event):
    """Textbook product-limit estimate: (event times, survival values)."""
    time = list(map(float, time))
    knots, values, s = [], [], 1.0
    for t in sorted({t for t, d in zip(time, event) if d}):
        n = sum(1 for u in time if u >= t)
        d = sum(1 for u, e in zip(time, event) if e and u == t)
        s *= 1.0 - d / n
        knots.append(t)
        values.append(s)
    return np.array(knots), np.array(values)


def risk_rows(left, right, event):
    out = []
    for t in sorted({r for r, d in zip(right, event) if d}):
        n = sum(1 for a, b in zip(left, right) if a < t <= b)
        d = sum(1 for b, e in zip(right, event) if e and b == t)
        out.append((t, d, n))
    return out


def ltrc_scores(left, right, event):
    """Scores from the conditional product over (L, R]; events use the a, b form."""
    rows = risk_rows(left, right, event)
    out = []
    for a_, b_, e in zip(left, right, event):
        prod = 1.0
        for t, d, n in rows:
            if a_ < t < b_:
                prod *= 1.0 - d / n
        if not e:
            for t, d, n in rows:
                if t == b_:
                    prod *= 1.0 - d / n
            out.append(math.log(prod))
            continue
        q = next(d / n for t, d, n in rows if t == b_)
        a, b = prod, prod * (1.0 - q)
        out.append((xlogx(a) - xlogx(b)) / (a - b))
    return np.array(out)


def poisson_node_deviance(counts, times):
    """Poisson deviance of a node with pooled rate sum(c) / sum(t)."""
    lam = sum(counts) / sum(times)
    total = 0.0
    for c, t in zip(counts, times):
        mu = lam * t
        total += (c * math.log(c / mu) if c > 0 else 0.0) - (c - mu)
    return 2.0 * total


def random_rc_sample(rng, n=None, ties=True):
    n = int(rng.integers(1, 51)) if n is None else n
    t = rng.exponential(1.0, n)
    if ties:
        t = np.round(t, 1) + 0.1
    e = (rng.random(n) < 0.7).astype(int)
    return t, e


def random_ltrc_sample(rng, n=None):
    n = int(rng.integers(1, 51)) if n is None else n
    left = np.round(rng.uniform(0, 1, n), 1)
    right = left + np.round(rng.exponential(1.0, n), 1) + 0.1
    event = (rng.random(n) < 0.7).astype(int)
    return left, right, event


def dataset(left, right, event, X=None):
    n = len(left)
    X = np.zeros((n, 1)) if X is None else X
    schema = CovariateSchema.numeric([f"x{j}" for j in range(X.shape[1])])
    return Dataset(schema, left, right, event, X, ids=[f"r{i}" for i in range(n)])


def random_cuts(rng, left, right, max_cuts=3):
    cuts = []
    for a, b in zip(left, right):
        k = int(rng.integers(0, max_cuts + 1))
        c = np.unique(rng.uniform(a, b, k))
        cuts.append([float(x) for x in c if a < x < b])
    return cuts
