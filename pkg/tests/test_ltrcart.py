from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ltrctree.data import Covariate, CovariateSchema, Dataset, parse_ltrc_csv, split_dataset
from ltrctree.estimators import CumulativeHazard, nelson_aalen_ltrc
from ltrctree.evaluation import structure_recovered
from ltrctree.ltrcart import (CartControls, cost_complexity_sequence, cv_select_subtree,
                              deviance_contribution, exposures, fit_ltrcart, grow_poisson_tree,
                              node_stats, poisson_deviance, predict_curves, predict_ltrcart,
                              prune, relative_risk_curve, root_split, stratified_folds)
from ltrctree.simulation import ScenarioSpec, gen_tree_ltrc, trial_rng

from oracles import dataset, poisson_node_deviance, random_cuts, random_ltrc_sample


def test_controls_validation():
    for bad in (dict(cv_folds=1), dict(se_rule=-1), dict(min_bucket=0), dict(max_depth=0),
                dict(cp_min=-0.1)):
        with pytest.raises(ValueError):
            CartControls(**bad)


def test_exposure_examples():
    toy = dataset([0.0, 1.0, 1.0], [2.0, 3.0, 4.0], [1, 0, 1])
    e = exposures(toy, nelson_aalen_ltrc(toy))
    assert e[1] == pytest.approx(1 / 3, abs=1e-15)
    flat = CumulativeHazard([5.0], [1.0])
    assert exposures(dataset([0.0], [4.0], [0]), flat).tolist() == [0.0]


def test_deviance_examples():
    assert deviance_contribution(1, 1.0, 1.0) == 0.0
    assert deviance_contribution(0, 0.5, 2.0) == pytest.approx(2.0, abs=1e-15)
    assert deviance_contribution(1, 0.0, 3.0) == math.inf


def test_node_deviance_matches_poisson_oracle():
    rng = np.random.default_rng(4)
    for _ in range(500):
        n = int(rng.integers(1, 40))
        d = (rng.random(n) < 0.6).astype(float)
        if d.sum() == 0:
            d[0] = 1.0
        e = rng.exponential(1.0, n)
        st_ = node_stats(d, e)
        assert st_.events == pytest.approx(st_.theta * st_.exposure, rel=1e-15)
        ref = poisson_node_deviance(d, e)
        assert abs(st_.deviance - ref) <= 1e-12 * max(1.0, abs(ref))
        assert abs(poisson_deviance(d, e) - ref) <= 1e-12 * max(1.0, abs(ref))


def _two_group(n=200, seed=0):
    rng = np.random.default_rng(seed)
    schema = CovariateSchema([Covariate("g", "numeric"), Covariate("noise", "numeric"),
                              Covariate("lvl", "nominal", ("a", "b", "c"))])
    g = rng.uniform(0, 1, n)
    X = np.column_stack([g, rng.uniform(0, 1, n), rng.integers(0, 3, n)])
    T = rng.exponential(1.0, n) / np.where(g > 0.4, 4.0, 1.0)
    C = rng.exponential(3.0, n)
    return Dataset(schema, np.zeros(n), np.minimum(T, C), (T <= C).astype(int), X)


def _brute_root(ds, e, min_bucket):
    d = ds.event.astype(float)
    parent = node_stats(d, e).deviance
    best = (-math.inf, None, None)
    for j, col in enumerate(ds.schema.columns):
        x = ds.X[:, j]
        vals = np.unique(x)
        if col.kind == "nominal":
            cands = [x == v for v in vals] + [x != v for v in vals]
        else:
            cands = [x <= 0.5 * (a + b) for a, b in zip(vals, vals[1:])]
        for left in cands:
            if left.sum() < min_bucket or (~left).sum() < min_bucket:
                continue
            gain = parent - node_stats(d[left], e[left]).deviance - node_stats(d[~left], e[~left]).deviance
            if gain > best[0]:
                best = (gain, j, left)
    return best


def test_root_split_matches_exhaustive_scan():
    ds = _two_group()
    e = exposures(ds, nelson_aalen_ltrc(ds))
    gain, rule = root_split(ds, e)
    ref_gain, ref_var, ref_left = _brute_root(ds, e, 7)
    assert rule.var == ref_var == 0
    assert gain == pytest.approx(ref_gain, rel=1e-9)
    assert np.array_equal(rule.goes_left(ds.X[:, 0]), ref_left)
    assert abs(rule.cut - 0.4) < 0.1


def test_nominal_split_by_rate_order():
    rng = np.random.default_rng(2)
    n = 300
    lvl = rng.integers(0, 3, n).astype(float)
    T = rng.exponential(1.0, n) / np.where(lvl == 1, 5.0, 1.0)
    schema = CovariateSchema([Covariate("lvl", "nominal", ("a", "b", "c"))])
    ds = Dataset(schema, np.zeros(n), T, np.ones(n, dtype=int), lvl[:, None])
    e = exposures(ds, nelson_aalen_ltrc(ds))
    gain, rule = root_split(ds, e)
    ref_gain, _, ref_left = _brute_root(ds, e, 7)
    assert gain == pytest.approx(ref_gain, rel=1e-9)
    assert {1.0} in (set(rule.left_levels), set(rule.right_levels))


def test_homogeneous_root_only():
    ds = dataset(np.zeros(40), np.ones(40), np.ones(40, dtype=int), np.arange(40.0)[:, None])
    tree = grow_poisson_tree(ds, np.ones(40))
    assert tree.n_leaves == 1
    seq = cost_complexity_sequence(tree)
    assert len(seq) == 1


def test_single_split_sequence():
    ds = _two_group(200, 1)
    e = exposures(ds, nelson_aalen_ltrc(ds))
    tree = grow_poisson_tree(ds, e, CartControls(max_depth=1))
    assert tree.n_leaves == 2
    seq = cost_complexity_sequence(tree)
    root = tree.root
    reduction = root.deviance - root.left.deviance - root.right.deviance
    assert len(seq) == 2 and seq.alphas[1] == pytest.approx(reduction, rel=1e-12)
    assert root.extra["gain"] == pytest.approx(reduction, rel=1e-9)


def test_grown_tree_invariants_and_nested_pruning():
    ds = _two_group(400, 3)
    e = exposures(ds, nelson_aalen_ltrc(ds))
    c = CartControls(cp_min=0.0)
    tree = grow_poisson_tree(ds, e, c)
    for nd in tree.nodes():
        assert nd.events == pytest.approx(nd.theta * nd.exposure, rel=1e-12)
        if nd.is_leaf:
            assert nd.n >= c.min_bucket
        else:
            assert nd.deviance >= nd.left.deviance + nd.right.deviance - 1e-9
            both = np.concatenate([nd.left.members, nd.right.members])
            assert np.array_equal(np.sort(both), np.sort(nd.members))
    seq = cost_complexity_sequence(tree)
    assert np.all(np.diff(seq.alphas) > 0)
    assert np.all(np.diff(seq.n_leaves) < 0)
    assert np.all(np.diff(seq.train_deviance) >= -1e-9)
    prev = None
    for a in seq.alphas:
        sub = prune(tree, a)
        parts = {frozenset(nd.members.tolist()) for nd in sub.leaves()}
        if prev is not None:  # every leaf of the larger tree sits inside one leaf here
            assert all(any(p <= q for q in parts) for p in prev)
        prev = parts


def test_stratified_folds():
    ev = np.array([1] * 23 + [0] * 17)
    folds = stratified_folds(ev, 10, 5)
    assert all(ev[folds == f].sum() >= 2 for f in range(10))
    assert np.array_equal(folds, stratified_folds(ev, 10, 5))
    assert np.bincount(folds).max() - np.bincount(folds).min() <= 1


def test_leave_one_out():
    ds = _two_group(15, 4)
    e = exposures(ds, nelson_aalen_ltrc(ds))
    c = CartControls(min_split=4, min_bucket=2, cv_folds=15)
    tree = grow_poisson_tree(ds, e, c)
    seq = cost_complexity_sequence(tree)
    out = cv_select_subtree(ds, e, seq, tree, c, seed=1)
    assert 0 <= seq.selected < len(seq)
    assert out.n_leaves == seq.n_leaves[seq.selected]
    assert np.all(np.isfinite(seq.cv_risk))


def test_fit_deterministic_and_seeded():
    ds = _two_group(300, 6)
    a, b = fit_ltrcart(ds, seed=3), fit_ltrcart(ds, seed=3)
    assert a.to_json() == b.to_json()
    assert a.prune_table is not None and any(r["selected"] for r in a.prune_table)


def test_pure_noise_mostly_root_only():
    spec = ScenarioSpec("null", "exponential", n=100, truncation=2.0, censoring=0.2)
    roots = 0
    for i in range(30):
        ds = gen_tree_ltrc(spec, trial_rng(77, i), 0.05).dataset
        roots += fit_ltrcart(ds, seed=i).n_leaves == 1
    assert roots >= 20


@pytest.mark.slow
def test_zero_se_at_least_as_good_as_one_se():
    # small samples are where the 1-SE rule over-prunes
    spec = ScenarioSpec("tree", "weibull_i", n=100, truncation=2.0, censoring=0.2)
    from ltrctree.simulation.generators import calibrate_censoring, tree_truth

    rate = calibrate_censoring(spec, seed=1)
    zero = one = 0
    for i in range(200):
        ds = gen_tree_ltrc(spec, trial_rng(1, i), rate).dataset
        zero += structure_recovered(fit_ltrcart(ds, CartControls(), seed=i), tree_truth())
        one += structure_recovered(fit_ltrcart(ds, CartControls(se_rule=1.0), seed=i), tree_truth())
    assert zero >= one


def test_predict_examples():
    lam = CumulativeHazard([1.0, 2.0], [0.5, 1.5])
    assert relative_risk_curve(0.0, lam)([0.0, 1.0, 5.0]).tolist() == [1.0, 1.0, 1.0]
    assert np.allclose(relative_risk_curve(1.0, lam).values, np.exp(-lam.values), rtol=0, atol=0)
    lo, hi = relative_risk_curve(0.5, lam), relative_risk_curve(2.0, lam)
    assert np.all(hi.values < lo.values)
    ds = _two_group(300, 8)
    tree = fit_ltrcart(ds, seed=0)
    theta, curve = predict_ltrcart(tree, ds.X[0])
    assert theta == tree.route(ds.X[0]).theta
    assert curve == predict_curves(tree, ds.X[:1])[0]


def test_flc_top_decile(flc_files):
    data_path, schema_path = flc_files
    ds = parse_ltrc_csv(data_path, CovariateSchema.from_toml(schema_path))
    tree = fit_ltrcart(ds, seed=0)
    rule = tree.root.rule
    assert ds.schema.columns[rule.var].name == "flc" and rule.cut == 8.5
    assert tree.root.right.theta > tree.root.left.theta


def test_right_censored_exposure_is_cumhaz():
    rng = np.random.default_rng(1)
    t = rng.exponential(1.0, 50)
    ds = dataset(np.zeros(50), t, (rng.random(50) < 0.7).astype(int))
    lam = nelson_aalen_ltrc(ds)
    assert np.array_equal(exposures(ds, lam), lam(t))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_exposure_and_likelihood_additivity(seed):
    rng = np.random.default_rng(seed)
    L, R, E = random_ltrc_sample(rng)
    ds = dataset(L, R, E)
    cuts = random_cuts(rng, L, R)
    split = split_dataset(ds, cuts)
    lam = nelson_aalen_ltrc(ds)
    owner = np.repeat(np.arange(len(ds)), [len(c) + 1 for c in cuts])
    e_whole = exposures(ds, lam)
    e_parts = exposures(split, nelson_aalen_ltrc(split))
    assert np.max(np.abs(np.bincount(owner, e_parts, len(ds)) - e_whole)) < 1e-10
    theta = float(rng.uniform(0.2, 3.0))
    # Poisson log-likelihood kernel d log(theta) - theta e decomposes over pieces
    ll_whole = E * math.log(theta) - theta * e_whole
    ll_parts = np.bincount(owner, split.event * math.log(theta) - theta * e_parts, len(ds))
    assert np.max(np.abs(ll_whole - ll_parts)) < 1e-10
