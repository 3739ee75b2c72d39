from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import integrate, stats

from ltrctree.simulation import (Bathtub, Exponential, Gompertz, LogNormal, ScenarioSpec,
                                 TREE_FAMILIES, TV_PARAMS, Weibull, calibrate_censoring,
                                 gen_ph_data, gen_tree_ltrc, gen_tv_data, gen_tv_test_set,
                                 load_grid, piecewise_ph_invert, run_ibs_experiment,
                                 run_null_selection_experiment, run_recovery_experiment,
                                 sample_survival, substream, trial_rng, tv_cumhaz)
from ltrctree.simulation.experiments import bundled_grid, trial_rows
from ltrctree.simulation.generators import _ltrc, TREE_SCHEMA, ph_family
from ltrctree.simulation.rng import derived_seed

ALL_FAMILIES = [f for fams in TREE_FAMILIES.values() for f in fams] + [Gompertz(0.2, 0.1)]


def test_exponential_closed_inverse():
    assert Exponential(0.1).inv_cumhaz(1.0) == pytest.approx(10.0, rel=1e-15)


@pytest.mark.parametrize("fam", ALL_FAMILIES, ids=repr)
def test_inverse_plug_back(fam):
    rng = substream(1, 9)
    u = rng.random(10_000)
    t = fam.inv_cumhaz(-np.log(u))
    assert np.max(np.abs(fam.survival(t) - u)) < 1e-9


@pytest.mark.parametrize("fam", ALL_FAMILIES, ids=repr)
def test_hazard_consistent_with_cumhaz(fam):
    for t in (0.3, 1.0, 2.5):
        num, _ = integrate.quad(lambda s: float(fam.hazard(s)), 1e-12, t)
        assert num == pytest.approx(float(fam.cumhaz(t)), rel=1e-6, abs=1e-9)


@pytest.mark.parametrize("fam", [Weibull(3.0, 6.2), Bathtub(0.01, 1.0, 5.0), LogNormal(1.3, 0.3)],
                         ids=repr)
def test_ks_distance(fam):
    t = sample_survival(fam, trial_rng(5, 0), 100_000)
    res = stats.kstest(t, lambda x: 1.0 - fam.survival(x))
    assert res.statistic < 0.01


def test_parameter_validation():
    with pytest.raises(ValueError):
        Exponential(0.0)
    with pytest.raises(ValueError):
        Weibull(-1.0, 1.0)
    with pytest.raises(ValueError):
        Bathtub(0.0, 1.0, 5.0)
    with pytest.raises(ValueError):
        ScenarioSpec("tree", "gompertz")
    with pytest.raises(ValueError):
        ScenarioSpec("tv_type2", "weibull_i")


def test_rng_streams():
    a = substream(3, 0, 1).random(5)
    assert np.array_equal(a, substream(3, 0, 1).random(5))
    assert not np.array_equal(a, substream(3, 0, 2).random(5))
    assert not np.array_equal(trial_rng(3, 0).random(5), trial_rng(4, 0).random(5))
    assert derived_seed(3, 1, 2) == derived_seed(3, 1, 2)


# ---------------------------------------------------------------- static designs

def test_tree_generator_basic():
    spec = ScenarioSpec("tree", "exponential", n=500, truncation=2.0, censoring=0.2)
    sim = gen_tree_ltrc(spec, trial_rng(1, 0), 0.05)
    ds = sim.dataset
    assert len(ds) == 500 and np.all(ds.left < ds.right)
    assert np.all(ds.left <= 2.0)
    assert sim.labels.shape == (500,)
    again = gen_tree_ltrc(spec, trial_rng(1, 0), 0.05).dataset
    assert np.array_equal(again.right, ds.right) and np.array_equal(again.X, ds.X)
    no_trunc = gen_tree_ltrc(ScenarioSpec("tree", "exponential", n=50, truncation=0.0),
                             trial_rng(1, 1), 0.05).dataset
    assert np.all(no_trunc.left == 0.0)


def test_rejection_and_censoring_relations():
    spec = ScenarioSpec("tree", "lognormal", n=2000, truncation=3.0)
    ds, _, T = _ltrc(spec, trial_rng(2, 0), 0.1, TREE_SCHEMA)
    assert np.all(T >= ds.left)
    ev = ds.event == 1
    assert np.array_equal(ds.right[ev], T[ev])
    assert np.all(ds.right[~ev] < T[~ev])


@pytest.mark.parametrize("family,target", [("weibull_i", 0.2), ("weibull_i", 0.5),
                                           ("bathtub", 0.2), ("exponential", 0.5)])
def test_calibration_holds_on_fresh_seed(family, target):
    spec = ScenarioSpec("tree", family, n=10_000, truncation=2.0, censoring=target)
    rate = calibrate_censoring(spec, seed=11)
    ds = gen_tree_ltrc(spec, trial_rng(99, 0), rate).dataset
    assert abs((1 - ds.event.mean()) - target) < 0.02


def test_calibration_edges_and_monotone():
    spec = ScenarioSpec("tree", "weibull_i", censoring=0.0)
    assert calibrate_censoring(spec) == 0.0
    lo = calibrate_censoring(spec, target=0.2, seed=1)
    hi = calibrate_censoring(spec, target=0.5, seed=1)
    assert hi > lo
    with pytest.raises(ValueError):
        calibrate_censoring(spec, target=1.5)


def test_tv_calibration():
    spec = ScenarioSpec("tv_type2", "gompertz", n=10_000, truncation=0.0, censoring=0.5)
    rate = calibrate_censoring(spec, seed=3)
    sim = gen_tv_data(spec, rng=trial_rng(8, 0), censor_rate=rate)
    assert abs((1 - sim.extra["subject_event"].mean()) - 0.5) < 0.02


def test_ph_designs():
    assert ph_family("exponential", 0.0) == Exponential(1.0)
    assert ph_family("weibull_i", 0.3) == Weibull(2.0, 10.0 * math.exp(0.3))
    spec = ScenarioSpec("linear", "exponential", n=200, truncation=2.0, censoring=0.2)
    sim = gen_ph_data(spec, trial_rng(0, 0), 0.1)
    assert len(sim.dataset) == 200 and len(sim.extra["test"]) == 200
    assert sim.extra["test"].event.all() and np.all(sim.extra["test"].left == 0)
    # location -(x1 + x2) at (1, 1) versus (0, 0): log hazard ratio 2
    rng = trial_rng(0, 1)
    hi = sample_survival(ph_family("exponential", -2.0), rng, 100_000)
    lo = sample_survival(ph_family("exponential", 0.0), rng, 100_000)
    assert abs(math.log(hi.mean() / lo.mean()) - 2.0) < 0.02


# ---------------------------------------------------------------- time-varying

def test_piecewise_single_segment():
    u = np.array([0.3, 0.7])
    lin = np.array([0.5, -0.2])
    T = piecewise_ph_invert(Exponential(0.1), lin, np.full((2, 1), np.inf), np.zeros((2, 2)), u, 1.4)
    assert np.allclose(T, -np.log(u) / (0.1 * np.exp(lin)), rtol=1e-14)


def test_type1_early_failure_independent_of_switch():
    u = np.full(3, 0.999)
    cuts = np.array([[2.0], [4.0], [5.5]])
    z = np.tile([0.0, 1.0], (3, 1))
    T = piecewise_ph_invert(Gompertz(0.2, 0.1), np.zeros(3), cuts, z, u, 2.0)
    assert np.all(T < 2.0) and T[0] == T[1] == T[2]


@pytest.mark.parametrize("family", ["exponential", "weibull", "gompertz"])
@pytest.mark.parametrize("k", [1, 3])
def test_piecewise_plug_back(family, k):
    rng = trial_rng(21, k)
    m = 100_000
    p = TV_PARAMS[family]
    h0 = p.baseline(family)
    lin = p.beta * rng.integers(0, 2, m)
    cuts = np.sort(rng.uniform(0.6, 6.0, (m, k)), axis=1)
    z = np.tile(np.arange(k + 1) % 2, (m, 1)).astype(float)
    u = rng.random(m)
    T = piecewise_ph_invert(h0, lin, cuts, z, u, p.beta_z)
    assert np.max(np.abs(tv_cumhaz(h0, lin, cuts, z, T, p.beta_z) + np.log(u))) < 1e-10
    # quadrature of the hazard as an independent check on a few draws
    for i in range(5):
        def haz(t, i=i):
            s = int(np.searchsorted(cuts[i], t, side="right"))
            return float(h0.hazard(t)) * math.exp(lin[i] + p.beta_z * z[i, s])
        pts = [c for c in cuts[i] if c < T[i]]
        num, _ = integrate.quad(haz, 0.0, T[i], points=pts or None, limit=200)
        assert num == pytest.approx(-math.log(u[i]), rel=1e-7)


def test_tv_data_structure():
    spec = ScenarioSpec("tv_type2", "exponential", n=300, truncation=0.0, censoring=0.0)
    sim = gen_tv_data(spec, rng=trial_rng(4, 0), censor_rate=0.0)
    ds, sub = sim.dataset, sim.extra["subject"]
    assert sim.extra["subject_event"].all()
    for i in np.unique(sub)[:50]:
        rows = np.flatnonzero(sub == i)
        L, R, E = ds.left[rows], ds.right[rows], ds.event[rows]
        assert L[0] == 0.0 and np.array_equal(L[1:], R[:-1])
        assert E[-1] == 1 and not E[:-1].any()
        assert np.array_equal(ds.X[rows, 1], np.arange(rows.size) % 2)  # 0, 1, 0, 1
        assert np.all(ds.X[rows, 0] == ds.X[rows[0], 0])
    cont = gen_tv_data(ScenarioSpec("tv_continuous", "weibull", n=100, truncation=0.0,
                                    censoring=0.0), rng=trial_rng(4, 1), censor_rate=0.0)
    assert cont.dataset.X[:, 1].max() <= 10.0 and cont.dataset.X[:, 1].min() >= 0.0


def test_tv_test_set():
    ds = gen_tv_test_set("exponential", n=40_000, rng=trial_rng(6, 0))
    g = {(a, b): (ds.X[:, 0] == a) & (ds.X[:, 1] == b) for a in (0, 1) for b in (0, 1)}
    # theta = 0 group is a plain exponential(0.1) censored at 6
    base = ds.right[g[0, 0]]
    assert np.all(ds.left[g[0, 0]] == 0) and base.max() <= 6.0
    emp = np.mean(base > 3.0)
    assert abs(emp - math.exp(-0.3)) < 0.02
    assert np.all(ds.left[g[1, 1]] == 0.6) and np.all(ds.right[g[1, 1]] > 0.6)
    # restricted means on (0.6, 6] fall with the log relative risk
    rm = {k: np.mean(np.minimum(ds.right[v], 6.0)) for k, v in g.items()}
    assert rm[1, 1] < rm[0, 1] and rm[1, 0] < rm[0, 0]


def test_gompertz_test_set_plug_back():
    p = TV_PARAMS["gompertz"]
    h0 = p.baseline("gompertz")
    rng = trial_rng(7, 0)
    u = rng.random(1000)
    mult = math.exp(p.beta + p.beta_z)
    T = h0.inv_cumhaz(h0.cumhaz(0.6) - np.log(u) / mult)
    assert np.max(np.abs(mult * (h0.cumhaz(T) - h0.cumhaz(0.6)) + np.log(u))) < 1e-10


# ---------------------------------------------------------------- drivers

def test_recovery_driver_one_trial_and_determinism():
    spec = ScenarioSpec("tree", "weibull_i", n=200)
    a = run_recovery_experiment(spec, 1, seed=5)
    assert [r.method for r in a.trials] == ["ltrcit", "ltrcart"]
    b = run_recovery_experiment(spec, 1, seed=5)
    assert trial_rows(a) == trial_rows(b) and a.summary == b.summary


def test_driver_threads_match_serial():
    spec = ScenarioSpec("tree", "weibull_i", n=100)
    a = run_recovery_experiment(spec, 4, seed=2, threads=1)
    b = run_recovery_experiment(spec, 4, seed=2, threads=2)
    assert trial_rows(a) == trial_rows(b)


def test_null_driver():
    assert run_null_selection_experiment(0, seed=1).trials == []
    res = run_null_selection_experiment(30, seed=1)
    counts = [v for m, k, v in res.summary if m == "ltrcit" and k.startswith("count:")]
    assert sum(counts) == 30 and len(counts) == 6


def test_ibs_driver_with_oracle():
    spec = ScenarioSpec("tree", "weibull_i", n=300)
    res = run_ibs_experiment(spec, 12, seed=3, methods=("ltrcit", "ltrcart", "root", "oracle"))
    med = {m: v for m, k, v in res.summary if k == "median_ibs"}
    assert med["oracle"] < min(med["ltrcit"], med["ltrcart"])
    assert max(med["ltrcit"], med["ltrcart"]) < med["root"]


def test_grid_loading(tmp_path):
    entries, defaults = load_grid(bundled_grid())
    assert defaults["seed"] == 20240601
    labels = {e.spec.label for e in entries}
    assert "recovery-weibull_i-n300-light" in labels
    bad = tmp_path / "g.toml"
    bad.write_text('[[scenario]]\nsetup = "tree"\nfamily = "weibull_i"\nbogus = 1\n')
    with pytest.raises(ValueError):
        load_grid(bad)
