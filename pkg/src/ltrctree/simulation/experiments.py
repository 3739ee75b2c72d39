"""Monte-Carlo drivers: structure recovery, split-variable bias, prediction error.

Each trial owns a random stream keyed by (master seed, trial index), so the
tables are identical whatever the number of worker processes.  Results are
merged in trial order.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import stats

from ..data import Dataset
from ..estimators import SurvivalCurve, km_ltrc, nelson_aalen_ltrc
from ..evaluation import PredictionSet, ibs, structure_recovered, wilcoxon_signed_rank
from ..ltrcart import CartControls, exposures, fit_ltrcart, root_split
from ..ltrcart import predict_curves as cart_curves
from ..ltrcit import CtreeControls, association_logp, fit_ltrcit
from ..ltrcit import predict_curves as cit_curves
from .generators import (PH_SCHEMA, ScenarioSpec, SimData, _ltrc, calibrate_censoring,
                         gen_tree_ltrc, gen_tv_data, gen_tv_test_set, static_test_set)
from .rng import derived_seed, trial_rng

THREADS_ENV = "LTRCTREE_THREADS"
TREE_METHODS = ("ltrcit", "ltrcart")


@dataclass
class TrialResult:
    scenario: str
    method: str
    seed: int
    recovered: bool | None = None
    selected_vars: frozenset = frozenset()
    n_leaves: int | None = None
    ibs: float | None = None
    first_split: str | None = None


@dataclass
class ExperimentResult:
    kind: str
    scenario: str
    trials: list = field(default_factory=list)
    summary: list = field(default_factory=list)  # (method, metric, value)


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _map(fn, jobs, threads):
    if threads is None:
        threads = default_threads()
    if threads <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * threads))))


def _controls(overrides, cls):
    if not overrides:
        return cls()
    names = cls.__dataclass_fields__
    return cls(**{k: v for k, v in overrides.items() if k in names})


def _fit(method, data: Dataset, seed, overrides=None):
    if method == "ltrcit":
        return fit_ltrcit(data, _controls(overrides, CtreeControls))
    if method == "ltrcart":
        return fit_ltrcart(data, _controls(overrides, CartControls), seed=seed)
    raise ValueError(f"unknown tree method {method!r}")


def _generate(spec: ScenarioSpec, rng, rate):
    if spec.time_varying:
        return gen_tv_data(spec, rng=rng, censor_rate=rate)
    if spec.setup in ("tree", "null"):
        return gen_tree_ltrc(spec, rng, rate)
    # training sample only; the companion test set is drawn by the caller
    ds, _, _ = _ltrc(spec, rng, rate, PH_SCHEMA)
    return SimData(ds, None, rate)


# ---------------------------------------------------------------- recovery

def _recovery_trial(job):
    spec, index, seed, rate, methods, overrides = job
    rng = trial_rng(seed, index)
    sim = _generate(spec, rng, rate)
    out = []
    for method in methods:
        tree = _fit(method, sim.dataset, derived_seed(seed, index, 1), overrides)
        out.append(TrialResult(spec.label, method, index,
                               recovered=structure_recovered(tree, sim.truth),
                               selected_vars=frozenset(tree.split_variables()),
                               n_leaves=tree.n_leaves))
    return out


def run_recovery_experiment(spec: ScenarioSpec, trials: int, seed: int, methods=TREE_METHODS,
                            threads=None, controls=None) -> ExperimentResult:
    """Fit each method to ``trials`` fresh samples and check the recovered partition."""
    if spec.setup not in ("tree",) and not spec.time_varying:
        raise ValueError("recovery needs a tree or time-varying setup")
    rate = calibrate_censoring(spec, seed=seed)
    jobs = [(spec, i, seed, rate, tuple(methods), controls) for i in range(trials)]
    rows = [r for chunk in _map(_recovery_trial, jobs, threads) for r in chunk]
    res = ExperimentResult("recovery", spec.label, rows)
    names = ("X1", "X2", "X3", "X4", "X5", "X6")[:5 if spec.time_varying else 6]
    for method in methods:
        mine = [r for r in rows if r.method == method]
        if not mine:
            continue
        res.summary.append((method, "recovery_rate", 100.0 * np.mean([r.recovered for r in mine])))
        for v in names:
            res.summary.append((method, f"selected_rate:{v}",
                                100.0 * np.mean([v in r.selected_vars for r in mine])))
        res.summary.append((method, "mean_leaves", float(np.mean([r.n_leaves for r in mine]))))
    return res


# ---------------------------------------------------------------- null selection

def _null_trial(job):
    spec, index, seed, rate, methods = job
    rng = trial_rng(seed, index)
    data = gen_tree_ltrc(spec, rng, rate).dataset
    names = data.schema.names
    out = []
    for method in methods:
        if method == "ltrcit":
            logp = association_logp(data)
            var = names[int(np.argmin(logp))]
        else:
            best = root_split(data, exposures(data, nelson_aalen_ltrc(data)), CartControls())
            var = None if best is None else names[best[1].var]
        out.append(TrialResult(spec.label, method, index, first_split=var))
    return out


def run_null_selection_experiment(trials: int, seed: int, spec: ScenarioSpec | None = None,
                                  methods=TREE_METHODS, threads=None) -> ExperimentResult:
    """First-split variable under no covariate effect.

    The root split is forced: LTRCIT records the covariate with the smallest
    p-value, LTRCART the covariate of the largest deviance reduction.  The
    summary carries counts per covariate and a chi-square uniformity p-value.
    """
    spec = spec or ScenarioSpec("null", "exponential", n=100, truncation=2.0, censoring=0.2)
    if spec.setup != "null":
        spec = replace(spec, setup="null")
    res = ExperimentResult("null", spec.label)
    if trials <= 0:
        return res
    rate = calibrate_censoring(spec, seed=seed)
    jobs = [(spec, i, seed, rate, tuple(methods)) for i in range(trials)]
    res.trials = [r for chunk in _map(_null_trial, jobs, threads) for r in chunk]
    names = ("X1", "X2", "X3", "X4", "X5", "X6")
    for method in methods:
        picks = [r.first_split for r in res.trials if r.method == method]
        counts = np.array([picks.count(v) for v in names])
        for v, c in zip(names, counts):
            res.summary.append((method, f"count:{v}", int(c)))
        p = float(stats.chisquare(counts).pvalue) if counts.sum() else math.nan
        res.summary.append((method, "uniformity_p", p))
    return res


# ---------------------------------------------------------------- prediction error

def oracle_curve(law, grid) -> SurvivalCurve:
    grid = np.asarray(grid, dtype=float)
    return SurvivalCurve(grid, law.survival(grid), 1.0)


def _ibs_trial(job):
    spec, index, seed, rate, methods, overrides = job
    rng = trial_rng(seed, index)
    sim = _generate(spec, rng, rate)
    if spec.time_varying:
        test = gen_tv_test_set(spec.family, n=spec.n, rng=rng,
                               continuous=spec.setup.startswith("tv_continuous"))
        laws = None
    else:
        test, laws = static_test_set(spec, rng)
    out = []
    for method in methods:
        if method == "root":
            curve = km_ltrc(sim.dataset)
            curves = [curve] * len(test)
        elif method == "oracle":
            if laws is None:
                continue
            grid = np.unique(test.right)
            curves = [oracle_curve(law, grid) for law in laws]
        else:
            tree = _fit(method, sim.dataset, derived_seed(seed, index, 1), overrides)
            curves = cit_curves(tree, test.X) if method == "ltrcit" else cart_curves(tree, test.X)
        score = ibs(PredictionSet(curves, test.right, test.event))
        out.append(TrialResult(spec.label, method, index, ibs=score))
    return out


def run_ibs_experiment(spec: ScenarioSpec, trials: int, seed: int,
                       methods=("ltrcit", "ltrcart", "root"), threads=None,
                       controls=None) -> ExperimentResult:
    """Train on a generated sample, score on its companion test set, compare methods pairwise.

    ``root`` is the covariate-free product-limit curve; ``oracle`` uses the
    true survival laws (static designs only).
    """
    rate = calibrate_censoring(spec, seed=seed)
    jobs = [(spec, i, seed, rate, tuple(methods), controls) for i in range(trials)]
    rows = [r for chunk in _map(_ibs_trial, jobs, threads) for r in chunk]
    res = ExperimentResult("ibs", spec.label, rows)
    by = {m: np.array([r.ibs for r in rows if r.method == m]) for m in methods}
    for m in methods:
        if by[m].size:
            res.summary.append((m, "median_ibs", float(np.median(by[m]))))
    for i, a in enumerate(methods):
        for b in methods[i + 1:]:
            if by[a].size >= 6 and by[a].size == by[b].size:
                res.summary.append((f"{a}_vs_{b}", "signed_rank_p",
                                    wilcoxon_signed_rank(by[a], by[b])))
    return res


# ---------------------------------------------------------------- grids

@dataclass
class GridEntry:
    experiment: str
    spec: ScenarioSpec
    trials: int
    methods: tuple


GRID_DIR = Path(__file__).with_name("grids")


def _toml_load(path):
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def load_grid(path) -> tuple[list[GridEntry], dict]:
    """Read a scenario grid: a ``[defaults]`` table and ``[[scenario]]`` entries."""
    doc = _toml_load(path)
    defaults = dict(doc.get("defaults", {}))
    entries = []
    spec_keys = set(ScenarioSpec.__dataclass_fields__)
    for raw in doc.get("scenario", []):
        item = {**defaults, **raw}
        experiment = item.pop("experiment", "recovery")
        if experiment not in ("recovery", "null", "ibs"):
            raise ValueError(f"unknown experiment {experiment!r}")
        trials = int(item.pop("trials", 100))
        methods = tuple(item.pop("methods", ("ltrcit", "ltrcart")))
        item.pop("seed", None)
        unknown = set(item) - spec_keys
        if unknown:
            raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
        if experiment == "null":
            item.setdefault("setup", "null")
        entries.append(GridEntry(experiment, ScenarioSpec(**item), trials, methods))
    return entries, defaults


def bundled_grid(name="desk") -> Path:
    return GRID_DIR / f"{name}.toml"


def run_entry(entry: GridEntry, seed: int, threads=None, controls=None,
              trials: int | None = None) -> ExperimentResult:
    n = entry.trials if trials is None else trials
    if entry.experiment == "recovery":
        return run_recovery_experiment(entry.spec, n, seed, entry.methods, threads, controls)
    if entry.experiment == "null":
        return run_null_selection_experiment(n, seed, entry.spec, entry.methods, threads)
    return run_ibs_experiment(entry.spec, n, seed, entry.methods, threads, controls)


def trial_rows(res: ExperimentResult):
    """Long-format rows ``(scenario, method, seed, metric, value)``."""
    rows = []
    for r in res.trials:
        base = (res.scenario, r.method, r.seed)
        if res.kind == "recovery":
            rows.append((*base, "recovered", int(r.recovered)))
            rows.append((*base, "n_leaves", r.n_leaves))
            rows.append((*base, "selected_vars", ";".join(sorted(r.selected_vars))))
        elif res.kind == "null":
            rows.append((*base, "first_split", r.first_split or ""))
        else:
            rows.append((*base, "ibs", r.ibs))
    return rows
