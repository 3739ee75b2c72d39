"""Simulation designs and Monte-Carlo experiment drivers."""

from .distributions import (TREE_FAMILIES, Bathtub, Exponential, Family, Gompertz, LogNormal,
                            Weibull, sample_survival)
from .experiments import (ExperimentResult, GridEntry, TrialResult, bundled_grid, load_grid,
                          run_entry, run_ibs_experiment, run_null_selection_experiment,
                          run_recovery_experiment, trial_rows)
from .generators import (TV_PARAMS, ScenarioSpec, SimData, TVParams, calibrate_censoring,
                         gen_ph_data, gen_tree_ltrc, gen_tv_data, gen_tv_test_set,
                         piecewise_ph_invert, static_test_set, tv_cumhaz)
from .rng import substream, trial_rng

__all__ = [
    "Bathtub", "ExperimentResult", "Exponential", "Family", "Gompertz", "GridEntry", "LogNormal",
    "ScenarioSpec", "SimData", "TREE_FAMILIES", "TVParams", "TV_PARAMS", "TrialResult", "Weibull",
    "bundled_grid", "calibrate_censoring", "gen_ph_data", "gen_tree_ltrc", "gen_tv_data",
    "gen_tv_test_set", "load_grid", "piecewise_ph_invert", "run_entry", "run_ibs_experiment",
    "run_null_selection_experiment", "run_recovery_experiment", "sample_survival",
    "static_test_set", "substream", "trial_rng", "trial_rows", "tv_cumhaz",
]
