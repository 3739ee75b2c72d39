"""Survival trees for left-truncated, right-censored data.

Two tree algorithms share one data model: a conditional-inference tree
driven by delayed-entry log-rank scores (``fit_ltrcit``) and a relative-risk
tree fitted as a Poisson regression tree on Nelson-Aalen exposures
(``fit_ltrcart``).  Time-varying covariates are handled by cutting subjects
into pseudo-subjects with constant covariates.
"""

from .data import (Covariate, CovariateSchema, Dataset, LongVisitRecord, LTRCRecord,
                   make_pseudo_subjects, parse_long_csv, parse_ltrc_csv, reformat_long_to_ltrc,
                   split_dataset, write_ltrc_csv)
from .errors import (DataError, LTRCError, NumericalError, ParseError, RoutingError, SchemaError,
                     UndefinedScoreError, ValidationError)
from .estimators import (CumulativeHazard, RiskSetTable, StepFunction, SurvivalCurve, km_ltrc,
                         logrank_scores_ltrc, nelson_aalen_ltrc, peto_scores_rc, risk_set_table)
from .evaluation import (PredictionSet, TruthPartition, brier_at_t, censoring_km, ibs,
                         structure_recovered, wilcoxon_signed_rank)
from .ltrcart import (CartControls, NodeStats, PruneSequence, cost_complexity_sequence,
                      cv_select_subtree, deviance_contribution, exposures, fit_ltrcart,
                      grow_poisson_tree, predict_ltrcart)
from .ltrcit import (CtreeControls, association_test, best_binary_split, fit_ltrcit,
                     node_influence, predict_ltrcit, select_split_variable)
from .tree import Node, SplitRule, Tree

__version__ = "0.1.0"

__all__ = [
    "CartControls", "Covariate", "CovariateSchema", "CtreeControls", "CumulativeHazard",
    "DataError", "Dataset", "LTRCError", "LTRCRecord", "LongVisitRecord", "Node", "NodeStats",
    "NumericalError", "ParseError", "PredictionSet", "PruneSequence", "RiskSetTable",
    "RoutingError", "SchemaError", "SplitRule", "StepFunction", "SurvivalCurve", "Tree",
    "TruthPartition", "UndefinedScoreError", "ValidationError", "association_test",
    "best_binary_split", "brier_at_t", "censoring_km", "cost_complexity_sequence",
    "cv_select_subtree", "deviance_contribution", "exposures", "fit_ltrcart", "fit_ltrcit",
    "grow_poisson_tree", "ibs", "km_ltrc", "logrank_scores_ltrc", "make_pseudo_subjects",
    "nelson_aalen_ltrc", "node_influence", "parse_long_csv", "parse_ltrc_csv",
    "peto_scores_rc", "predict_ltrcart", "predict_ltrcit", "reformat_long_to_ltrc",
    "risk_set_table", "select_split_variable", "split_dataset", "structure_recovered",
    "wilcoxon_signed_rank", "write_ltrc_csv",
]
