"""Delayed-entry risk sets, product-limit and Nelson-Aalen estimators, log-rank scores.

A record (L, R, delta) is at risk at time t when ``L < t <= R``.  Entry
strictly before t means a subject entering at an event time is not yet at
risk there; with this convention cutting a record into contiguous pieces
leaves every risk-set count unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import UndefinedScoreError


@dataclass(frozen=True)
class RiskSetTable:
    event_times: np.ndarray
    events: np.ndarray
    at_risk: np.ndarray

    def __len__(self):
        return self.event_times.shape[0]

    @property
    def empty(self) -> bool:
        return len(self) == 0


class StepFunction:
    """Right-continuous piecewise-constant function.

    ``f(t) = initial`` for ``t < knots[0]`` and ``values[k]`` on
    ``[knots[k], knots[k+1])``.
    """

    def __init__(self, knots, values, initial=0.0):
        knots = np.asarray(knots, dtype=float).reshape(-1)
        values = np.asarray(values, dtype=float).reshape(-1)
        if knots.shape != values.shape:
            raise ValueError("knots and values must have equal length")
        if knots.size > 1 and np.any(np.diff(knots) <= 0):
            raise ValueError("knots must be strictly increasing")
        self.knots = knots
        self.values = values
        self.initial = float(initial)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.knots, t, side="right") - 1
        vals = np.concatenate(([self.initial], self.values))
        out = vals[idx + 1]
        return out if out.ndim else float(out)

    def left_limit(self, t):
        """Value just before ``t``."""
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.knots, t, side="left") - 1
        vals = np.concatenate(([self.initial], self.values))
        out = vals[idx + 1]
        return out if out.ndim else float(out)

    def to_dict(self) -> dict:
        return {"initial": self.initial, "knots": self.knots.tolist(),
                "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, doc):
        return cls(doc["knots"], doc["values"], doc.get("initial", cls._default_initial()))

    @staticmethod
    def _default_initial():
        return 0.0

    def __eq__(self, other):
        return (isinstance(other, StepFunction) and self.initial == other.initial
                and np.array_equal(self.knots, other.knots)
                and np.array_equal(self.values, other.values))

    def __repr__(self):
        return f"{type(self).__name__}(n_knots={self.knots.size}, initial={self.initial})"


class SurvivalCurve(StepFunction):
    """Non-increasing step function in [0, 1] starting at 1."""

    def __init__(self, knots, values, initial=1.0):
        super().__init__(knots, values, initial)
        v = np.concatenate(([self.initial], self.values))
        if np.any(v < 0) or np.any(v > 1) or np.any(np.diff(v) > 0):
            raise ValueError("survival curve must be non-increasing within [0, 1]")

    @staticmethod
    def _default_initial():
        return 1.0


class CumulativeHazard(StepFunction):
    """Non-decreasing, non-negative step function starting at 0."""

    def __init__(self, knots, values, initial=0.0):
        super().__init__(knots, values, initial)
        v = np.concatenate(([self.initial], self.values))
        if np.any(v < 0) or np.any(np.diff(v) < 0):
            raise ValueError("cumulative hazard must be non-decreasing and non-negative")


# ------------------------------------------------------------ array kernels

def risk_table_arrays(left, right, event) -> RiskSetTable:
    left = np.asarray(left, dtype=float)
    right = np.asarray(right, dtype=float)
    event = np.asarray(event)
    times, d = np.unique(right[event == 1], return_counts=True)
    n = (np.searchsorted(np.sort(left), times, side="left")
         - np.searchsorted(np.sort(right), times, side="left"))
    return RiskSetTable(times, d.astype(np.int64), n.astype(np.int64))


def km_arrays(left, right, event) -> SurvivalCurve:
    tab = risk_table_arrays(left, right, event)
    values = np.cumprod(1.0 - tab.events / tab.at_risk)
    return SurvivalCurve(tab.event_times, values, 1.0)


def nelson_aalen_arrays(left, right, event) -> CumulativeHazard:
    tab = risk_table_arrays(left, right, event)
    return CumulativeHazard(tab.event_times, np.cumsum(tab.events / tab.at_risk), 0.0)


def logrank_scores_arrays(left, right, event) -> np.ndarray:
    """Log-rank scores of LTRC records, computed from the data's own KM.

    Censored: log S(R) - log S(L).  Event: the exact Peto score
    (a log a - b log b)/(a - b) - log S(L) with a = S(R-), b = S(R).  Both use
    the conditional product over event times in (L, R], which stays positive
    even where the unconditional curve has already hit zero.
    """
    left = np.asarray(left, dtype=float)
    right = np.asarray(right, dtype=float)
    event = np.asarray(event)
    tab = risk_table_arrays(left, right, event)
    if tab.empty:
        return np.zeros(left.shape[0])
    q = tab.events / tab.at_risk
    with np.errstate(divide="ignore"):
        f = np.log1p(-q)
    dead = ~np.isfinite(f)
    C = np.concatenate(([0.0], np.cumsum(np.where(dead, 0.0, f))))
    Z = np.concatenate(([0], np.cumsum(dead)))
    lo = np.searchsorted(tab.event_times, left, side="right")
    hi = np.searchsorted(tab.event_times, right, side="right")
    ev = event == 1
    # events: R is the event time at index hi-1
    top = np.where(ev, hi - 1, hi)
    log_cond = C[top] - C[lo]
    if np.any(Z[top] != Z[lo]):
        i = int(np.flatnonzero(Z[top] != Z[lo])[0])
        raise UndefinedScoreError(i)
    qr = q[np.maximum(hi - 1, 0)]
    with np.errstate(divide="ignore", invalid="ignore"):
        jump = np.where(qr < 1.0, -(1.0 - qr) * np.log1p(-qr) / qr, 0.0)
    return np.where(ev, log_cond + jump, log_cond)


# ---------------------------------------------------------- dataset front end

def risk_set_table(data: Dataset) -> RiskSetTable:
    """Distinct event times with event counts and delayed-entry risk-set sizes.

    An all-censored dataset gives an empty table (``table.empty``).
    """
    if len(data) == 0:
        raise ValueError("empty dataset")
    return risk_table_arrays(data.left, data.right, data.event)


def km_ltrc(data: Dataset) -> SurvivalCurve:
    """Product-limit estimate with knots at the distinct event times."""
    if len(data) == 0:
        raise ValueError("empty dataset")
    return km_arrays(data.left, data.right, data.event)


def nelson_aalen_ltrc(data: Dataset) -> CumulativeHazard:
    if len(data) == 0:
        raise ValueError("empty dataset")
    return nelson_aalen_arrays(data.left, data.right, data.event)


def logrank_scores_ltrc(data: Dataset) -> np.ndarray:
    if len(data) == 0:
        raise ValueError("empty dataset")
    try:
        return logrank_scores_arrays(data.left, data.right, data.event)
    except UndefinedScoreError as exc:
        i = exc.args[0]
        raise UndefinedScoreError(
            f"log-rank score undefined for record {data.ids[i]!r}: "
            "conditional survival is zero inside its interval") from None


def peto_scores_rc(data: Dataset) -> np.ndarray:
    """Peto log-rank scores, treating every record as entering at the common minimum."""
    if len(data) == 0:
        raise ValueError("empty dataset")
    left = np.full(len(data), data.left.min())
    return logrank_scores_arrays(left, data.right, data.event)
