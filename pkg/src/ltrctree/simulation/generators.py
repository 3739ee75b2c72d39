"""Data-generating processes for the simulation experiments.

Three designs are covered:

* tree-structured LTRC data: six covariates, four terminal groups defined by
  X1, X2 and X3, each group with its own survival distribution;
* proportional-hazards data whose log-hazard is a linear or a nonlinear
  function of X1 and X2;
* time-varying data: a binary or continuous covariate switches value at
  random times, the survival time is drawn by inverting the cumulative
  hazard piece by piece, and each subject is cut into pseudo-subjects.

Left truncation (tree and PH designs) is by rejection: ``L ~ U[0, U]`` and
subjects with ``T < L`` are discarded.  Censoring is ``C = L + D`` with
``D ~ Exp(rate)``, the rate being calibrated to a target censored fraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..data import Covariate, CovariateSchema, Dataset
from ..errors import NumericalError
from ..evaluation import TruthPartition
from .distributions import TREE_FAMILIES, Exponential, Family, Gompertz, Weibull
from .rng import CALIBRATION, substream, trial_rng

SETUPS = ("tree", "null", "linear", "nonlinear",
          "tv_type1", "tv_type2", "tv_continuous", "tv_continuous1")
PH_FAMILIES = ("exponential", "weibull_i", "weibull_d")
TV_FAMILIES = ("exponential", "weibull", "gompertz")
PILOT_SIZE = 10_000
SWITCH_LOW, SWITCH_HIGH = 0.6, 6.0


@dataclass(frozen=True)
class ScenarioSpec:
    """One simulation setting.

    ``truncation`` is the upper bound U of the entry-time distribution
    (0 disables truncation); ``censoring`` is the target censored fraction.
    """

    setup: str = "tree"
    family: str = "weibull_i"
    n: int = 300
    truncation: float = 2.0
    censoring: float = 0.2
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        if self.setup not in SETUPS:
            raise ValueError(f"unknown setup {self.setup!r}")
        allowed = (TV_FAMILIES if self.setup.startswith("tv") else
                   PH_FAMILIES if self.setup in ("linear", "nonlinear") else tuple(TREE_FAMILIES))
        if self.family not in allowed:
            raise ValueError(f"family {self.family!r} not available for setup {self.setup!r}")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not 0 <= self.censoring < 1:
            raise ValueError("censoring target must lie in [0, 1)")
        if self.truncation < 0:
            raise ValueError("truncation bound must be >= 0")

    @property
    def time_varying(self) -> bool:
        return self.setup.startswith("tv")

    @property
    def label(self) -> str:
        return self.name or (f"{self.setup}-{self.family}-n{self.n}"
                             f"-U{self.truncation:g}-c{round(100 * self.censoring)}")


@dataclass(frozen=True)
class TVParams:
    beta: float
    beta_z: float
    scale: float
    shape: float | None = None

    def baseline(self, family: str) -> Family:
        if family == "exponential":
            return Exponential(self.scale)
        if family == "weibull":
            return Weibull.from_rate(self.scale, self.shape)
        if family == "gompertz":
            return Gompertz(self.scale, self.shape)
        raise ValueError(f"unknown time-varying family {family!r}")


TV_PARAMS = {
    "exponential": TVParams(0.8, 1.4, 0.1),
    "weibull": TVParams(0.9, 1.6, 0.3, 0.8),
    "gompertz": TVParams(1.2, 2.0, 0.2, 0.1),
}


@dataclass
class SimData:
    """Generated training data plus what an experiment needs to score it."""

    dataset: Dataset
    truth: TruthPartition | None
    censor_rate: float
    labels: np.ndarray | None = None
    extra: dict = field(default_factory=dict)


# ---------------------------------------------------------------- covariates

def _levels(*labels):
    return [str(v) for v in labels]


TREE_SCHEMA = CovariateSchema([
    Covariate("X1", "ordinal", _levels(1, 2, 3, 4, 5)),
    Covariate("X2", "nominal", _levels(1, 2)),
    Covariate("X3", "numeric"),
    Covariate("X4", "ordinal", _levels(1, 2, 3, 4, 5)),
    Covariate("X5", "nominal", _levels(1, 2)),
    Covariate("X6", "numeric"),
])

PH_SCHEMA = CovariateSchema([
    Covariate("X1", "numeric"),
    Covariate("X2", "nominal", _levels(0, 1)),
    Covariate("X3", "nominal", _levels(0, 1)),
    Covariate("X4", "numeric"),
    Covariate("X5", "numeric"),
    Covariate("X6", "nominal", _levels(0, 1)),
])


def tv_schema(continuous: bool) -> CovariateSchema:
    x2 = Covariate("X2", "numeric") if continuous else Covariate("X2", "nominal", _levels(0, 1))
    return CovariateSchema([
        Covariate("X1", "nominal", _levels(0, 1)),
        x2,
        Covariate("X3", "nominal", _levels(0, 1)),
        Covariate("X4", "numeric"),
        Covariate("X5", "ordinal", _levels(1, 2, 3, 4, 5)),
    ])


def tree_truth() -> TruthPartition:
    """Four groups: {X1<=2, X2=1}, {X1<=2, X2=2}, {X1>2, X3<=1}, {X1>2, X3>1}.

    Values are level indices, so X1 <= 2 means indices {0, 1}.
    """
    low, high = [0, 1], [2, 3, 4]
    return TruthPartition(
        support={"X1": [0, 1, 2, 3, 4], "X2": [0, 1], "X3": (0.0, 2.0)},
        leaves=[{"X1": low, "X2": [0]}, {"X1": low, "X2": [1]},
                {"X1": high, "X3": (0.0, 1.0)}, {"X1": high, "X3": (1.0, 2.0)}])


def tv_truth(continuous: bool) -> TruthPartition:
    if continuous:
        support = {"X1": [0, 1], "X2": (0.0, 10.0)}
        sides = [(0.0, 5.0), (5.0, 10.0)]
    else:
        support = {"X1": [0, 1], "X2": [0, 1]}
        sides = [[0], [1]]
    return TruthPartition(support, [{"X1": [a], "X2": s} for a in (0, 1) for s in sides])


def tree_leaf(X) -> np.ndarray:
    """Group index 0..3 for rows encoded per TREE_SCHEMA."""
    return np.where(X[:, 0] <= 1, np.where(X[:, 1] == 0, 0, 1), np.where(X[:, 2] <= 1.0, 2, 3))


def _tree_covariates(rng, m):
    return np.column_stack([
        rng.integers(0, 5, m), rng.integers(0, 2, m), rng.uniform(0, 2, m),
        rng.integers(0, 5, m), rng.integers(0, 2, m), rng.uniform(0, 2, m),
    ]).astype(float)


def _ph_covariates(rng, m):
    return np.column_stack([
        rng.uniform(0, 1, m), rng.integers(0, 2, m), rng.integers(0, 2, m),
        rng.uniform(0, 1, m), rng.uniform(0, 1, m), rng.integers(0, 2, m),
    ]).astype(float)


def ph_location(setup: str, X) -> np.ndarray:
    s = X[:, 0] + X[:, 1]
    if setup == "linear":
        return -s
    return -(np.cos(s * math.pi) + np.sqrt(s))


def ph_family(family: str, theta: float) -> Family:
    """Survival law at location ``theta`` for the proportional-hazards designs."""
    if family == "exponential":
        return Exponential(math.exp(theta))
    if family == "weibull_i":
        return Weibull(2.0, 10.0 * math.exp(theta))
    return Weibull(0.5, 5.0 * math.exp(theta))


def _ph_times(family, theta, u):
    h = -np.log(u)
    if family == "exponential":
        return h / np.exp(theta)
    if family == "weibull_i":
        return 10.0 * np.exp(theta) * h ** 0.5
    return 5.0 * np.exp(theta) * h ** 2.0


# ---------------------------------------------------------------- static designs

def _draw(spec: ScenarioSpec, rng, m):
    """Covariates, survival times and group labels for ``m`` untruncated subjects."""
    if spec.setup in ("tree", "null"):
        X = _tree_covariates(rng, m)
        u = rng.random(m)
        fams = TREE_FAMILIES[spec.family]
        if spec.setup == "null":
            return X, fams[0].inv_cumhaz(-np.log(u)), np.zeros(m, dtype=np.int64)
        leaf = tree_leaf(X)
        T = np.empty(m)
        for k, fam in enumerate(fams):
            sel = leaf == k
            T[sel] = fam.inv_cumhaz(-np.log(u[sel]))
        return X, T, leaf
    X = _ph_covariates(rng, m)
    u = rng.random(m)
    return X, _ph_times(spec.family, ph_location(spec.setup, X), u), None


def _accepted(spec: ScenarioSpec, rng, n):
    """Rejection sampler for left truncation: returns X, T, L, labels of ``n`` kept subjects."""
    parts, kept, batch = [], 0, max(2 * n, 64)
    while kept < n:
        X, T, lab = _draw(spec, rng, batch)
        L = rng.uniform(0.0, spec.truncation, batch) if spec.truncation > 0 else np.zeros(batch)
        ok = T >= L
        parts.append((X[ok], T[ok], L[ok], None if lab is None else lab[ok]))
        kept += int(ok.sum())
    X = np.concatenate([p[0] for p in parts])[:n]
    T = np.concatenate([p[1] for p in parts])[:n]
    L = np.concatenate([p[2] for p in parts])[:n]
    lab = None if parts[0][3] is None else np.concatenate([p[3] for p in parts])[:n]
    return X, T, L, lab


def _censor(rng, n, rate):
    """Censoring gaps ``D ~ Exp(rate)``; rate 0 means no censoring."""
    e = rng.standard_exponential(n)
    return np.full(n, np.inf) if rate == 0 else e / rate


def _ltrc(spec, rng, rate, schema, n=None):
    n = spec.n if n is None else n
    X, T, L, lab = _accepted(spec, rng, n)
    C = L + _censor(rng, n, rate)
    R = np.minimum(T, C)
    event = (T <= C).astype(np.int64)
    ds = Dataset(schema, L, R, event, X)
    return ds, lab, T


def calibrate_censoring(spec: ScenarioSpec, target: float | None = None, tol: float = 0.005,
                        seed: int | None = None) -> float:
    """Exponential censoring rate giving censored fraction ``target`` on a pilot sample.

    Uses 10^4 pilot subjects with common random numbers across iterates and
    bisects on log(rate) until the pilot fraction is within ``tol``.
    Target 0 returns the no-censoring sentinel 0.
    """
    target = spec.censoring if target is None else target
    if target == 0:
        return 0.0
    if not 0 < target < 1:
        raise ValueError("target must lie in (0, 1)")
    rng = substream(spec.seed if seed is None else seed, CALIBRATION)
    if spec.time_varying:
        T = _tv_subjects(spec, rng, PILOT_SIZE)["T"]
        L = np.zeros_like(T)
    else:
        _, T, L, _ = _accepted(spec, rng, PILOT_SIZE)
    E = rng.standard_exponential(T.size)

    def frac(log_rate):
        return float(np.mean(L + E / math.exp(log_rate) < T))

    lo, hi = math.log(1e-8), math.log(1e6)
    if not frac(lo) < target < frac(hi):
        raise NumericalError(f"censoring target {target} not bracketed")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f = frac(mid)
        if abs(f - target) <= tol:
            return math.exp(mid)
        if f < target:
            lo = mid
        else:
            hi = mid
    raise NumericalError(f"censoring calibration failed for target {target}")


def gen_tree_ltrc(spec: ScenarioSpec, rng=None, censor_rate: float | None = None) -> SimData:
    """Tree-structured (or, for setup ``null``, covariate-free) LTRC sample of ``spec.n`` subjects."""
    if spec.setup not in ("tree", "null"):
        raise ValueError("gen_tree_ltrc needs setup 'tree' or 'null'")
    rng = trial_rng(spec.seed, 0) if rng is None else rng
    rate = calibrate_censoring(spec) if censor_rate is None else censor_rate
    ds, leaf, _ = _ltrc(spec, rng, rate, TREE_SCHEMA)
    truth = tree_truth() if spec.setup == "tree" else None
    return SimData(ds, truth, rate, leaf)


def gen_ph_data(spec: ScenarioSpec, rng=None, censor_rate: float | None = None) -> SimData:
    """Linear or nonlinear proportional-hazards sample with an uncensored companion test set."""
    if spec.setup not in ("linear", "nonlinear"):
        raise ValueError("gen_ph_data needs setup 'linear' or 'nonlinear'")
    rng = trial_rng(spec.seed, 0) if rng is None else rng
    rate = calibrate_censoring(spec) if censor_rate is None else censor_rate
    ds, _, _ = _ltrc(spec, rng, rate, PH_SCHEMA)
    test, oracle = static_test_set(spec, rng)
    return SimData(ds, None, rate, None, {"test": test, "oracle": oracle})


def static_test_set(spec: ScenarioSpec, rng, n: int | None = None):
    """Uncensored, untruncated test sample and each subject's true survival law."""
    n = spec.n if n is None else n
    X, T, lab = _draw(spec, rng, n)
    schema = PH_SCHEMA if spec.setup in ("linear", "nonlinear") else TREE_SCHEMA
    ds = Dataset(schema, np.zeros(n), T, np.ones(n, dtype=np.int64), X)
    if spec.setup in ("tree", "null"):
        fams = TREE_FAMILIES[spec.family]
        laws = [fams[int(k)] for k in lab]
    else:
        laws = [ph_family(spec.family, float(t)) for t in ph_location(spec.setup, X)]
    return ds, laws


# ---------------------------------------------------------------- time-varying

def piecewise_ph_invert(h0: Family, lin, cuts, z, u, beta_z: float = 1.0):
    """Invert H(t) = sum over z-constant segments of exp(lin + beta_z z_k) dH0.

    ``cuts`` holds each subject's switch times (rows padded with +inf) and
    ``z`` the covariate value on each of the ``cuts.shape[1] + 1`` segments.
    Returns the first t with H(t) = -log u.
    """
    lin = np.atleast_1d(np.asarray(lin, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    cuts = np.atleast_2d(np.asarray(cuts, dtype=float))
    z = np.atleast_2d(np.asarray(z, dtype=float))
    n, k = cuts.shape
    target = -np.log(u)
    bounds = np.column_stack([np.zeros(n), cuts, np.full(n, np.inf)])
    H0 = h0.cumhaz(bounds)
    acc = np.zeros(n)
    T = np.full(n, np.nan)
    for s in range(k + 1):
        mult = np.exp(lin + beta_z * z[:, s])
        open_ = np.isnan(T)
        with np.errstate(invalid="ignore"):
            need = (target - acc) / mult
        # padded +inf cuts give empty segments
        with np.errstate(invalid="ignore"):
            seg = np.where(bounds[:, s + 1] > bounds[:, s], H0[:, s + 1] - H0[:, s], 0.0)
        hit = open_ & (need <= seg)
        if np.any(hit):
            T[hit] = h0.inv_cumhaz(H0[hit, s] + need[hit])
            # the inverse can land a hair outside the segment through rounding
            T[hit] = np.clip(T[hit], bounds[hit, s], bounds[hit, s + 1])
        acc = np.where(open_ & ~hit, acc + mult * seg, acc)
    if np.any(np.isnan(T)):
        raise NumericalError("cumulative hazard did not reach the target")
    return T


def tv_cumhaz(h0: Family, lin, cuts, z, t, beta_z: float = 1.0):
    """Cumulative hazard of the piecewise proportional-hazards model at ``t``."""
    lin = np.atleast_1d(np.asarray(lin, dtype=float))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    cuts = np.atleast_2d(np.asarray(cuts, dtype=float))
    z = np.atleast_2d(np.asarray(z, dtype=float))
    n = cuts.shape[0]
    bounds = np.column_stack([np.zeros(n), cuts, np.full(n, np.inf)])
    total = np.zeros(n)
    for s in range(cuts.shape[1] + 1):
        a = np.minimum(bounds[:, s], t)
        b = np.minimum(bounds[:, s + 1], t)
        total += np.exp(lin + beta_z * z[:, s]) * (h0.cumhaz(b) - h0.cumhaz(a))
    return total


def _n_switches(setup):
    return 1 if setup in ("tv_type1", "tv_continuous1") else 3


def _tv_subjects(spec: ScenarioSpec, rng, m, params: TVParams | None = None):
    """Subject-level draws: X1, switch times, X2 path, survival time."""
    params = TV_PARAMS[spec.family] if params is None else params
    k = _n_switches(spec.setup)
    continuous = spec.setup.startswith("tv_continuous")
    x1 = rng.integers(0, 2, m).astype(float)
    u = rng.random(m)
    cuts = np.sort(rng.uniform(SWITCH_LOW, SWITCH_HIGH, (m, k)), axis=1)
    if continuous:
        x2 = rng.uniform(0.0, 10.0, (m, k + 1))
        z = (x2 > 5.0).astype(float)
    else:
        z = np.tile(np.arange(k + 1) % 2, (m, 1)).astype(float)
        x2 = z
    T = piecewise_ph_invert(params.baseline(spec.family), params.beta * x1, cuts, z, u, params.beta_z)
    return {"X1": x1, "cuts": cuts, "X2": x2, "z": z, "u": u, "T": T}


def gen_tv_data(spec: ScenarioSpec, params: TVParams | None = None, rng=None,
                censor_rate: float | None = None) -> SimData:
    """Time-varying sample reformatted into pseudo-subject rows.

    Each subject is cut at its switch times before the observed time; X3, X4
    and X5 are redrawn for every pseudo-subject.  Censoring ``C ~ Exp(rate)``,
    no truncation.
    """
    if not spec.time_varying:
        raise ValueError("gen_tv_data needs a time-varying setup")
    rng = trial_rng(spec.seed, 0) if rng is None else rng
    rate = calibrate_censoring(spec) if censor_rate is None else censor_rate
    sub = _tv_subjects(spec, rng, spec.n, params)
    n = spec.n
    C = _censor(rng, n, rate)
    Y = np.minimum(sub["T"], C)
    delta = (sub["T"] <= C).astype(np.int64)
    k = sub["cuts"].shape[1]
    starts = np.column_stack([np.zeros(n), sub["cuts"]])
    live = starts < Y[:, None]
    rows, segs = np.nonzero(live)
    m = rows.size
    ends = np.column_stack([sub["cuts"], np.full(n, np.inf)])
    L = starts[rows, segs]
    R = np.minimum(ends[rows, segs], Y[rows])
    last = segs == live.sum(axis=1)[rows] - 1
    event = np.where(last, delta[rows], 0)
    X = np.column_stack([
        sub["X1"][rows], sub["X2"][rows, segs], rng.integers(0, 2, m),
        rng.uniform(0.0, 1.0, m), rng.integers(0, 5, m),
    ]).astype(float)
    ids = [f"{i}.{s}" for i, s in zip(rows.tolist(), segs.tolist())]
    continuous = spec.setup.startswith("tv_continuous")
    ds = Dataset(tv_schema(continuous), L, R, event, X, ids)
    extra = {"subject": rows, "n_switches": k, "subject_time": Y, "subject_event": delta}
    return SimData(ds, tv_truth(continuous), rate, None, extra)


def gen_tv_test_set(family: str, params: TVParams | None = None, n: int = 300, rng=None,
                    continuous: bool = False) -> Dataset:
    """Four-group test sample with time-fixed covariates.

    Groups (X1, X2) = (1, 1), (1, 0), (0, 1), (0, 0) have log relative risk
    beta + beta_z, beta, beta_z and 0.  Groups with X2 = 1 enter at 0.6
    (drawn conditionally on surviving past it); groups with X2 = 0 are
    censored at 6.
    """
    params = TV_PARAMS[family] if params is None else params
    rng = trial_rng(0, 0) if rng is None else rng
    h0 = params.baseline(family)
    x1 = rng.integers(0, 2, n).astype(float)
    if continuous:
        x2 = rng.uniform(0.0, 10.0, n)
        z = (x2 > 5.0).astype(float)
    else:
        x2 = rng.integers(0, 2, n).astype(float)
        z = x2
    u = rng.random(n)
    mult = np.exp(params.beta * x1 + params.beta_z * z)
    entry = np.where(z == 1, SWITCH_LOW, 0.0)
    T = h0.inv_cumhaz(h0.cumhaz(entry) - np.log(u) / mult)
    T = np.maximum(T, np.nextafter(entry, np.inf))
    cap = np.where(z == 1, np.inf, SWITCH_HIGH)
    R = np.minimum(T, cap)
    event = (T <= cap).astype(np.int64)
    X = np.column_stack([x1, x2, rng.integers(0, 2, n), rng.uniform(0.0, 1.0, n),
                         rng.integers(0, 5, n)]).astype(float)
    return Dataset(tv_schema(continuous), entry, R, event, X)
