"""Survival-time families with cumulative hazard and its inverse.

Sampling is by inversion: ``T = H^{-1}(-log u / m)`` for a hazard
multiplier ``m``, so every family can also serve as a proportional-hazards
baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr, ndtr, ndtri

from ..errors import NumericalError


class Family:
    def cumhaz(self, t):
        raise NotImplementedError

    def inv_cumhaz(self, h):
        raise NotImplementedError

    def hazard(self, t):
        raise NotImplementedError

    def survival(self, t):
        return np.exp(-self.cumhaz(t))

    def sample(self, rng, size=None, multiplier=1.0):
        u = rng.random(size)
        return self.inv_cumhaz(-np.log(u) / multiplier)


@dataclass(frozen=True)
class Exponential(Family):
    rate: float

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("rate must be positive")

    def cumhaz(self, t):
        return self.rate * np.asarray(t, dtype=float)

    def inv_cumhaz(self, h):
        return np.asarray(h, dtype=float) / self.rate

    def hazard(self, t):
        return np.full_like(np.asarray(t, dtype=float), self.rate)


@dataclass(frozen=True)
class Weibull(Family):
    """S(t) = exp(-(t/scale)^shape)."""

    shape: float
    scale: float

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise ValueError("shape and scale must be positive")

    @classmethod
    def from_rate(cls, rate: float, shape: float) -> "Weibull":
        """Cumulative hazard ``rate * t**shape``."""
        return cls(shape, rate ** (-1.0 / shape))

    def cumhaz(self, t):
        return (np.asarray(t, dtype=float) / self.scale) ** self.shape

    def inv_cumhaz(self, h):
        return self.scale * np.asarray(h, dtype=float) ** (1.0 / self.shape)

    def hazard(self, t):
        t = np.asarray(t, dtype=float)
        return self.shape / self.scale * (t / self.scale) ** (self.shape - 1.0)


@dataclass(frozen=True)
class LogNormal(Family):
    mu: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    def _z(self, t):
        with np.errstate(divide="ignore"):
            return (np.log(np.asarray(t, dtype=float)) - self.mu) / self.sigma

    def cumhaz(self, t):
        return -log_ndtr(-self._z(t))

    def inv_cumhaz(self, h):
        return np.exp(self.mu - self.sigma * ndtri(np.exp(-np.asarray(h, dtype=float))))

    def hazard(self, t):
        t = np.asarray(t, dtype=float)
        z = self._z(t)
        dens = np.exp(-0.5 * z * z) / (t * self.sigma * math.sqrt(2 * math.pi))
        return dens / ndtr(-z)


@dataclass(frozen=True)
class Bathtub(Family):
    """S(t) = exp(-a t^2 / 2) / (1 + c t)^(b/c)."""

    a: float
    b: float
    c: float

    def __post_init__(self):
        if not (self.a > 0 and self.b >= 0 and self.c > 0):
            raise ValueError("need a > 0, b >= 0, c > 0")

    def cumhaz(self, t):
        t = np.asarray(t, dtype=float)
        return 0.5 * self.a * t * t + self.b / self.c * np.log1p(self.c * t)

    def hazard(self, t):
        t = np.asarray(t, dtype=float)
        return self.a * t + self.b / (1.0 + self.c * t)

    def inv_cumhaz(self, h, tol=1e-10):
        """Bracketed bisection; H is increasing so the root is unique."""
        h = np.asarray(h, dtype=float)
        lo = np.zeros_like(h)
        hi = np.sqrt(2.0 * h / self.a)
        if self.b > 0:
            with np.errstate(over="ignore"):
                hi = np.minimum(hi, np.expm1(h * self.c / self.b) / self.c)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            below = self.cumhaz(mid) < h
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
            if np.all(hi - lo <= 4e-16 * np.maximum(hi, 1e-300)):
                break
        t = 0.5 * (lo + hi)
        if np.any(np.abs(self.cumhaz(t) - h) > tol * np.maximum(1.0, h)):
            raise NumericalError(f"bathtub inversion did not converge (a={self.a}, b={self.b}, c={self.c})")
        return t


@dataclass(frozen=True)
class Gompertz(Family):
    """Hazard ``rate * exp(shape * t)``."""

    rate: float
    shape: float

    def __post_init__(self):
        if not (self.rate > 0 and self.shape > 0):
            raise ValueError("rate and shape must be positive")

    def cumhaz(self, t):
        return self.rate / self.shape * np.expm1(self.shape * np.asarray(t, dtype=float))

    def inv_cumhaz(self, h):
        return np.log1p(self.shape * np.asarray(h, dtype=float) / self.rate) / self.shape

    def hazard(self, t):
        return self.rate * np.exp(self.shape * np.asarray(t, dtype=float))


def sample_survival(family: Family, rng, size=None, multiplier=1.0):
    """Draw survival times by inverting the cumulative hazard."""
    return family.sample(rng, size, multiplier)


# Four-leaf parameter sets for tree-structured data, leaves 1..4 in order.
TREE_FAMILIES = {
    "exponential": [Exponential(r) for r in (0.1, 0.23, 0.4, 0.9)],
    "weibull_d": [Weibull(0.9, s) for s in (7.0, 3.0, 2.5, 1.0)],
    "weibull_i": [Weibull(3.0, s) for s in (2.0, 4.3, 6.2, 10.0)],
    "lognormal": [LogNormal(m, s) for m, s in ((2.0, 0.3), (1.7, 0.2), (1.3, 0.3), (0.5, 0.5))],
    "bathtub": [Bathtub(a, 1.0, 5.0) for a in (0.01, 0.05, 0.1, 0.7)],
}
