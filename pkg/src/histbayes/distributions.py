"""Probability distributions used for priors and analytic sampling targets.

All log-densities accept either a plain float or a :class:`~histbayes.dual.DualVector`,
so the same code path serves density evaluation and forward-mode gradients.
Gamma uses the rate parametrization (mean = alpha / beta).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import dual
from .errors import DomainError

_LOG_2PI = math.log(2.0 * math.pi)
_NEG_INF = float("-inf")


@dataclass(frozen=True)
class Normal:
    mu: float
    sigma: float

    def __post_init__(self):
        if not (self.sigma > 0.0 and math.isfinite(self.sigma) and math.isfinite(self.mu)):
            raise DomainError(f"Normal requires finite mu and sigma > 0, got {self}")

    def logpdf(self, x):
        z = (x - self.mu) / self.sigma
        return -0.5 * (z * z) - (math.log(self.sigma) + 0.5 * _LOG_2PI)

    def sample(self, rng: np.random.Generator, size=None):
        return rng.normal(self.mu, self.sigma, size)

    @property
    def mean(self) -> float:
        return self.mu

    @property
    def sd(self) -> float:
        return self.sigma

    @property
    def support(self) -> tuple[float, float]:
        return (_NEG_INF, math.inf)


@dataclass(frozen=True)
class Gamma:
    """Gamma with shape ``alpha`` and rate ``beta``."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0.0 and self.beta > 0.0
                and math.isfinite(self.alpha) and math.isfinite(self.beta)):
            raise DomainError(f"Gamma requires alpha > 0 and beta > 0, got {self}")

    def logpdf(self, x):
        if dual.value_of(x) <= 0.0:
            return _NEG_INF
        const = self.alpha * math.log(self.beta) - math.lgamma(self.alpha)
        return const + (self.alpha - 1.0) * dual.log(x) - self.beta * x

    def sample(self, rng: np.random.Generator, size=None):
        return rng.gamma(self.alpha, 1.0 / self.beta, size)

    @property
    def mean(self) -> float:
        return self.alpha / self.beta

    @property
    def sd(self) -> float:
        return math.sqrt(self.alpha) / self.beta

    @property
    def support(self) -> tuple[float, float]:
        return (0.0, math.inf)


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def __post_init__(self):
        if not (self.lo < self.hi and math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise DomainError(f"Uniform requires finite lo < hi, got {self}")

    def logpdf(self, x):
        v = dual.value_of(x)
        if v < self.lo or v > self.hi:
            return _NEG_INF
        const = -math.log(self.hi - self.lo)
        if isinstance(x, dual.DualVector):
            return dual.DualVector(const, np.zeros_like(x.partials))
        return const

    def sample(self, rng: np.random.Generator, size=None):
        return rng.uniform(self.lo, self.hi, size)

    @property
    def mean(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def sd(self) -> float:
        return (self.hi - self.lo) / math.sqrt(12.0)

    @property
    def support(self) -> tuple[float, float]:
        return (self.lo, self.hi)


Distribution = Normal | Gamma | Uniform

_FAMILY_TAGS = {"normal": Normal, "gamma": Gamma, "uniform": Uniform}
_TAG_BY_TYPE = {Normal: "normal", Gamma: "gamma", Uniform: "uniform"}


def distribution_to_jsonable(dist: Distribution) -> dict:
    """``Normal(0, 2)`` -> ``{"normal": [0.0, 2.0]}`` (and likewise per family)."""
    tag = _TAG_BY_TYPE[type(dist)]
    if isinstance(dist, Normal):
        params = [dist.mu, dist.sigma]
    elif isinstance(dist, Gamma):
        params = [dist.alpha, dist.beta]
    else:
        params = [dist.lo, dist.hi]
    return {tag: params}


def distribution_from_jsonable(obj) -> Distribution:
    if not (isinstance(obj, dict) and len(obj) == 1):
        raise DomainError(f"expected a one-key distribution object, got {obj!r}")
    tag, params = next(iter(obj.items()))
    cls = _FAMILY_TAGS.get(tag)
    if cls is None:
        raise DomainError(f"unknown distribution family {tag!r}")
    if not (isinstance(params, (list, tuple)) and len(params) == 2
            and all(isinstance(p, (int, float)) and not isinstance(p, bool) for p in params)):
        raise DomainError(f"distribution {tag!r} needs two numeric parameters, got {params!r}")
    return cls(float(params[0]), float(params[1]))


def truncated_sample(dist: Distribution, lo: float, hi: float,
                     rng: np.random.Generator, n: int) -> np.ndarray:
    """Draw ``n`` samples from ``dist`` restricted to [lo, hi] by rejection."""
    out = np.empty(n)
    filled = 0
    for _ in range(10_000):
        if filled >= n:
            break
        batch = np.atleast_1d(dist.sample(rng, max(64, 2 * (n - filled))))
        keep = batch[(batch >= lo) & (batch <= hi)]
        take = min(keep.size, n - filled)
        out[filled:filled + take] = keep[:take]
        filled += take
    else:
        raise DomainError(
            f"prior {dist} has negligible mass inside bounds [{lo}, {hi}]")
    return out
