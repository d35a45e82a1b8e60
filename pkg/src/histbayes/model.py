"""Expected rates, joint log-likelihood, log-posterior, and gradients.

The expected rate in channel ``c``, bin ``b`` is the sum over samples of the
nominal rate times every modifier factor attached to that sample; all three
modifier kinds contribute the parameter value itself as the factor. The main
measurement contributes one Poisson term per bin, with the ``-lgamma(n+1)``
constant included so values match textbook Poisson log-pmfs exactly.

Gradients are computed by a forward-mode pass with vectorized partials (one
:class:`~histbayes.dual.DualVector` evaluation yields the full gradient), and
are exact up to floating point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Mapping

import numpy as np
from scipy.special import gammaln

from . import dual
from .distributions import Distribution
from .errors import DimensionError, DomainError
from .priors import PriorSet
from .workspace import ModelSpec, ModifierKind, ObservationSet, iter_parameters

_NEG_INF = float("-inf")

FREE_DEFAULT_BOUNDS = (0.0, 10.0)
FREE_DEFAULT_INIT = 1.0
CONSTRAINED_BOUND_SDS = 10.0
_INIT_MARGIN = 1e-3


class ParamKind(Enum):
    FREE = "free"
    GAUSS_CONSTRAINED = "gauss_constrained"
    POISSON_CONSTRAINED = "poisson_constrained"


_KIND_MAP = {
    ModifierKind.FREE_NORM: ParamKind.FREE,
    ModifierKind.GAUSS_CONSTRAINED_NORM: ParamKind.GAUSS_CONSTRAINED,
    ModifierKind.POISSON_CONSTRAINED_SHAPE: ParamKind.POISSON_CONSTRAINED,
}


@dataclass(frozen=True)
class ParameterSpace:
    """Ordered free/constrained parameters with bounds and starting values."""

    names: tuple[str, ...]
    kinds: tuple[ParamKind, ...]
    bounds: tuple[tuple[float, float], ...]
    init: tuple[float, ...]

    def __post_init__(self):
        n = len(self.names)
        if not (len(self.kinds) == len(self.bounds) == len(self.init) == n):
            raise DimensionError("parameter space field lengths differ")
        for name, (lo, hi), x0 in zip(self.names, self.bounds, self.init):
            if not lo < hi:
                raise DomainError(f"parameter '{name}': bounds [{lo}, {hi}] are empty")
            if not lo <= x0 <= hi:
                raise DomainError(f"parameter '{name}': init {x0} outside [{lo}, {hi}]")

    @property
    def dim(self) -> int:
        return len(self.names)

    def bounds_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([b[0] for b in self.bounds])
        hi = np.array([b[1] for b in self.bounds])
        return lo, hi


def _interior_init(preferred: float, lo: float, hi: float) -> float:
    """Clip a starting value into the open interval (lo, hi)."""
    margin = _INIT_MARGIN * (hi - lo) if math.isfinite(hi - lo) else _INIT_MARGIN
    return min(max(preferred, lo + margin), hi - margin)


def _constrained_init(prior: Distribution, lo: float, hi: float) -> float:
    """Prior mean, moved to the box-truncated prior mean when the plain mean
    sits on or outside the box (where gradients are typically stiffest)."""
    from .distributions import Normal as _Normal

    mean = prior.mean
    margin = _INIT_MARGIN * (hi - lo)
    if lo + margin < mean < hi - margin:
        return mean
    if isinstance(prior, _Normal):
        a = (lo - prior.mu) / prior.sigma
        b = (hi - prior.mu) / prior.sigma
        mass = _norm_cdf(b) - _norm_cdf(a)
        if mass > 0.0:
            mean = prior.mu + prior.sigma * (_norm_pdf(a) - _norm_pdf(b)) / mass
    return _interior_init(mean, lo, hi)


def _norm_pdf(z: float) -> float:
    return math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


def _norm_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def build_parameter_space(spec: ModelSpec, priors: PriorSet) -> ParameterSpace:
    """Default bounds and starting point for every parameter.

    Free parameters use [0, 10] with init 1 (intersected with the prior's
    support). Constrained parameters start at their prior mean and are
    bounded at mean +/- 10 prior standard deviations, with the lower bound
    clamped at 0 so every multiplicative factor, and hence every expected
    rate, stays non-negative inside the box.
    """
    names, kinds, bounds, inits = [], [], [], []
    by_name = {name: kind for name, kind, _, _ in iter_parameters(spec)}
    for name in spec.parameter_order:
        kind = _KIND_MAP[by_name[name]] if name in by_name else ParamKind.FREE
        prior = priors[name]
        if kind is ParamKind.FREE:
            slo, shi = prior.support
            lo = max(FREE_DEFAULT_BOUNDS[0], slo)
            hi = min(FREE_DEFAULT_BOUNDS[1], shi)
            if not lo < hi:
                raise DomainError(
                    f"parameter '{name}': prior support {prior.support} does not "
                    f"overlap the default bounds {FREE_DEFAULT_BOUNDS}")
            init = _interior_init(FREE_DEFAULT_INIT, lo, hi)
        else:
            lo = max(0.0, prior.mean - CONSTRAINED_BOUND_SDS * prior.sd)
            hi = prior.mean + CONSTRAINED_BOUND_SDS * prior.sd
            if not lo < hi:
                raise DomainError(
                    f"parameter '{name}': derived bounds [{lo}, {hi}] are empty; "
                    f"auxiliary data forces a negative scale factor")
            init = _constrained_init(prior, lo, hi)
        names.append(name)
        kinds.append(kind)
        bounds.append((lo, hi))
        inits.append(init)
    return ParameterSpace(tuple(names), tuple(kinds), tuple(bounds), tuple(inits))


# ---------------------------------------------------------------------------
# compiled evaluation plan


@dataclass(frozen=True)
class _CompiledSample:
    nominal: np.ndarray
    norm_indices: tuple[int, ...]       # scalar multiplicative parameters
    shape_indices: np.ndarray | None    # per-bin parameter indices


@dataclass(frozen=True)
class _CompiledChannel:
    name: str
    n_bins: int
    samples: tuple[_CompiledSample, ...]


@lru_cache(maxsize=128)
def _compile(spec: ModelSpec) -> tuple[_CompiledChannel, ...]:
    index = {name: i for i, name in enumerate(spec.parameter_order)}
    channels = []
    for ch in spec.channels:
        samples = []
        for sm in ch.samples:
            norm: list[int] = []
            shape: np.ndarray | None = None
            for m in sm.modifiers:
                if m.kind is ModifierKind.POISSON_CONSTRAINED_SHAPE:
                    shape = np.array(
                        [index[f"{m.parameter}[{b}]"] for b in range(ch.n_bins)],
                        dtype=np.intp)
                else:
                    norm.append(index[m.parameter])
            samples.append(_CompiledSample(
                nominal=np.asarray(sm.nominal, dtype=float),
                norm_indices=tuple(norm),
                shape_indices=shape))
        channels.append(_CompiledChannel(ch.name, ch.n_bins, tuple(samples)))
    return tuple(channels)


def _check_theta(spec: ModelSpec, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (len(spec.parameter_order),):
        raise DimensionError(
            f"theta has shape {theta.shape}, model has "
            f"{len(spec.parameter_order)} parameter(s)")
    if not np.all(np.isfinite(theta)):
        raise DomainError("theta contains non-finite entries")
    return theta


def expected_rates(spec: ModelSpec, theta) -> dict[str, np.ndarray]:
    """Per-channel expected event rates at ``theta``."""
    theta = _check_theta(spec, theta)
    out: dict[str, np.ndarray] = {}
    for ch in _compile(spec):
        acc = np.zeros(ch.n_bins)
        for sm in ch.samples:
            f = 1.0
            for i in sm.norm_indices:
                f = f * theta[i]
            vec = sm.nominal * f
            if sm.shape_indices is not None:
                vec = vec * theta[sm.shape_indices]
            acc += vec
        out[ch.name] = acc
    return out


def _main_counts(observed) -> Mapping[str, tuple[int, ...]]:
    return observed.main if isinstance(observed, ObservationSet) else observed


def log_likelihood_main(spec: ModelSpec, theta, observed) -> float:
    """Sum of Poisson log-pmfs over all channels and bins.

    Uses the 0*log(0) = 0 convention for empty bins; returns -inf when a bin
    with observed counts has zero expected rate. A negative expected rate
    raises :class:`DomainError` (it means the parameter bounds admit
    negative factors).
    """
    counts = _main_counts(observed)
    rates = expected_rates(spec, theta)
    total = 0.0
    for name, nu in rates.items():
        if name not in counts:
            raise DimensionError(f"no observed counts for channel '{name}'")
        n = np.asarray(counts[name], dtype=float)
        if n.shape != nu.shape:
            raise DimensionError(
                f"channel '{name}': {nu.size} bins but {n.size} observed counts")
        if np.any(nu < 0.0):
            raise DomainError(
                f"negative expected rate in channel '{name}' "
                f"(parameter bounds admit negative factors)")
        zero = nu == 0.0
        if np.any(zero & (n > 0)):
            return _NEG_INF
        pos = ~zero
        total += float(np.sum(n[pos] * np.log(nu[pos]) - nu[pos]))
        total -= float(np.sum(gammaln(n + 1.0)))
    return total


def _in_bounds(theta: np.ndarray, space: ParameterSpace) -> bool:
    lo, hi = space.bounds_arrays()
    return bool(np.all(theta >= lo) and np.all(theta <= hi))


def _prior_list(spec: ModelSpec, priors: PriorSet) -> list[Distribution]:
    try:
        return [priors[name] for name in spec.parameter_order]
    except KeyError as e:
        raise DimensionError(f"priors missing parameter {e.args[0]!r}") from None


def log_posterior_unnorm(spec: ModelSpec, theta, priors: PriorSet, observed,
                         space: ParameterSpace | None = None) -> float:
    """Unnormalized log-posterior: main log-likelihood plus prior log-densities.

    Returns -inf outside the parameter-space box or the prior support. The
    normalization constant of box-truncated priors is omitted; it cancels in
    every sampling and calibration use.
    """
    theta = _check_theta(spec, theta)
    if space is None:
        space = build_parameter_space(spec, priors)
    if not _in_bounds(theta, space):
        return _NEG_INF
    total = 0.0
    for x, prior in zip(theta, _prior_list(spec, priors)):
        lp = prior.logpdf(float(x))
        if lp == _NEG_INF:
            return _NEG_INF
        total += lp
    like = log_likelihood_main(spec, theta, observed)
    return like + total


def _dual_log_posterior(spec: ModelSpec, theta: np.ndarray, priors: PriorSet,
                        observed) -> dual.DualVector | float:
    """Forward-mode evaluation; assumes theta is inside the support box."""
    counts = _main_counts(observed)
    duals = dual.DualVector.seed(theta)
    n_params = len(duals)
    total = dual.DualVector(0.0, np.zeros(n_params))
    for x, prior in zip(duals, _prior_list(spec, priors)):
        lp = prior.logpdf(x)
        if not isinstance(lp, dual.DualVector) and lp == _NEG_INF:
            return _NEG_INF
        total = total + lp
    for ch in _compile(spec):
        n = counts[ch.name]
        for b in range(ch.n_bins):
            nu = dual.DualVector(0.0, np.zeros(n_params))
            for sm in ch.samples:
                f = dual.DualVector(sm.nominal[b], np.zeros(n_params))
                for i in sm.norm_indices:
                    f = f * duals[i]
                if sm.shape_indices is not None:
                    f = f * duals[sm.shape_indices[b]]
                nu = nu + f
            if nu.value < 0.0:
                raise DomainError(f"negative expected rate in channel '{ch.name}'")
            if nu.value == 0.0:
                if n[b] > 0:
                    return _NEG_INF
                total = total - nu
            else:
                total = total + (n[b] * dual.log(nu) - nu)
            total = total - math.lgamma(n[b] + 1.0)
    return total


def grad_log_posterior(spec: ModelSpec, theta, priors: PriorSet, observed,
                       space: ParameterSpace | None = None) -> np.ndarray:
    """Exact gradient of :func:`log_posterior_unnorm` at an interior point."""
    theta = _check_theta(spec, theta)
    if space is None:
        space = build_parameter_space(spec, priors)
    lo, hi = space.bounds_arrays()
    if not (np.all(theta > lo) and np.all(theta < hi)):
        raise DomainError("gradient requested at or outside the support boundary")
    result = _dual_log_posterior(spec, theta, priors, observed)
    if not isinstance(result, dual.DualVector):
        raise DomainError("gradient requested where the log-posterior is -inf")
    return result.partials


class Posterior:
    """Model-bound posterior density: the sampling target.

    Bundles a spec, resolved priors, observations, and the parameter space,
    and exposes the fast value path plus the fused value-and-gradient path
    that samplers consume. Outside the support box ``logpdf`` returns -inf
    and ``logpdf_and_grad`` returns (-inf, zeros): samplers reject such
    points instead of erroring.
    """

    def __init__(self, spec: ModelSpec, priors: PriorSet, observed,
                 space: ParameterSpace | None = None):
        self.spec = spec
        self.priors = priors
        self.observed = _main_counts(observed)
        self.space = space if space is not None else build_parameter_space(spec, priors)
        self._lo, self._hi = self.space.bounds_arrays()
        self._zeros = np.zeros(self.space.dim)

    @property
    def dim(self) -> int:
        return self.space.dim

    @property
    def param_names(self) -> tuple[str, ...]:
        return self.space.names

    def init_point(self) -> np.ndarray:
        return np.array(self.space.init)

    def logpdf(self, theta) -> float:
        return log_posterior_unnorm(self.spec, theta, self.priors, self.observed,
                                    space=self.space)

    def logpdf_and_grad(self, theta) -> tuple[float, np.ndarray]:
        theta = _check_theta(self.spec, theta)
        if not (np.all(theta >= self._lo) and np.all(theta <= self._hi)):
            return _NEG_INF, self._zeros.copy()
        result = _dual_log_posterior(self.spec, theta, self.priors, self.observed)
        if not isinstance(result, dual.DualVector):
            return _NEG_INF, self._zeros.copy()
        return result.value, result.partials

    def as_target(self):
        from .samplers import Target

        return Target(
            dim=self.dim,
            logpdf=self.logpdf,
            logpdf_and_grad=self.logpdf_and_grad,
            bounds=(self._lo.copy(), self._hi.copy()),
            init=self.init_point(),
            param_names=self.param_names,
        )
