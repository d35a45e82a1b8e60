"""Closed-form construction of the sampling priors.

Free parameters keep the user-supplied ur-prior untouched. Constrained
parameters get their ur-prior updated in closed form against the auxiliary
measurement before any sampling happens:

* Gaussian auxiliary data conjugates a Normal ur-prior. The posterior
  variance is ``v' = sigma_aux^2 sigma_ur^2 / (sigma_aux^2 + sigma_ur^2)``
  and the posterior mean ``mu' = v' (mu_ur / sigma_ur^2 + a / sigma_aux^2)``;
  the returned scale is ``sqrt(v')``.
* A Poisson auxiliary count conjugates a Gamma ur-prior:
  ``alpha' = alpha_ur + a``, ``beta' = beta_ur + 1``. Because the model
  multiplies each bin by the rescaled factor ``gamma = chi / a``, the prior
  over the factor is ``Gamma(alpha', a * beta')``.

When an ur-prior for a constrained parameter is omitted, a vague default is
used (``Normal(0, 1e3 * sigma_aux)`` or ``Gamma(1e-6, 1e-6)``) so that the
result is dominated by the auxiliary measurement while staying proper.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from .distributions import Distribution, Gamma, Normal, Uniform
from .errors import DomainError, MissingPriorError
from .workspace import (
    GaussAux,
    ModelSpec,
    ModifierKind,
    ObservationSet,
    PoissonAux,
    iter_parameters,
)

VAGUE_GAMMA_SHAPE = 1e-6
VAGUE_GAMMA_RATE = 1e-6
VAGUE_NORMAL_SIGMA_FACTOR = 1e3


@dataclass(frozen=True)
class UrPrior:
    """Belief about a parameter before auxiliary data is taken into account.

    ``family`` is one of ``"normal"``, ``"gamma"``, ``"uniform"`` with two
    hyperparameters each: (mu, sigma), (alpha, beta), (lo, hi). Unlike the
    sampling distributions, a Gamma ur-prior may have alpha = beta = 0 (the
    vague limit); it only has to become proper after updating.
    """

    parameter: str
    family: str
    params: tuple[float, float]

    def __post_init__(self):
        a, b = self.params
        if not (math.isfinite(a) and math.isfinite(b)):
            raise DomainError(f"non-finite ur-prior hyperparameters for '{self.parameter}'")
        if self.family == "normal":
            if not b > 0.0:
                raise DomainError(f"ur-prior for '{self.parameter}': sigma must be > 0")
        elif self.family == "gamma":
            if a < 0.0 or b < 0.0:
                raise DomainError(f"ur-prior for '{self.parameter}': alpha, beta must be >= 0")
        elif self.family == "uniform":
            if not a < b:
                raise DomainError(f"ur-prior for '{self.parameter}': lo must be < hi")
        else:
            raise DomainError(f"unknown ur-prior family {self.family!r}")

    def as_distribution(self) -> Distribution:
        cls = {"normal": Normal, "gamma": Gamma, "uniform": Uniform}[self.family]
        return cls(*self.params)


@dataclass(frozen=True)
class PriorSet:
    """Per-parameter sampling priors, keyed by expanded parameter name."""

    dists: dict[str, Distribution]

    def __getitem__(self, name: str) -> Distribution:
        return self.dists[name]

    def __contains__(self, name: str) -> bool:
        return name in self.dists

    def items(self):
        return self.dists.items()


def gaussian_conjugate_update(mu_ur: float, sigma_ur: float,
                              a: float, sigma_aux: float) -> tuple[float, float]:
    """Posterior (mean, standard deviation) of a Normal mean after one
    Gaussian observation ``a`` with known scale ``sigma_aux``."""
    if not sigma_ur > 0.0:
        raise DomainError(f"sigma_ur must be > 0, got {sigma_ur}")
    if not sigma_aux > 0.0:
        raise DomainError(f"sigma_aux must be > 0, got {sigma_aux}")
    v_ur = sigma_ur * sigma_ur
    v_aux = sigma_aux * sigma_aux
    v_post = v_aux * v_ur / (v_aux + v_ur)
    mu_post = v_post * (mu_ur / v_ur + a / v_aux)
    return mu_post, math.sqrt(v_post)


def gamma_conjugate_update(alpha_ur: float, beta_ur: float, a: int) -> tuple[float, float]:
    """Posterior (shape, rate) of a Poisson rate after one observed count ``a``."""
    if alpha_ur < 0.0 or beta_ur < 0.0:
        raise DomainError("alpha_ur and beta_ur must be >= 0")
    if a < 0:
        raise DomainError(f"auxiliary count must be >= 0, got {a}")
    alpha_post = alpha_ur + a
    if alpha_post == 0.0:
        raise DomainError("update gives shape 0 (improper posterior); "
                          "use alpha_ur > 0 or a > 0")
    return alpha_post, beta_ur + 1.0


def gamma_rescale_to_factor(alpha_post: float, beta_post: float, a: int) -> Gamma:
    """Change of variable from the constrained rate to the multiplicative
    per-bin factor (rate divided by the auxiliary count ``a``)."""
    if a <= 0:
        raise DomainError(f"rescaling requires an auxiliary count > 0, got {a}")
    return Gamma(alpha_post, a * beta_post)


def build_priors(spec: ModelSpec, ur: Sequence[UrPrior], obs: ObservationSet,
                 overrides: Mapping[str, Distribution] | None = None) -> PriorSet:
    """Assemble the full prior set for ``spec.parameter_order``.

    ``ur`` must cover every free parameter; constrained parameters fall back
    to vague defaults when omitted. ``overrides`` (keyed by expanded name)
    bypass the conjugate update entirely and are used verbatim, which is how
    a previously resolved prior set can be replayed.
    """
    ur_by_name: dict[str, UrPrior] = {}
    for u in ur:
        if u.parameter in ur_by_name:
            raise DomainError(f"duplicate ur-prior for parameter '{u.parameter}'")
        ur_by_name[u.parameter] = u
    overrides = dict(overrides or {})

    entries = iter_parameters(spec)
    known = {name for name, _, _, _ in entries} | {m.parameter for _, _, m, _ in entries}
    for pname in ur_by_name:
        if pname not in known:
            raise DomainError(f"ur-prior references unknown parameter '{pname}'")
    for pname in overrides:
        if pname not in {name for name, _, _, _ in entries}:
            raise DomainError(f"prior override references unknown parameter '{pname}'")

    dists: dict[str, Distribution] = {}
    for name, kind, modifier, bin_index in entries:
        if name in overrides:
            dists[name] = overrides[name]
            continue
        if kind is ModifierKind.FREE_NORM:
            if name not in ur_by_name:
                raise MissingPriorError(f"free parameter '{name}' has no ur-prior")
            dists[name] = ur_by_name[name].as_distribution()
        elif kind is ModifierKind.GAUSS_CONSTRAINED_NORM:
            aux = modifier.aux
            if not isinstance(aux, GaussAux):
                raise DomainError(f"parameter '{name}' has no Gaussian auxiliary data")
            u = ur_by_name.get(name)
            if u is None:
                mu_ur, sigma_ur = 0.0, VAGUE_NORMAL_SIGMA_FACTOR * aux.sigma_aux
            elif u.family == "normal":
                mu_ur, sigma_ur = u.params
            else:
                raise DomainError(
                    f"parameter '{name}' needs a normal ur-prior, got {u.family!r}")
            mu_post, sigma_post = gaussian_conjugate_update(
                mu_ur, sigma_ur, aux.a, aux.sigma_aux)
            dists[name] = Normal(mu_post, sigma_post)
        else:
            base = modifier.parameter
            aux = modifier.aux
            if not isinstance(aux, PoissonAux):
                raise DomainError(f"parameter '{base}' has no Poisson auxiliary data")
            u = ur_by_name.get(base)
            if u is None:
                alpha_ur, beta_ur = VAGUE_GAMMA_SHAPE, VAGUE_GAMMA_RATE
            elif u.family == "gamma":
                alpha_ur, beta_ur = u.params
            else:
                raise DomainError(
                    f"parameter '{base}' needs a gamma ur-prior, got {u.family!r}")
            a_bin = aux.counts[bin_index]
            alpha_post, beta_post = gamma_conjugate_update(alpha_ur, beta_ur, a_bin)
            dists[name] = gamma_rescale_to_factor(alpha_post, beta_post, a_bin)

    missing = [p for p in spec.parameter_order if p not in dists]
    if missing:
        raise MissingPriorError(f"no prior built for parameter(s) {missing}")
    return PriorSet(dists={p: dists[p] for p in spec.parameter_order})
