"""Predictive sampling and the posterior-calibration check.

Prior draws are taken from the resolved priors restricted to the parameter
space box (the same truncation the samplers enforce), so predictive and
calibration runs see exactly the distribution the posterior is defined
against.

The calibration run repeats: draw truth from the prior, simulate counts,
sample the posterior, keep ``L`` approximately independent draws. It then
checks two things. Pooled over experiments the posterior draws must
reproduce the prior (two-sample Kolmogorov-Smirnov against fresh prior
draws, with the pseudo-experiment count as the effective sample size on
both sides, since draws within one experiment are clustered). Per
experiment, the rank of the truth among its posterior draws must be uniform
on {0..L} (chi-square test over 20 bins).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import (
    CalibrationError,
    DomainError,
    EmptyChainError,
    HistBayesError,
    ImproperPriorError,
)
from .model import ParameterSpace, Posterior, build_parameter_space, expected_rates
from .priors import PriorSet
from .samplers import Chain, SamplerConfig, chain_rng, derive_seed, hmc_sample, mh_sample
from .workspace import ModelSpec

KS_ALPHA_COEFF_1PCT = 1.6276       # sqrt(-ln(alpha/2) / 2) at alpha = 0.01
DEFAULT_RANK_BINS = 20
DEFAULT_DRAWS_PER_EXPERIMENT = 63
MAX_FAILURE_FRACTION = 0.05


@dataclass
class PredictiveSamples:
    kind: str                                  # "prior" or "posterior"
    counts: dict[str, np.ndarray]              # channel -> (n_draws, n_bins)
    theta_draws: np.ndarray                    # (n_draws, n_params)
    param_names: tuple[str, ...]
    seed: int

    @property
    def n_draws(self) -> int:
        return self.theta_draws.shape[0]


@dataclass
class CalibrationResult:
    n_pseudo: int
    param_names: tuple[str, ...]
    aggregated_posterior_draws: np.ndarray     # (n_kept * L, n_params)
    prior_reference_draws: np.ndarray          # (n_pseudo, n_params)
    rank_statistics: dict[str, np.ndarray]     # parameter -> ints in [0, L]
    comparison: dict[str, dict[str, float]]
    draws_per_experiment: int
    n_failed: int
    seed: int

    def passed(self, alpha: float = 0.01) -> bool:
        return all(c["chi2_pvalue"] > alpha for c in self.comparison.values())


def _check_proper(priors: PriorSet) -> None:
    for name, dist in priors.items():
        for v in (dist.mean, dist.sd):
            if not math.isfinite(v):
                raise ImproperPriorError(f"prior for '{name}' has non-finite moments")


def sample_prior_points(priors: PriorSet, space: ParameterSpace,
                        rng: np.random.Generator, n: int) -> np.ndarray:
    """Draw parameter vectors from the box-truncated prior."""
    from .distributions import truncated_sample

    out = np.empty((n, space.dim))
    for j, name in enumerate(space.names):
        lo, hi = space.bounds[j]
        out[:, j] = truncated_sample(priors[name], lo, hi, rng, n)
    return out


def _poisson_counts(spec: ModelSpec, theta_draws: np.ndarray,
                    rng: np.random.Generator) -> dict[str, np.ndarray]:
    counts: dict[str, np.ndarray] = {}
    n = theta_draws.shape[0]
    rate_rows: dict[str, list[np.ndarray]] = {}
    for i in range(n):
        for name, nu in expected_rates(spec, theta_draws[i]).items():
            rate_rows.setdefault(name, []).append(nu)
    for name, rows in rate_rows.items():
        counts[name] = rng.poisson(np.asarray(rows))
    return counts


def prior_predictive(spec: ModelSpec, priors: PriorSet, n_draws: int,
                     seed: int, space: ParameterSpace | None = None) -> PredictiveSamples:
    """Sample parameters from the prior, then counts from the Poisson model."""
    if n_draws < 1:
        raise DomainError("n_draws must be positive")
    _check_proper(priors)
    if space is None:
        space = build_parameter_space(spec, priors)
    rng = chain_rng(seed)
    theta = sample_prior_points(priors, space, rng, n_draws)
    counts = _poisson_counts(spec, theta, rng)
    return PredictiveSamples(kind="prior", counts=counts, theta_draws=theta,
                             param_names=space.names, seed=seed)


def posterior_predictive(spec: ModelSpec, chain: Chain, seed: int) -> PredictiveSamples:
    """Sample counts from the Poisson model at every retained posterior draw."""
    if chain.n_draws == 0:
        raise EmptyChainError("chain has no draws")
    rng = chain_rng(seed)
    theta = np.array(chain.draws)
    counts = _poisson_counts(spec, theta, rng)
    return PredictiveSamples(kind="posterior", counts=counts, theta_draws=theta,
                             param_names=chain.param_names, seed=seed)


def rank_uniformity_test(ranks: np.ndarray, n_levels: int,
                         n_bins: int = DEFAULT_RANK_BINS) -> tuple[float, float]:
    """Chi-square test of uniformity for integer ranks on {0..n_levels-1}.

    Bins are equal-width in rank space; expected counts follow the number of
    integer levels per bin, and empty-expectation bins are dropped.
    """
    edges = np.linspace(0.0, float(n_levels), n_bins + 1)
    levels = np.arange(n_levels)
    level_counts, _ = np.histogram(levels, bins=edges)
    observed, _ = np.histogram(ranks, bins=edges)
    mask = level_counts > 0
    expected = ranks.size * level_counts[mask] / n_levels
    chi2 = float(np.sum((observed[mask] - expected) ** 2 / expected))
    dof = int(mask.sum()) - 1
    pvalue = float(stats.chi2.sf(chi2, dof))
    return chi2, pvalue


def ks_critical_value(n: int, m: int, coeff: float = KS_ALPHA_COEFF_1PCT) -> float:
    """Two-sample KS rejection threshold for effective sample sizes n, m."""
    return coeff * math.sqrt((n + m) / (n * m))


def calibration_run(spec: ModelSpec, priors: PriorSet, n_pseudo: int,
                    sampler_cfg: SamplerConfig,
                    draws_per_experiment: int = DEFAULT_DRAWS_PER_EXPERIMENT,
                    seed: int = 0,
                    space: ParameterSpace | None = None) -> CalibrationResult:
    """Posterior-calibration check against pseudo-data from the prior predictive.

    Every chain starts from the deterministic parameter-space init so that a
    broken sampler cannot hide behind its starting point. Experiments whose
    sampler raises are skipped and counted; more than 5% failures aborts.
    """
    if n_pseudo < 1:
        raise DomainError("n_pseudo must be positive")
    _check_proper(priors)
    if space is None:
        space = build_parameter_space(spec, priors)
    sampler = hmc_sample if sampler_cfg.kind == "hmc" else mh_sample
    L = min(draws_per_experiment, sampler_cfg.n_draws)
    stride = max(1, sampler_cfg.n_draws // L)

    truths: list[np.ndarray] = []
    kept: list[np.ndarray] = []
    n_failed = 0
    max_failures = int(MAX_FAILURE_FRACTION * n_pseudo)
    for i in range(n_pseudo):
        rng = np.random.Generator(np.random.Philox(
            np.random.SeedSequence(entropy=int(seed), spawn_key=(0, i))))
        theta_true = sample_prior_points(priors, space, rng, 1)[0]
        pseudo_counts = {name: tuple(int(v) for v in arr[0])
                         for name, arr in _poisson_counts(
                             spec, theta_true[None, :], rng).items()}
        target = Posterior(spec, priors, pseudo_counts, space=space).as_target()
        cfg_i = SamplerConfig(
            kind=sampler_cfg.kind, n_draws=sampler_cfg.n_draws,
            n_warmup=sampler_cfg.n_warmup, n_chains=1,
            seed=derive_seed(seed, 1, i), step_size=sampler_cfg.step_size,
            n_leapfrog=sampler_cfg.n_leapfrog,
            proposal_scale=sampler_cfg.proposal_scale)
        try:
            chain = sampler(target, cfg_i, init=space.init)
        except HistBayesError as e:
            n_failed += 1
            if n_failed > max_failures:
                raise CalibrationError(
                    f"{n_failed}/{i + 1} pseudo-experiments failed to sample; "
                    f"last error: {e}") from e
            continue
        truths.append(theta_true)
        kept.append(chain.draws[::stride][:L])

    truth_mat = np.asarray(truths)
    pooled = np.concatenate(kept, axis=0)
    rng_ref = np.random.Generator(np.random.Philox(
        np.random.SeedSequence(entropy=int(seed), spawn_key=(2,))))
    reference = sample_prior_points(priors, space, rng_ref, n_pseudo)

    n_kept = truth_mat.shape[0]
    ranks: dict[str, np.ndarray] = {}
    comparison: dict[str, dict[str, float]] = {}
    critical = ks_critical_value(n_kept, n_pseudo)
    for j, name in enumerate(space.names):
        r = np.array([int(np.sum(draws[:, j] < truth_mat[k, j]))
                      for k, draws in enumerate(kept)])
        ranks[name] = r
        chi2, chi2_p = rank_uniformity_test(r, L + 1)
        ks_stat = float(stats.ks_2samp(pooled[:, j], reference[:, j]).statistic)
        comparison[name] = {
            "ks_statistic": ks_stat,
            "ks_critical_1pct": critical,
            "chi2_statistic": chi2,
            "chi2_pvalue": chi2_p,
        }
    return CalibrationResult(
        n_pseudo=n_pseudo, param_names=space.names,
        aggregated_posterior_draws=pooled, prior_reference_draws=reference,
        rank_statistics=ranks, comparison=comparison,
        draws_per_experiment=L, n_failed=n_failed, seed=seed)
