"""Posterior sampling: Hamiltonian Monte Carlo and random-walk Metropolis.

Both samplers are deterministic functions of (target, config, chain index):
the RNG is a counter-based Philox generator keyed by ``(seed, chain_index)``
through ``numpy.random.SeedSequence`` spawn keys, so multi-chain runs use
provably distinct streams and re-runs are bit-identical.

Bounded targets are handled by rejecting -inf proposals in HMC and by
reflecting proposals at the bounds in Metropolis-Hastings. HMC trajectories
whose Hamiltonian error exceeds the divergence threshold are rejected and
counted, not fatal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import dual
from .distributions import Distribution
from .errors import (
    DivergenceSignal,
    DomainError,
    InitializationError,
    NonFiniteGradientError,
)

DIVERGENCE_THRESHOLD = 1000.0


@dataclass(frozen=True)
class SamplerConfig:
    kind: str                       # "hmc" or "mh"
    n_draws: int
    n_warmup: int = 500
    n_chains: int = 1
    seed: int = 0
    step_size: float = 0.1          # HMC
    n_leapfrog: int = 20            # HMC
    proposal_scale: float | tuple[float, ...] = 0.5  # MH, broadcast if scalar

    def __post_init__(self):
        if self.kind not in ("hmc", "mh"):
            raise DomainError(f"sampler kind must be 'hmc' or 'mh', got {self.kind!r}")
        if self.n_draws < 1:
            raise DomainError("n_draws must be positive")
        if self.n_warmup < 0:
            raise DomainError("n_warmup must be non-negative")
        if self.n_chains < 1:
            raise DomainError("n_chains must be positive")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise DomainError("seed must fit an unsigned 64-bit integer")
        if not self.step_size > 0:
            raise DomainError("step_size must be > 0")
        if self.n_leapfrog < 1:
            raise DomainError("n_leapfrog must be positive")
        scales = np.atleast_1d(np.asarray(self.proposal_scale, dtype=float))
        if not np.all(scales > 0):
            raise DomainError("proposal_scale entries must be > 0")


@dataclass
class Chain:
    draws: np.ndarray               # (n_draws, n_params)
    param_names: tuple[str, ...]
    acceptance_rate: float
    divergence_count: int
    seed: int
    thinning_applied: int = 1
    chain_index: int = 0

    def __post_init__(self):
        if not np.all(np.isfinite(self.draws)):
            raise DomainError("chain contains non-finite draws")

    @property
    def n_draws(self) -> int:
        return self.draws.shape[0]

    def column(self, parameter: str) -> np.ndarray:
        try:
            j = self.param_names.index(parameter)
        except ValueError:
            raise KeyError(f"unknown parameter {parameter!r}") from None
        return self.draws[:, j]


@dataclass(frozen=True)
class Target:
    """Log-density (and optionally gradient) the samplers draw from."""

    dim: int
    logpdf: Callable[[np.ndarray], float]
    logpdf_and_grad: Callable[[np.ndarray], tuple[float, np.ndarray]] | None = None
    bounds: tuple[np.ndarray, np.ndarray] | None = None
    init: np.ndarray | None = None
    param_names: tuple[str, ...] | None = None

    def names(self) -> tuple[str, ...]:
        if self.param_names is not None:
            return self.param_names
        return tuple(f"x{i}" for i in range(self.dim))


def target_from_distributions(dists: Sequence[Distribution],
                              init=None,
                              names: tuple[str, ...] | None = None) -> Target:
    """Product target of independent 1-D distributions (for tests and checks)."""
    dists = list(dists)
    dim = len(dists)
    if init is None:
        init = np.array([d.mean for d in dists])

    def logpdf(theta):
        total = 0.0
        for x, d in zip(theta, dists):
            lp = d.logpdf(float(x))
            if lp == float("-inf"):
                return float("-inf")
            total += lp
        return total

    def logpdf_and_grad(theta):
        duals = dual.DualVector.seed(theta)
        total = dual.DualVector(0.0, np.zeros(dim))
        for x, d in zip(duals, dists):
            lp = d.logpdf(x)
            if not isinstance(lp, dual.DualVector):
                return float("-inf"), np.zeros(dim)
            total = total + lp
        return total.value, total.partials

    return Target(dim=dim, logpdf=logpdf, logpdf_and_grad=logpdf_and_grad,
                  init=np.asarray(init, dtype=float), param_names=names)


def chain_rng(seed: int, chain_index: int = 0) -> np.random.Generator:
    """Philox generator on the sub-stream for one chain."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(chain_index),))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *key: int) -> int:
    """Deterministic 64-bit sub-seed from a master seed and an index path."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])


# ---------------------------------------------------------------------------
# leapfrog integrator


def leapfrog(theta, momentum, step_size: float, n_steps: int,
             gradient_fn: Callable[[np.ndarray], np.ndarray],
             logpdf: Callable[[np.ndarray], float] | None = None,
             divergence_threshold: float = DIVERGENCE_THRESHOLD):
    """Volume-preserving, time-reversible leapfrog update.

    Half momentum step, ``n_steps`` alternating position/momentum steps,
    half momentum step. When ``logpdf`` is supplied the Hamiltonian error of
    the whole trajectory is checked and :class:`DivergenceSignal` raised if
    it exceeds ``divergence_threshold``; a non-finite gradient anywhere also
    signals divergence.
    """
    if not step_size > 0:
        raise DomainError("step_size must be > 0")
    if n_steps < 1:
        raise DomainError("n_steps must be positive")
    theta = np.array(theta, dtype=float)
    p = np.array(momentum, dtype=float)
    h0 = None
    if logpdf is not None:
        h0 = -logpdf(theta) + 0.5 * float(p @ p)

    def grad(x):
        g = np.asarray(gradient_fn(x), dtype=float)
        if not np.all(np.isfinite(g)):
            raise DivergenceSignal("non-finite gradient during leapfrog trajectory")
        return g

    p = p + 0.5 * step_size * grad(theta)
    for step in range(n_steps):
        theta = theta + step_size * p
        factor = 1.0 if step < n_steps - 1 else 0.5
        p = p + factor * step_size * grad(theta)
    if h0 is not None:
        h1 = -logpdf(theta) + 0.5 * float(p @ p)
        delta_h = h1 - h0
        if not abs(delta_h) <= divergence_threshold:
            raise DivergenceSignal(
                f"|Hamiltonian error| {abs(delta_h):.3g} above "
                f"{divergence_threshold}", delta_h=delta_h)
    return theta, p


# ---------------------------------------------------------------------------
# samplers


def _resolve_init(target: Target, init) -> np.ndarray:
    if init is None:
        init = target.init
    if init is None:
        raise InitializationError("no starting point: pass init or set Target.init")
    init = np.asarray(init, dtype=float)
    if init.shape != (target.dim,):
        raise DomainError(f"init has shape {init.shape}, target dimension {target.dim}")
    return init.copy()


def hmc_sample(target: Target, cfg: SamplerConfig, init=None,
               chain_index: int = 0) -> Chain:
    """Hamiltonian Monte Carlo with standard-normal momenta and a fixed
    step size / trajectory length (no adaptation)."""
    if cfg.kind != "hmc":
        raise DomainError(f"hmc_sample called with kind {cfg.kind!r}")
    if target.logpdf_and_grad is None:
        raise DomainError("HMC requires a target with logpdf_and_grad")
    theta = _resolve_init(target, init)
    lp, g = target.logpdf_and_grad(theta)
    if not math.isfinite(lp):
        raise InitializationError(f"init point has log-density {lp}")
    if not np.all(np.isfinite(g)):
        raise NonFiniteGradientError("gradient at the init point is not finite")

    rng = chain_rng(cfg.seed, chain_index)
    grad_fn = lambda x: target.logpdf_and_grad(x)[1]
    draws = np.empty((cfg.n_draws, target.dim))
    accepted = 0
    divergences = 0
    for it in range(cfg.n_warmup + cfg.n_draws):
        in_draws = it >= cfg.n_warmup
        p = rng.standard_normal(target.dim)
        h0 = -lp + 0.5 * float(p @ p)
        divergent = False
        try:
            # ΔH bookkeeping happens here (leapfrog already has lp cached),
            # so the integrator only signals on non-finite gradients.
            theta_new, p_new = leapfrog(theta, p, cfg.step_size, cfg.n_leapfrog,
                                        grad_fn)
        except DivergenceSignal:
            divergent = True
        if not divergent:
            lp_new = target.logpdf(theta_new)
            h1 = -lp_new + 0.5 * float(p_new @ p_new)
            delta_h = h1 - h0
            if not abs(delta_h) <= DIVERGENCE_THRESHOLD:
                divergent = True
        if divergent:
            if in_draws:
                divergences += 1
        else:
            if delta_h <= 0.0 or rng.random() < math.exp(-delta_h):
                theta, lp = theta_new, lp_new
                if in_draws:
                    accepted += 1
        if in_draws:
            draws[it - cfg.n_warmup] = theta
    return Chain(draws=draws, param_names=target.names(),
                 acceptance_rate=accepted / cfg.n_draws,
                 divergence_count=divergences, seed=cfg.seed,
                 thinning_applied=1, chain_index=chain_index)


def _reflect(x: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Fold points back into [lo, hi]; keeps a symmetric random walk symmetric."""
    out = x.copy()
    both = np.isfinite(lo) & np.isfinite(hi)
    if np.any(both):
        span = hi[both] - lo[both]
        t = np.mod(out[both] - lo[both], 2.0 * span)
        out[both] = lo[both] + np.minimum(t, 2.0 * span - t)
    lo_only = np.isfinite(lo) & ~np.isfinite(hi)
    if np.any(lo_only):
        out[lo_only] = lo[lo_only] + np.abs(out[lo_only] - lo[lo_only])
    hi_only = ~np.isfinite(lo) & np.isfinite(hi)
    if np.any(hi_only):
        out[hi_only] = hi[hi_only] - np.abs(out[hi_only] - hi[hi_only])
    return out


def mh_sample(target: Target, cfg: SamplerConfig, init=None,
              chain_index: int = 0) -> Chain:
    """Gaussian random-walk Metropolis-Hastings with per-parameter scales."""
    if cfg.kind != "mh":
        raise DomainError(f"mh_sample called with kind {cfg.kind!r}")
    theta = _resolve_init(target, init)
    lp = target.logpdf(theta)
    if not math.isfinite(lp):
        raise InitializationError(f"init point has log-density {lp}")

    raw_scale = np.atleast_1d(np.asarray(cfg.proposal_scale, dtype=float))
    if raw_scale.size not in (1, target.dim):
        raise DomainError(
            f"proposal_scale has {raw_scale.size} entries, target dimension {target.dim}")
    scale = np.broadcast_to(raw_scale, (target.dim,)).copy()
    rng = chain_rng(cfg.seed, chain_index)
    bounds = target.bounds
    draws = np.empty((cfg.n_draws, target.dim))
    accepted = 0
    for it in range(cfg.n_warmup + cfg.n_draws):
        in_draws = it >= cfg.n_warmup
        proposal = theta + scale * rng.standard_normal(target.dim)
        if bounds is not None:
            proposal = _reflect(proposal, bounds[0], bounds[1])
        lp_new = target.logpdf(proposal)
        delta = lp_new - lp
        if delta >= 0.0 or rng.random() < math.exp(delta):
            theta, lp = proposal, lp_new
            if in_draws:
                accepted += 1
        if in_draws:
            draws[it - cfg.n_warmup] = theta
    return Chain(draws=draws, param_names=target.names(),
                 acceptance_rate=accepted / cfg.n_draws,
                 divergence_count=0, seed=cfg.seed,
                 thinning_applied=1, chain_index=chain_index)


_SAMPLERS = {"hmc": hmc_sample, "mh": mh_sample}


def run_chains(target: Target, cfg: SamplerConfig, init=None) -> list[Chain]:
    """Run ``cfg.n_chains`` independent chains on deterministic sub-streams.

    Chain ``i`` uses the Philox stream keyed by ``(cfg.seed, i)``; results
    are ordered by chain index. Errors are re-raised tagged with the index.
    """
    sampler = _SAMPLERS[cfg.kind]
    chains: list[Chain] = []
    for i in range(cfg.n_chains):
        try:
            chains.append(sampler(target, cfg, init=init, chain_index=i))
        except Exception as e:
            raise type(e)(f"chain {i}: {e}") from e
    return chains
