"""Chain quality diagnostics: autocorrelation, thinning, ESS, split R-hat."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import (
    DomainError,
    InsufficientDataError,
    NoFiniteThinningError,
    ShapeError,
)
from .samplers import Chain

DEFAULT_THRESHOLD_BAND = 0.1
_THINNING_MAX_LAG = 20


@dataclass(frozen=True)
class AcfReport:
    parameter: str
    lags: np.ndarray
    acf: np.ndarray
    threshold_band: float
    first_lag_within_band: int
    """Smallest lag from which all further |acf| values stay inside the band;
    ``max_lag + 1`` when the band is never reached."""


def _acf_values(x: np.ndarray, max_lag: int) -> np.ndarray:
    """Normalized sample autocovariance with divide-by-N normalization."""
    n = x.size
    d = x - x.mean()
    c0 = float(d @ d) / n
    if c0 == 0.0:
        raise DomainError("zero variance: constant chain has no autocorrelation")
    out = np.empty(max_lag + 1)
    out[0] = 1.0
    for k in range(1, max_lag + 1):
        out[k] = float(d[:-k] @ d[k:]) / n / c0
    return out


def autocorrelation(chain: Chain, parameter: str, max_lag: int,
                    threshold_band: float = DEFAULT_THRESHOLD_BAND) -> AcfReport:
    """Autocorrelation function of one parameter up to ``max_lag``."""
    if max_lag < 1:
        raise InsufficientDataError("max_lag must be >= 1")
    x = chain.column(parameter)
    if x.size <= max_lag:
        raise InsufficientDataError(
            f"chain length {x.size} must exceed max_lag {max_lag}")
    acf = _acf_values(x, max_lag)
    within = np.abs(acf) <= threshold_band
    first = max_lag + 1
    for k in range(max_lag, -1, -1):
        if not within[k]:
            break
        first = k
    return AcfReport(parameter=parameter, lags=np.arange(max_lag + 1), acf=acf,
                     threshold_band=threshold_band, first_lag_within_band=first)


def thin(chain: Chain, n: int) -> Chain:
    """Keep draws at indices 0, n, 2n, ...; metadata otherwise preserved."""
    if n < 1:
        raise DomainError(f"thinning factor must be >= 1, got {n}")
    if n == 1:
        return chain
    return replace(chain, draws=chain.draws[::n].copy(),
                   thinning_applied=chain.thinning_applied * n)


def required_thinning(chain: Chain, threshold_band: float = DEFAULT_THRESHOLD_BAND,
                      parameter: str | None = None) -> int:
    """Smallest factor whose thinned chain keeps |acf| within the band.

    The band must hold for every parameter (or just ``parameter`` when
    given) at all lags 1..min(20, thinned_length / 10). Factors above a
    tenth of the chain length are not considered.
    """
    n_total = chain.n_draws
    if n_total < 100:
        raise InsufficientDataError(f"need at least 100 draws, got {n_total}")
    params = (parameter,) if parameter is not None else chain.param_names
    for factor in range(1, n_total // 10 + 1):
        thinned = chain.draws[::factor]
        max_lag = min(_THINNING_MAX_LAG, thinned.shape[0] // 10)
        if max_lag < 1:
            break
        ok = True
        for p in params:
            j = chain.param_names.index(p)
            acf = _acf_values(thinned[:, j], max_lag)
            if np.any(np.abs(acf[1:]) > threshold_band):
                ok = False
                break
        if ok:
            return factor
    raise NoFiniteThinningError(
        f"no thinning factor <= {n_total // 10} keeps |acf| within {threshold_band}")


def effective_sample_size(chain: Chain, parameter: str) -> float:
    """ESS via the initial-positive-sequence truncated autocorrelation sum.

    Consecutive lag pairs (acf[2m], acf[2m+1]) are summed while positive;
    the integrated autocorrelation time is clamped at 1 so ESS never
    exceeds the draw count.
    """
    x = chain.column(parameter)
    n = x.size
    if n < 100:
        raise InsufficientDataError(f"need at least 100 draws, got {n}")
    d = x - x.mean()
    c0 = float(d @ d) / n
    if c0 == 0.0:
        raise DomainError("zero variance: constant chain has no ESS")

    def rho(k: int) -> float:
        return float(d[:-k] @ d[k:]) / n / c0 if k > 0 else 1.0

    tau = 0.0
    m = 0
    while 2 * m + 1 <= n - 2:
        pair = rho(2 * m) + rho(2 * m + 1)
        if pair <= 0.0:
            break
        tau += 2.0 * pair
        m += 1
    tau = max(tau - 1.0, 1.0)
    return n / tau


def split_rhat(chains: Sequence[Chain], parameter: str) -> float:
    """Split R-hat: each chain is halved, then the classic between/within
    variance ratio is computed over the half-chains."""
    if len(chains) < 2:
        raise ShapeError("split_rhat needs at least two chains")
    lengths = {c.n_draws for c in chains}
    if len(lengths) != 1:
        raise ShapeError(f"chains have unequal lengths {sorted(lengths)}")
    n_total = lengths.pop()
    if n_total < 4:
        raise ShapeError(f"chains must have length >= 4, got {n_total}")
    half = n_total // 2
    segments = []
    for c in chains:
        x = c.column(parameter)
        segments.append(x[:half])
        segments.append(x[half:2 * half])
    seg = np.asarray(segments)
    m, n = seg.shape
    within = float(np.mean(np.var(seg, axis=1, ddof=1)))
    if within == 0.0:
        raise DomainError("zero variance: constant segments have no R-hat")
    between = n * float(np.var(np.mean(seg, axis=1), ddof=1))
    var_plus = (n - 1) / n * within + between / n
    return float(np.sqrt(var_plus / within))
