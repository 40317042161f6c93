"""Value-at-Risk and CoVaR estimation, empirical and model-based.

VaR uses the generalized-inverse convention throughout: the eta-quantile of a
sample of size N is the order statistic with index ceil(eta * N), the
smallest observation whose empirical cdf reaches eta.  CoVaR_{alpha,beta}(Y_j
| Y_i) is the alpha-quantile of Y_j restricted to the stress event {Y_i >=
VaR_beta(Y_i)}.

Model-based estimates re-threshold fitted-model samples at the beta-level
VaR vector.  Because that event sits inside the union exceedance region when
VaR_beta(Y_i) >= tau_i, conditional quantiles computed on model samples
approximate the data quantities; uncertainty comes from replicate batches the
size of the original exceedance data.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DataError, InputError
from .model import GPDFlowModel

DEFAULT_REPLICATES = 100
POINT_ESTIMATE_MC = 100_000


@dataclass(frozen=True)
class CoVaRQuery:
    """Which conditional quantile to estimate.

    target is the component whose quantile is reported, conditioning the
    component whose stress event {Y_i >= VaR_beta} defines the restriction.
    """

    target: int
    conditioning: int
    alpha: float
    beta: float

    def __post_init__(self):
        if self.target == self.conditioning:
            raise InputError("target and conditioning components must differ")
        if self.target < 0 or self.conditioning < 0:
            raise InputError("component indices must be nonnegative")
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not (0.0 < v < 1.0) or not np.isfinite(v):
                raise InputError(f"{name} must lie in (0, 1)")

    def check_dim(self, dim: int) -> None:
        if self.target >= dim or self.conditioning >= dim:
            raise InputError(
                f"query indices ({self.target}, {self.conditioning}) exceed "
                f"data dimension {dim}"
            )


@dataclass(frozen=True)
class RiskEstimate:
    """A point estimate with an optional Monte Carlo percentile band."""

    point: float
    level: float = 0.95
    lo: Optional[float] = None
    hi: Optional[float] = None
    replicates: int = 0

    def __post_init__(self):
        if (self.lo is None) != (self.hi is None):
            raise InputError("band bounds must be given together")
        if self.lo is not None and self.lo > self.hi:
            raise InputError("band lower bound exceeds upper bound")


def var(samples, eta: float) -> float:
    """Empirical VaR: smallest order statistic with empirical cdf >= eta."""
    samples = np.asarray(samples, dtype=np.float64).ravel()
    if samples.size == 0:
        raise InputError("cannot take a quantile of an empty sample")
    if not (0.0 < eta < 1.0):
        raise InputError("quantile level must lie in (0, 1)")
    if not np.all(np.isfinite(samples)):
        raise InputError("samples must be finite")
    k = int(np.ceil(eta * samples.size))
    return float(np.partition(samples, k - 1)[k - 1])


def covar_empirical(data, query: CoVaRQuery) -> RiskEstimate:
    """CoVaR from raw rows: alpha-quantile of the target column among rows
    where the conditioning column reaches its beta-level VaR."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise InputError("data must be a matrix of rows")
    query.check_dim(data.shape[1])
    stress = var(data[:, query.conditioning], query.beta)
    subset = data[data[:, query.conditioning] >= stress, query.target]
    if subset.size < 20:
        raise DataError(
            f"conditioning set has only {subset.size} rows; need at least 20"
        )
    return RiskEstimate(point=var(subset, query.alpha))


def _replicate_covar(model, batch, query, tau, var_beta):
    """One replicate: conditional quantile on doubly-shifted model samples."""
    cond = batch[:, query.conditioning] >= var_beta[query.conditioning] - tau[query.conditioning]
    subset = batch[cond, query.target]
    if subset.size == 0:
        return None
    return var(subset, query.alpha) + tau[query.target]


def covar_model(
    model: GPDFlowModel,
    var_beta,
    query: CoVaRQuery,
    n_mc: Optional[int] = None,
    replicates: int = DEFAULT_REPLICATES,
    seed=0,
    level: float = 0.95,
) -> RiskEstimate:
    """Model-based CoVaR with replicate uncertainty.

    ``var_beta`` is the beta-level VaR vector of the full data in original
    units; it must sit at or above the model threshold componentwise so the
    stress event lies inside the exceedance region the model describes.
    Each replicate draws a batch (by default the size of the fitting data,
    else ``n_mc``), restricts to the conditioning exceedance, and records the
    translated conditional quantile.  Reported: replicate mean with a
    percentile band at ``level``.
    """
    if model.threshold is None:
        raise InputError("model carries no threshold; fit via an exceedance dataset")
    tau = np.asarray(model.threshold, dtype=np.float64)
    var_beta = np.asarray(var_beta, dtype=np.float64)
    if var_beta.shape != tau.shape:
        raise InputError("VaR vector length does not match model dimension")
    query.check_dim(tau.size)
    if np.any(var_beta < tau):
        j = int(np.argmax(var_beta < tau))
        raise InputError(
            f"stress VaR {var_beta[j]:.6g} for component {j} is below the "
            f"model threshold {tau[j]:.6g}; raise beta"
        )
    if replicates < 1:
        raise InputError("need at least one replicate")
    if n_mc is None:
        if replicates == 1:
            n_mc = POINT_ESTIMATE_MC
        else:
            info = model.fit_info or {}
            n_mc = int(info.get("n_obs", 0))
            if n_mc <= 0:
                raise InputError(
                    "model has no recorded fitting size; pass n_mc explicitly"
                )
    seeds = np.random.SeedSequence(seed).spawn(replicates)
    estimates = []
    dropped = 0
    for s in seeds:
        batch = model.sample(n_mc, seed=np.random.default_rng(s))
        est = _replicate_covar(model, batch, query, tau, var_beta)
        if est is None:
            dropped += 1
        else:
            estimates.append(est)
    if dropped:
        warnings.warn(
            f"{dropped} of {replicates} replicates had an empty conditioning "
            "set and were dropped",
            RuntimeWarning,
        )
    if not estimates:
        raise DataError("every replicate produced an empty conditioning set")
    estimates = np.asarray(estimates)
    if estimates.size == 1:
        return RiskEstimate(point=float(estimates[0]), level=level, replicates=1)
    tail = 100.0 * (1.0 - level) / 2.0
    lo, hi = np.percentile(estimates, [tail, 100.0 - tail])
    return RiskEstimate(
        point=float(estimates.mean()),
        level=level,
        lo=float(lo),
        hi=float(hi),
        replicates=int(estimates.size),
    )


@dataclass(frozen=True)
class EventConstraint:
    """One coordinatewise constraint Y_index (side) level, in data units."""

    index: int
    side: str
    level: float

    def __post_init__(self):
        if self.side not in (">", "<"):
            raise InputError("constraint side must be '>' or '<'")
        if self.index < 0:
            raise InputError("component index must be nonnegative")
        if not np.isfinite(self.level):
            raise InputError("constraint level must be finite")


def partial_exceedance_probability(
    model: GPDFlowModel,
    raw_data,
    constraints: Sequence[EventConstraint],
    n_mc: int = POINT_ESTIMATE_MC,
    seed=0,
) -> float:
    """P(all constraints hold) for events inside the exceedance region.

    Decomposes into P(event | union exceedance) x P(union exceedance).  The
    first factor is Monte Carlo over model samples (whose support is exactly
    the union region); the second is the empirical exceedance fraction of the
    raw data.  Unless the constraint list is empty (the whole support), at
    least one '>' constraint must sit at or above the model threshold so the
    event is contained in the union region and the decomposition is exact.
    """
    if model.threshold is None:
        raise InputError("model carries no threshold; fit via an exceedance dataset")
    tau = np.asarray(model.threshold, dtype=np.float64)
    raw = np.asarray(raw_data, dtype=np.float64)
    if raw.ndim != 2 or raw.shape[1] != tau.size:
        raise InputError("raw data dimension does not match the model")
    for c in constraints:
        if c.index >= tau.size:
            raise InputError(f"constraint index {c.index} exceeds dimension {tau.size}")
    if constraints and not any(
        c.side == ">" and c.level >= tau[c.index] for c in constraints
    ):
        raise InputError(
            "event lies below the model threshold in every component; "
            "no '>' constraint reaches the threshold"
        )
    p_union = float(np.mean(np.any(raw > tau, axis=1)))
    if not constraints:
        return p_union
    batch = model.sample(n_mc, seed=seed)
    ok = np.ones(n_mc, dtype=bool)
    for c in constraints:
        shifted = c.level - tau[c.index]
        if c.side == ">":
            ok &= batch[:, c.index] > shifted
        else:
            ok &= batch[:, c.index] < shifted
    return float(ok.mean()) * p_union
