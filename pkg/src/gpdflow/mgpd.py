"""Core multivariate generalized Pareto machinery.

A d-variate GP vector X on the exceedance scale is represented through a
standardized vector Z with X_j = sigma_j (exp(gamma_j Z_j) - 1) / gamma_j.
The standardized density is

    h(z) = 1{max_j z_j > 0} exp(-max_j z_j) * I(z),
    I(z) = integral over s of f_T(z + s 1) ds,

where f_T is the density of the dependence generator T.  Sampling uses the
constructive form Z = E + T - max_j T_j with E a unit exponential.

The integral I(z) is one dimensional whatever d is.  It is computed by a
fixed recipe: scan a coarse grid of offsets s, locate the peak of the log
integrand, widen a window on each side until the log integrand has dropped
``drop_nats`` below the peak (clipped to the scan range), then apply an
N-node trapezoid rule accumulated in log space.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, InputError, NumericError, SupportError

__all__ = [
    "GAMMA_TOL",
    "MarginalParams",
    "QuadratureConfig",
    "GeneratorSampler",
    "standardize",
    "unstandardize",
    "sample_standardized",
    "quadrature_plan",
    "log_density_standardized",
    "log_density_standardized_batch",
]

GAMMA_TOL = 1e-6
"""Shape parameters smaller than this in absolute value use the gamma -> 0
limit x = sigma * z of the marginal transform."""

_LOG_TINY = np.log(1e-300)


@dataclass(frozen=True)
class MarginalParams:
    """Per-component scale and shape of the exceedance margins."""

    sigma: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        sig = np.atleast_1d(np.asarray(self.sigma, dtype=np.float64))
        gam = np.atleast_1d(np.asarray(self.gamma, dtype=np.float64))
        if sig.ndim != 1 or gam.ndim != 1 or sig.shape != gam.shape:
            raise InputError("sigma and gamma must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(sig)) and np.all(np.isfinite(gam))):
            raise InputError("marginal parameters must be finite")
        if np.any(sig <= 0.0):
            raise InputError("sigma must be strictly positive")
        object.__setattr__(self, "sigma", sig)
        object.__setattr__(self, "gamma", gam)

    @property
    def dim(self) -> int:
        return self.sigma.size


@dataclass(frozen=True)
class QuadratureConfig:
    """Recipe for the one-dimensional dependence integral.

    scan_lo, scan_hi, scan_points define the coarse peak-location grid;
    drop_nats is how far below the peak the log integrand must fall before
    the integration window closes; nodes is the trapezoid resolution.
    """

    scan_lo: float = -50.0
    scan_hi: float = 50.0
    scan_points: int = 101
    drop_nats: float = 40.0
    nodes: int = 200

    def __post_init__(self):
        if not self.scan_lo < self.scan_hi:
            raise InputError("scan_lo must be below scan_hi")
        if self.scan_points < 2 or self.nodes < 2:
            raise InputError("scan_points and nodes must be at least 2")
        if self.drop_nats <= 0:
            raise InputError("drop_nats must be positive")


@dataclass(frozen=True)
class GeneratorSampler:
    """A dependence generator T: a sampler plus an optional log density.

    ``draw(n, rng)`` must return an (n, dim) array.  ``log_density`` maps an
    (m, dim) array of points to an (m,) array of log f_T values and is only
    required when densities, not just samples, are needed.
    """

    dim: int
    draw: Callable[[int, np.random.Generator], np.ndarray]
    log_density: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if self.dim < 1:
            raise InputError("generator dimension must be at least 1")


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def standardize(x, margins: MarginalParams) -> np.ndarray:
    """Map exceedance-scale points to the standardized scale.

    z_j = log(|gamma_j x_j / sigma_j + 1|) / gamma_j, with the limit
    z_j = x_j / sigma_j when |gamma_j| < GAMMA_TOL.  Raises DomainError when
    gamma_j x_j / sigma_j = -1 exactly (the transform diverges there).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != margins.dim:
        raise InputError(
            f"point dimension {x.shape[-1]} does not match margins ({margins.dim})"
        )
    sig, gam = margins.sigma, margins.gamma
    small = np.abs(gam) < GAMMA_TOL
    gam_safe = np.where(small, 1.0, gam)
    w = gam * x / sig
    v = 1.0 + w
    with np.errstate(divide="ignore", invalid="ignore"):
        bent = np.where(v > 0, np.log1p(w), np.log(np.abs(v))) / gam_safe
    z = np.where(small, x / sig, bent)
    if not np.all(np.isfinite(z)):
        raise DomainError(
            "standardize diverges where gamma * x / sigma equals -1"
        )
    return z


def unstandardize(z, margins: MarginalParams) -> np.ndarray:
    """Inverse of :func:`standardize`: x_j = sigma_j expm1(gamma_j z_j) / gamma_j."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != margins.dim:
        raise InputError(
            f"point dimension {z.shape[-1]} does not match margins ({margins.dim})"
        )
    if not np.all(np.isfinite(z)):
        raise InputError("standardized points must be finite")
    sig, gam = margins.sigma, margins.gamma
    small = np.abs(gam) < GAMMA_TOL
    gam_safe = np.where(small, 1.0, gam)
    with np.errstate(over="ignore"):
        bent = sig * np.expm1(gam_safe * z) / gam_safe
    x = np.where(small, sig * z, bent)
    if not np.all(np.isfinite(x)):
        raise DomainError("unstandardize overflowed (gamma * z too large)")
    return x


def sample_standardized(gen: GeneratorSampler, n: int, seed=0) -> np.ndarray:
    """Draw n standardized vectors Z = E + T - max_j T_j, E ~ Exp(1).

    ``seed`` may be an integer or a numpy Generator; pass independently
    spawned Generators to parallelize draws reproducibly.
    """
    if n < 1:
        raise InputError("sample size must be positive")
    rng = _as_rng(seed)
    t = np.asarray(gen.draw(n, rng), dtype=np.float64)
    if t.shape != (n, gen.dim):
        raise InputError(
            f"generator draw returned shape {t.shape}, expected {(n, gen.dim)}"
        )
    e = rng.exponential(size=n)
    return t + (e - t.max(axis=1))[:, None]


def quadrature_plan(
    log_f: Callable[[np.ndarray], np.ndarray],
    z: np.ndarray,
    cfg: QuadratureConfig,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-row integration nodes and trapezoid weights for I(z).

    For each row z_i the coarse scan locates the peak of s -> log f_T(z_i + s),
    the window extends to the nearest scan points at which the log integrand
    has dropped ``drop_nats`` below the peak (or the scan edge), and the
    window is then divided into ``nodes`` equispaced trapezoid nodes.
    Returns (nodes, weights), both of shape (n, cfg.nodes).
    """
    z = np.asarray(z, dtype=np.float64)
    n, d = z.shape
    s = np.linspace(cfg.scan_lo, cfg.scan_hi, cfg.scan_points)
    p = s.size
    pts = (z[:, None, :] + s[None, :, None]).reshape(n * p, d)
    lf = np.asarray(log_f(pts), dtype=np.float64).reshape(n, p)
    peak_idx = np.argmax(lf, axis=1)
    peak = lf[np.arange(n), peak_idx]
    if not np.all(np.isfinite(peak)):
        raise NumericError(
            "generator density vanishes everywhere on the scan range"
        )
    below = lf < (peak - cfg.drop_nats)[:, None]
    jj = np.arange(p)
    mask_left = below & (jj[None, :] <= peak_idx[:, None])
    lo_idx = np.where(
        mask_left.any(axis=1),
        p - 1 - np.argmax(mask_left[:, ::-1], axis=1),
        0,
    )
    mask_right = below & (jj[None, :] >= peak_idx[:, None])
    hi_idx = np.where(mask_right.any(axis=1), np.argmax(mask_right, axis=1), p - 1)
    lo, hi = s[lo_idx], s[hi_idx]
    frac = np.linspace(0.0, 1.0, cfg.nodes)
    nodes = lo[:, None] + (hi - lo)[:, None] * frac[None, :]
    h = (hi - lo) / (cfg.nodes - 1)
    tw = np.ones(cfg.nodes)
    tw[0] = tw[-1] = 0.5
    weights = h[:, None] * tw[None, :]
    return nodes, weights


def _log_trapezoid(lf: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Row-wise log of sum(weights * exp(lf)), accumulated stably."""
    m = np.max(lf, axis=1)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        total = np.sum(weights * np.exp(lf - m[:, None]), axis=1)
        return m + np.log(total)


def log_density_standardized_batch(
    z: np.ndarray,
    log_f: Callable[[np.ndarray], np.ndarray],
    cfg: QuadratureConfig | None = None,
) -> np.ndarray:
    """log h(z) for a batch of standardized points, shape (n, d) -> (n,).

    Every row must be on the support (max_j z_j > 0); callers that need
    per-row handling should mask beforehand.
    """
    if cfg is None:
        cfg = QuadratureConfig()
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2:
        raise InputError("expected a 2-d array of standardized points")
    if not np.all(np.isfinite(z)):
        raise InputError("standardized points must be finite")
    supp = z.max(axis=1)
    if np.any(supp <= 0.0):
        bad = int(np.argmax(supp <= 0.0))
        raise SupportError(
            f"row {bad} has max(z) <= 0, outside the exceedance support"
        )
    nodes, weights = quadrature_plan(log_f, z, cfg)
    n, s = nodes.shape
    pts = (z[:, None, :] + nodes[:, :, None]).reshape(n * s, z.shape[1])
    lf = np.asarray(log_f(pts), dtype=np.float64).reshape(n, s)
    log_i = _log_trapezoid(lf, weights)
    if np.any(log_i < _LOG_TINY):
        raise NumericError("dependence integral underflowed below 1e-300")
    return log_i - supp


def log_density_standardized(
    z: np.ndarray,
    log_f: Callable[[np.ndarray], np.ndarray],
    cfg: QuadratureConfig | None = None,
) -> float:
    """log h(z) at a single standardized point."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1:
        raise InputError("expected a single standardized point")
    return float(log_density_standardized_batch(z[None, :], log_f, cfg)[0])
