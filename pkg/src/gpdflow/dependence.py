"""Tail-dependence diagnostics.

Generator-based functionals use draws of the dependence generator T.  With
V'_j = exp(T_j - max_k T_k) normalized to unit column means, Monte Carlo
averages give

    stdf l(x)      = E max_j x_j V_j     (stable tail dependence function),
    tail copula R(x) = E min_j x_j V_j,
    chi_{1:d} = R(1, ..., 1),   omega_{1:d} = l(1, ..., 1),

so chi + omega = 2 holds exactly for d = 2 on any draw set.  For
exchangeable bivariate generators chi also equals 2 m / (1 + m) with
m = E exp(-|T_1 - T_2|), a useful independent estimate of the same number.

Empirical counterparts map each margin to strictly-less ranks U_ij =
#{k: x_kj < x_ij} / N and count joint and union exceedances of a quantile
level q:

    chi_hat(q)   = #{i: min_j U_ij > q} / (N (1 - q)),
    omega_hat(q) = #{i: max_j U_ij > q} / (N (1 - q)).

For an exact mGPD sample both are flat in q above the threshold level;
flatness of the empirical curves is the threshold-selection signal.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DataError, InputError
from .mgpd import GeneratorSampler

__all__ = [
    "normalized_profile",
    "stdf",
    "tail_copula",
    "chi_from_draws",
    "omega_from_draws",
    "pairwise_chi",
    "exchangeable_chi",
    "chi_omega",
    "empirical_ranks",
    "empirical_chi_omega",
    "default_q_grid",
    "bootstrap_bands",
    "DependenceReport",
    "empirical_report",
]

MC_DEFAULT = 1_000_000


def _check_draws(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    if t.ndim != 2 or t.shape[0] < 2:
        raise InputError("generator draws must form an (m, d) array, m >= 2")
    if not np.all(np.isfinite(t)):
        raise InputError("generator draws must be finite")
    return t


def normalized_profile(t: np.ndarray) -> np.ndarray:
    """V_j = exp(T_j - max_k T_k) scaled so every column has mean one."""
    t = _check_draws(t)
    v = np.exp(t - t.max(axis=1, keepdims=True))
    means = v.mean(axis=0)
    if np.any(means <= 0.0):
        raise DataError("degenerate generator draws: a profile column is zero")
    return v / means


def stdf(x: np.ndarray, t: np.ndarray) -> float:
    """Stable tail dependence function l(x) = E max_j x_j V_j, x >= 0."""
    x = np.asarray(x, dtype=np.float64)
    v = normalized_profile(t)
    if x.shape != (v.shape[1],):
        raise InputError(f"x must be a vector of length {v.shape[1]}")
    if np.any(x < 0.0) or not np.all(np.isfinite(x)):
        raise InputError("stdf arguments must be finite and non-negative")
    return float((x * v).max(axis=1).mean())


def tail_copula(x: np.ndarray, t: np.ndarray) -> float:
    """Joint-exceedance analogue R(x) = E min_j x_j V_j, x >= 0."""
    x = np.asarray(x, dtype=np.float64)
    v = normalized_profile(t)
    if x.shape != (v.shape[1],):
        raise InputError(f"x must be a vector of length {v.shape[1]}")
    if np.any(x < 0.0) or not np.all(np.isfinite(x)):
        raise InputError("tail copula arguments must be finite and non-negative")
    return float((x * v).min(axis=1).mean())


def chi_from_draws(t: np.ndarray) -> float:
    """chi_{1:d}: all-components-extreme coefficient from generator draws."""
    v = normalized_profile(t)
    return float(v.min(axis=1).mean())


def omega_from_draws(t: np.ndarray) -> float:
    """omega_{1:d}: union-exceedance coefficient, between 1 and d."""
    v = normalized_profile(t)
    return float(v.max(axis=1).mean())


def pairwise_chi(t: np.ndarray) -> np.ndarray:
    """Matrix of pairwise chi coefficients (unit diagonal).

    The bivariate margin of a d-dimensional model keeps the full-dimension
    spectral profile: chi_ij = E min(V_i, V_j) with V normalized over all d
    components.  Restricting T to two columns first and renormalizing would
    describe a different (purely bivariate) model and gives wrong values
    for d > 2.
    """
    t = _check_draws(t)
    v = normalized_profile(t)
    d = t.shape[1]
    out = np.eye(d)
    for i in range(d):
        for j in range(i + 1, d):
            out[i, j] = out[j, i] = float(
                np.minimum(v[:, i], v[:, j]).mean()
            )
    return out


def exchangeable_chi(t: np.ndarray) -> float:
    """Bivariate chi via the exchangeable shortcut 2m/(1+m) with
    m = E exp(-|T_1 - T_2|).  Valid when the two generator coordinates are
    exchangeable; it then agrees with chi_from_draws in expectation."""
    t = _check_draws(t)
    if t.shape[1] != 2:
        raise InputError("the exchangeable shortcut is bivariate")
    m = float(np.exp(-np.abs(t[:, 0] - t[:, 1])).mean())
    return 2.0 * m / (1.0 + m)


def chi_omega(
    gen: GeneratorSampler, m: int = MC_DEFAULT, seed=0
) -> tuple[float, float]:
    """Draw m generator samples and return (chi_{1:d}, omega_{1:d})."""
    if m < 2:
        raise InputError("need at least 2 draws")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    t = gen.draw(m, rng)
    return chi_from_draws(t), omega_from_draws(t)


# ---------------------------------------------------------------------------
# empirical side


def empirical_ranks(data: np.ndarray) -> np.ndarray:
    """Strictly-less normalized ranks per column: U_ij = #{k: x_kj < x_ij}/N."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < 2:
        raise DataError("data must form an (n, d) array with n >= 2")
    if not np.all(np.isfinite(data)):
        raise DataError("data must be finite")
    n = data.shape[0]
    u = np.empty_like(data)
    for j in range(data.shape[1]):
        col = data[:, j]
        u[:, j] = np.searchsorted(np.sort(col), col, side="left") / n
    return u


def default_q_grid() -> np.ndarray:
    """Quantile levels 0.500, 0.505, ..., 0.995."""
    return np.linspace(0.5, 0.995, 100)


def _check_q(q_grid: np.ndarray) -> np.ndarray:
    q = np.atleast_1d(np.asarray(q_grid, dtype=np.float64))
    if np.any(q <= 0.0) or np.any(q >= 1.0):
        raise InputError("quantile levels must lie strictly inside (0, 1)")
    return q


def empirical_chi_omega(
    data: np.ndarray, q_grid: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Empirical chi_hat(q) and omega_hat(q) over a grid of levels."""
    q = _check_q(q_grid)
    u = empirical_ranks(data)
    n = u.shape[0]
    lo = np.sort(u.min(axis=1))
    hi = np.sort(u.max(axis=1))
    joint = n - np.searchsorted(lo, q, side="right")
    union = n - np.searchsorted(hi, q, side="right")
    denom = n * (1.0 - q)
    return joint / denom, union / denom


def bootstrap_bands(
    data: np.ndarray,
    q_grid: np.ndarray,
    n_boot: int = 200,
    level: float = 0.95,
    seed=0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Row-resampling percentile bands for the empirical curves.

    Returns (chi_lo, chi_hi, omega_lo, omega_hi) at the given coverage.
    """
    if n_boot < 100:
        raise InputError("bootstrap needs at least 100 replicates")
    if not 0.5 < level < 1.0:
        raise InputError("band level must lie in (0.5, 1)")
    data = np.asarray(data, dtype=np.float64)
    q = _check_q(q_grid)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = data.shape[0]
    chis = np.empty((n_boot, q.size))
    omegas = np.empty((n_boot, q.size))
    for b in range(n_boot):
        rows = rng.integers(0, n, size=n)
        chis[b], omegas[b] = empirical_chi_omega(data[rows], q)
    tail = 100.0 * (1.0 - level) / 2.0
    chi_lo, chi_hi = np.percentile(chis, [tail, 100.0 - tail], axis=0)
    om_lo, om_hi = np.percentile(omegas, [tail, 100.0 - tail], axis=0)
    return chi_lo, chi_hi, om_lo, om_hi


@dataclass(frozen=True)
class DependenceReport:
    """chi/omega curves over a quantile grid, with optional bootstrap bands.

    ``thin_tail`` flags levels where fewer than 10 observations remain above
    q; estimates there are dominated by discreteness.
    """

    q: np.ndarray
    chi: np.ndarray
    omega: np.ndarray
    n_obs: int
    chi_lo: Optional[np.ndarray] = None
    chi_hi: Optional[np.ndarray] = None
    omega_lo: Optional[np.ndarray] = None
    omega_hi: Optional[np.ndarray] = None

    @property
    def thin_tail(self) -> np.ndarray:
        return (1.0 - self.q) * self.n_obs < 10.0

    def to_csv(self, path: str) -> None:
        cols = ["q", "chi", "chi_lo", "chi_hi", "omega", "omega_lo", "omega_hi"]
        nan = np.full(self.q.size, np.nan)
        data = {
            "q": self.q,
            "chi": self.chi,
            "chi_lo": self.chi_lo if self.chi_lo is not None else nan,
            "chi_hi": self.chi_hi if self.chi_hi is not None else nan,
            "omega": self.omega,
            "omega_lo": self.omega_lo if self.omega_lo is not None else nan,
            "omega_hi": self.omega_hi if self.omega_hi is not None else nan,
        }
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(cols)
            for i in range(self.q.size):
                writer.writerow([repr(float(data[c][i])) for c in cols])


def empirical_report(
    data: np.ndarray,
    q_grid: np.ndarray | None = None,
    n_boot: int = 0,
    level: float = 0.95,
    seed=0,
) -> DependenceReport:
    """Empirical curves plus optional bands in one call (n_boot=0 skips
    the bootstrap)."""
    if q_grid is None:
        q_grid = default_q_grid()
    q = _check_q(q_grid)
    chi, omega = empirical_chi_omega(data, q)
    bands = (None, None, None, None)
    if n_boot:
        bands = bootstrap_bands(data, q, n_boot=n_boot, level=level, seed=seed)
    data = np.asarray(data)
    return DependenceReport(
        q=q,
        chi=chi,
        omega=omega,
        n_obs=data.shape[0],
        chi_lo=bands[0],
        chi_hi=bands[1],
        omega_lo=bands[2],
        omega_hi=bands[3],
    )
