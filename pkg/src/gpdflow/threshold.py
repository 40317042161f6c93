"""Threshold selection by plateau detection on empirical dependence curves.

The tail dependence summaries chi(q) and omega(q) of an exceedance model are
constant in q above the model threshold, so a data-driven threshold can be
chosen as the smallest quantile level beyond which the empirical curves
flatten out.  "Flat" is operationalized with a sliding window: a window of
grid points is flat when every value sits within a relative tolerance of the
window mean, and a plateau starts at the first grid point from which all
subsequent windows are flat.  The noisiest grid points, where the tail
contains fewer than a handful of observations, are excluded from scoring.

Both curves are always returned alongside the selected level so the
automatic choice can be inspected and overridden.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dependence import DependenceReport, default_q_grid, empirical_report
from .errors import InputError
from .model import ExceedanceDataset
from .risk import var

THIN_TAIL_COUNT = 10


@dataclass(frozen=True)
class PlateauConfig:
    """Sliding-window flatness rule.

    ``window`` grid points per window; a window is flat when
    max |value - mean| <= ``rel_tol`` * |mean|.  The final ``min_tail``
    grid points are never scored (their estimates are too volatile).
    """

    window: int = 8
    rel_tol: float = 0.05
    min_tail: int = 5

    def __post_init__(self):
        if self.window < 2:
            raise InputError("plateau window must span at least 2 grid points")
        if not (self.rel_tol > 0.0) or not np.isfinite(self.rel_tol):
            raise InputError("relative tolerance must be positive")
        if self.min_tail < 0:
            raise InputError("min_tail must be nonnegative")


@dataclass(frozen=True)
class ThresholdResult:
    """Selected quantile levels, the threshold vector, and diagnostics."""

    q_chi: float
    q_omega: float
    q_star: float
    threshold: np.ndarray
    diagnostics: DependenceReport
    flags: tuple = ()

    def __post_init__(self):
        if self.q_star != max(self.q_chi, self.q_omega):
            raise InputError("q_star must be the larger of q_chi and q_omega")

    def summary(self) -> dict:
        return {
            "q_chi": self.q_chi,
            "q_omega": self.q_omega,
            "q_star": self.q_star,
            "threshold": [float(t) for t in self.threshold],
            "flags": list(self.flags),
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2)
            fh.write("\n")


def detect_plateau(
    q: np.ndarray,
    values: np.ndarray,
    cfg: Optional[PlateauConfig] = None,
    exclude_tail: Optional[int] = None,
) -> tuple[float, bool]:
    """Smallest grid q from which every sliding window is flat.

    Windows of ``cfg.window`` consecutive points are scored left to right;
    the final ``exclude_tail`` points (default ``cfg.min_tail``) never enter
    any window.  Returns (q_start, found).  When no suffix of windows is
    flat, returns the last grid point with ``found`` False so a caller can
    still proceed, flagged.
    """
    cfg = cfg or PlateauConfig()
    q = np.asarray(q, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if q.ndim != 1 or q.shape != values.shape:
        raise InputError("curve must be matching one-dimensional q and value arrays")
    if exclude_tail is None:
        exclude_tail = cfg.min_tail
    scored = q.size - exclude_tail
    if scored < cfg.window:
        raise InputError(
            f"curve has {q.size} points; need at least "
            f"{cfg.window + exclude_tail} for window {cfg.window} with "
            f"{exclude_tail} excluded tail points"
        )
    w = cfg.window
    # rolling means via cumulative sums, then per-window max deviations
    csum = np.concatenate([[0.0], np.cumsum(values[:scored])])
    means = (csum[w:] - csum[:-w]) / w
    windows = np.lib.stride_tricks.sliding_window_view(values[:scored], w)
    dev = np.max(np.abs(windows - means[:, None]), axis=1)
    flat = dev <= cfg.rel_tol * np.abs(means)
    suffix_flat = np.logical_and.accumulate(flat[::-1])[::-1]
    if not np.any(suffix_flat):
        return float(q[-1]), False
    return float(q[int(np.argmax(suffix_flat))]), True


def marginal_quantiles(data: np.ndarray, q: float) -> np.ndarray:
    """Per-column empirical quantiles, ceiling-index convention."""
    data = np.asarray(data, dtype=np.float64)
    return np.array([var(data[:, j], q) for j in range(data.shape[1])])


def select_threshold(
    raw,
    q: Optional[np.ndarray] = None,
    cfg: Optional[PlateauConfig] = None,
    n_boot: int = 0,
    seed=0,
) -> ThresholdResult:
    """Run the full selection procedure on raw data.

    Estimates chi(q) and omega(q) over the grid, finds the plateau start of
    each, sets q* to the larger, and returns the componentwise empirical
    q*-quantiles as the threshold vector.  Grid points whose tail holds
    fewer than ten observations are excluded from plateau scoring, on top of
    the configured minimum.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2:
        raise InputError("raw data must be a matrix of rows")
    n = raw.shape[0]
    if n < 100:
        warnings.warn(
            f"threshold selection on only {n} rows is unreliable", RuntimeWarning
        )
    cfg = cfg or PlateauConfig()
    if q is None:
        q = default_q_grid()
    q = np.asarray(q, dtype=np.float64)
    if np.any(np.diff(q) <= 0):
        raise InputError("q grid must be strictly increasing")
    report = empirical_report(raw, q, n_boot=n_boot, seed=seed)
    thin = int(np.sum((1.0 - q) * n < THIN_TAIL_COUNT))
    exclude = max(cfg.min_tail, thin)
    q_chi, chi_found = detect_plateau(q, report.chi, cfg, exclude_tail=exclude)
    q_omega, omega_found = detect_plateau(q, report.omega, cfg, exclude_tail=exclude)
    flags = []
    if not chi_found:
        flags.append("chi plateau not found")
    if not omega_found:
        flags.append("omega plateau not found")
    if flags:
        warnings.warn(
            "; ".join(flags) + "; using the last grid point", RuntimeWarning
        )
    q_star = max(q_chi, q_omega)
    return ThresholdResult(
        q_chi=q_chi,
        q_omega=q_omega,
        q_star=q_star,
        threshold=marginal_quantiles(raw, q_star),
        diagnostics=report,
        flags=tuple(flags),
    )


def make_exceedance_dataset(raw, threshold) -> ExceedanceDataset:
    """Shift by the threshold vector and keep rows exceeding it somewhere."""
    return ExceedanceDataset.from_raw(raw, threshold)
