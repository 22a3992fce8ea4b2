"""Empirical watch-time distributions, one per duration group.

The forward map turns a watch time into a mid-rank quantile label in (0, 1):

    q(w) = (#{x < w} + 0.5 * #{x == w}) / n,   clamped to [0.5/n, 1 - 0.5/n].

The inverse interpolates linearly through the knots ((i - 0.5)/n, x_(i)),
clamping outside the knot range. On distinct sample values the two maps are
exact inverses of each other at every order statistic, and labels never touch
0 or 1, so a sigmoid output head can always represent them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .grouping import DurationGroups, assign_groups

DEFAULT_MIN_GROUP_SAMPLES = 10


class DistributionError(ValueError):
    pass


@dataclass(frozen=True)
class EmpiricalCdf:
    """Sorted watch-time sample with forward (label) and inverse (decode) maps."""

    sorted_values: np.ndarray
    n: int

    def __post_init__(self):
        object.__setattr__(self, "sorted_values", np.asarray(self.sorted_values, dtype=np.float64))


def fit_ecdf(values) -> EmpiricalCdf:
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise DistributionError("cannot fit an empirical CDF on empty input")
    return EmpiricalCdf(sorted_values=np.sort(v), n=int(v.size))


def cdf_label(e: EmpiricalCdf, w) -> float | np.ndarray:
    """Mid-rank quantile of w within the fitted sample, always in (0, 1).

    Accepts a scalar or an array; vectorized via binary search.
    """
    w_arr = np.asarray(w, dtype=np.float64)
    lo = np.searchsorted(e.sorted_values, w_arr, side="left")
    hi = np.searchsorted(e.sorted_values, w_arr, side="right")
    q = (lo + 0.5 * (hi - lo)) / e.n
    half = 0.5 / e.n
    q = np.clip(q, half, 1.0 - half)
    return float(q) if np.isscalar(w) or w_arr.ndim == 0 else q


def _knot_positions(n: int) -> np.ndarray:
    return (np.arange(1, n + 1) - 0.5) / n


def inverse_cdf(e: EmpiricalCdf, q) -> float | np.ndarray:
    """Watch-time value at quantile q, by interpolation through the knots.

    q must lie in [0, 1]; values beyond the outermost knots clamp to the
    sample minimum / maximum. Monotone non-decreasing in q.
    """
    q_arr = np.asarray(q, dtype=np.float64)
    if np.any((q_arr < 0.0) | (q_arr > 1.0)):
        raise DistributionError(f"quantile outside [0, 1]: {q}")
    out = np.interp(q_arr, _knot_positions(e.n), e.sorted_values)
    return float(out) if np.isscalar(q) or q_arr.ndim == 0 else out


def compress_ecdf(e: EmpiricalCdf, grid_size: int) -> EmpiricalCdf:
    """Approximate a large CDF by resampling its inverse on a mid-rank grid."""
    if grid_size < 2:
        raise DistributionError(f"grid_size must be >= 2, got {grid_size}")
    if e.n <= grid_size:
        return e
    knots = inverse_cdf(e, _knot_positions(grid_size))
    return EmpiricalCdf(sorted_values=np.asarray(knots), n=grid_size)


@dataclass(frozen=True)
class GroupCdfs:
    """Watch-time CDFs index-aligned with a DurationGroups instance."""

    cdfs: tuple[EmpiricalCdf, ...]

    @property
    def m(self) -> int:
        return len(self.cdfs)

    def __getitem__(self, k: int) -> EmpiricalCdf:
        return self.cdfs[k]


def fit_group_cdfs(ds: Dataset, g: DurationGroups,
                   min_group_samples: int = DEFAULT_MIN_GROUP_SAMPLES) -> GroupCdfs:
    """Fit one watch-time CDF per duration group.

    Raises when any group holds fewer than min_group_samples watch times,
    which signals that the group count is too large for the data.
    """
    groups = assign_groups(g, ds.durations)
    cdfs = []
    for k in range(g.m):
        values = ds.watch_times[groups == k]
        if values.size < min_group_samples:
            raise DistributionError(
                f"group {k} has {values.size} < {min_group_samples} samples; "
                f"reduce the group count")
        cdfs.append(fit_ecdf(values))
    return GroupCdfs(cdfs=tuple(cdfs))
