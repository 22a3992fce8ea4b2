"""Equal-frequency duration binning.

Boundaries are the ceil(i*n/m) order statistics of the fitted durations
(1-indexed, no interpolation), so every boundary is an observed duration.
Group k covers the half-open interval (b_k, b_{k+1}]; the tails clamp, which
makes assignment total over all positive durations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class GroupingError(ValueError):
    pass


@dataclass(frozen=True)
class DurationGroups:
    """m quantile bins over duration, defined by m-1 ascending cut values."""

    m: int
    boundaries: tuple[float, ...]

    def __post_init__(self):
        if self.m < 1:
            raise GroupingError(f"group count must be >= 1, got {self.m}")
        if len(self.boundaries) != self.m - 1:
            raise GroupingError(
                f"expected {self.m - 1} boundaries for m={self.m}, got {len(self.boundaries)}")
        if any(b > a for b, a in zip(self.boundaries, self.boundaries[1:])):
            raise GroupingError(f"boundaries must be non-decreasing: {self.boundaries}")

    def to_dict(self) -> dict:
        return {"m": self.m, "boundaries": list(self.boundaries)}

    @classmethod
    def from_dict(cls, d: dict) -> "DurationGroups":
        return cls(m=int(d["m"]), boundaries=tuple(float(b) for b in d["boundaries"]))


def fit_duration_groups(durations, m: int) -> DurationGroups:
    """Fit m equal-frequency duration bins.

    With distinct durations and m dividing n, every bin receives exactly n/m
    samples. Heavy duplicates can collapse bins (duplicate boundaries are
    kept; downstream CDF fitting rejects groups that end up undersized).
    """
    d = np.asarray(durations, dtype=np.float64)
    if d.size == 0:
        raise GroupingError("cannot fit duration groups on empty input")
    if m < 1:
        raise GroupingError(f"group count must be >= 1, got {m}")
    if m > d.size:
        raise GroupingError(f"group count {m} exceeds sample count {d.size}")
    n = d.size
    d_sorted = np.sort(d)
    ranks = [math.ceil(i * n / m) for i in range(1, m)]
    boundaries = tuple(float(d_sorted[r - 1]) for r in ranks)
    return DurationGroups(m=m, boundaries=boundaries)


def assign_group(g: DurationGroups, d: float) -> int:
    """Index of the bin containing duration d (tails clamp into bins 0, m-1)."""
    return int(np.searchsorted(g.boundaries, d, side="left"))


def assign_groups(g: DurationGroups, durations) -> np.ndarray:
    """Vectorized :func:`assign_group`."""
    d = np.asarray(durations, dtype=np.float64)
    return np.searchsorted(np.asarray(g.boundaries), d, side="left").astype(np.int64)


def group_sizes(g: DurationGroups, durations) -> list[int]:
    """Per-bin sample counts; always sums to len(durations)."""
    k = assign_groups(g, durations)
    return np.bincount(k, minlength=g.m).tolist()
