"""Ranking and error metrics for watch-time predictions.

XAUC scores an unordered pair 1 when the predictions order it the way the
true watch times do, 0.5 on a prediction tie, 0 otherwise; pairs with equal
truths are excluded. The exact variant enumerates every pair, the sampled
variant averages over uniformly drawn pairs (resampling truth ties). XGAUC
computes XAUC per user and averages with weights proportional to user record
counts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grouping import DurationGroups, assign_groups

MAX_SAMPLED_PAIRS = 10_000_000
_EXACT_BLOCK = 2_000_000  # pair comparisons per block when enumerating


class MetricsError(ValueError):
    pass


def default_num_pairs(n: int) -> int:
    return min(10 * n, MAX_SAMPLED_PAIRS)


def _aligned(pred, truth):
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    if p.shape != t.shape or p.ndim != 1:
        raise MetricsError(f"pred/truth must be equal-length vectors, "
                           f"got {p.shape} and {t.shape}")
    return p, t


def mae(pred, truth) -> float:
    """Mean absolute error in seconds."""
    p, t = _aligned(pred, truth)
    if p.size == 0:
        raise MetricsError("mae needs at least one sample")
    return float(np.abs(p - t).mean())


def _pair_scores(dp: np.ndarray, dt: np.ndarray) -> np.ndarray:
    concordant = (np.sign(dp) == np.sign(dt)) & (dp != 0)
    return np.where(dp == 0, 0.5, concordant.astype(np.float64))


def xauc_exact(pred, truth) -> float:
    """Mean pair score over every unordered pair with distinct truths."""
    p, t = _aligned(pred, truth)
    n = p.size
    if n < 2:
        raise MetricsError("xauc needs at least two samples")
    rows_per_block = max(1, _EXACT_BLOCK // n)
    total = 0.0
    scored = 0
    for i0 in range(0, n, rows_per_block):
        i1 = min(i0 + rows_per_block, n)
        dp = p[i0:i1, None] - p[None, :]
        dt = t[i0:i1, None] - t[None, :]
        upper = np.arange(i0, i1)[:, None] < np.arange(n)[None, :]
        mask = upper & (dt != 0)
        scored += int(mask.sum())
        total += float(_pair_scores(dp[mask], dt[mask]).sum())
    if scored == 0:
        raise MetricsError("no scorable pair: all true values are equal")
    return total / scored


def xauc_sampled(pred, truth, num_pairs: int, seed: int) -> float:
    """Monte-Carlo XAUC over num_pairs uniform index pairs; seed-deterministic."""
    p, t = _aligned(pred, truth)
    n = p.size
    if n < 2:
        raise MetricsError("xauc needs at least two samples")
    if num_pairs < 1:
        raise MetricsError(f"num_pairs must be >= 1, got {num_pairs}")
    if np.all(t == t[0]):
        raise MetricsError("no scorable pair: all true values are equal")
    rng = np.random.default_rng(seed)
    block = 1 << 16
    total = 0.0
    got = 0
    while got < num_pairs:
        i = rng.integers(0, n, size=block)
        j = rng.integers(0, n, size=block)
        dt = t[i] - t[j]
        keep = dt != 0
        take = min(int(keep.sum()), num_pairs - got)
        if take == 0:
            continue
        ik, jk = i[keep][:take], j[keep][:take]
        total += float(_pair_scores(p[ik] - p[jk], t[ik] - t[jk]).sum())
        got += take
    return total / num_pairs


def xgauc(pred, truth, user_ids) -> float:
    """Record-count-weighted mean of per-user exact XAUC.

    Users with fewer than two records or with all-equal truths are skipped;
    errors out when no user is scorable.
    """
    p, t = _aligned(pred, truth)
    users = np.asarray(user_ids)
    if users.shape != p.shape:
        raise MetricsError("user_ids must align with predictions")
    order = np.argsort(users, kind="stable")
    sorted_users = users[order]
    uniq, starts, counts = np.unique(sorted_users, return_index=True, return_counts=True)
    total = 0.0
    weight = 0
    for start, count in zip(starts, counts):
        if count < 2:
            continue
        idx = order[start:start + count]
        tu = t[idx]
        if np.all(tu == tu[0]):
            continue
        total += count * xauc_exact(p[idx], tu)
        weight += count
    if weight == 0:
        raise MetricsError("no scorable user: every user lacks a comparable pair")
    return total / weight


@dataclass(frozen=True)
class GroupMetrics:
    index: int
    count: int
    mae: float | None
    xauc: float | None

    def to_dict(self) -> dict:
        return {"index": self.index, "count": self.count,
                "mae": self.mae, "xauc": self.xauc}


def duration_bias_report(pred, truth, durations, g: DurationGroups, *,
                         exact_threshold: int = 4000, seed: int = 0) -> list[GroupMetrics]:
    """Per-duration-group count, MAE, and XAUC.

    Deconfounded predictors should flatten the MAE column across groups.
    XAUC uses exact enumeration up to exact_threshold records per group,
    sampled pairs (seed-deterministic) beyond that; degenerate groups report
    None for metrics they cannot support.
    """
    p, t = _aligned(pred, truth)
    d = np.asarray(durations, dtype=np.float64)
    group_idx = assign_groups(g, d)
    rows = []
    for k in range(g.m):
        mask = group_idx == k
        count = int(mask.sum())
        g_mae = mae(p[mask], t[mask]) if count >= 1 else None
        g_xauc = None
        if count >= 2 and not np.all(t[mask] == t[mask][0]):
            if count <= exact_threshold:
                g_xauc = xauc_exact(p[mask], t[mask])
            else:
                g_xauc = xauc_sampled(p[mask], t[mask],
                                      default_num_pairs(count), seed + k)
        rows.append(GroupMetrics(index=k, count=count, mae=g_mae, xauc=g_xauc))
    return rows


@dataclass
class EvalReport:
    """Full evaluation of one predictor on one dataset."""

    mae: float
    xauc: float
    xgauc: float
    per_group: list[GroupMetrics]
    pairs_sampled: int
    seed: int

    def to_dict(self) -> dict:
        return {"mae": self.mae, "xauc": self.xauc, "xgauc": self.xgauc,
                "per_group": [g.to_dict() for g in self.per_group],
                "pairs_sampled": self.pairs_sampled, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(mae=d["mae"], xauc=d["xauc"], xgauc=d["xgauc"],
                   per_group=[GroupMetrics(**g) for g in d["per_group"]],
                   pairs_sampled=d["pairs_sampled"], seed=d["seed"])


def evaluate_predictions(pred, truth, user_ids, durations, g: DurationGroups, *,
                         exact_threshold: int = 4000, seed: int = 0) -> EvalReport:
    """Assemble the standard report: global MAE/XAUC/XGAUC plus per-group rows.

    Global XAUC switches from exact enumeration to sampled pairs above
    exact_threshold records, mirroring duration_bias_report.
    """
    p, t = _aligned(pred, truth)
    n = p.size
    if n <= exact_threshold:
        global_xauc = xauc_exact(p, t)
        pairs = 0
    else:
        pairs = default_num_pairs(n)
        global_xauc = xauc_sampled(p, t, pairs, seed)
    report = EvalReport(
        mae=mae(p, t),
        xauc=global_xauc,
        xgauc=xgauc(p, t, user_ids),
        per_group=duration_bias_report(p, t, durations, g,
                                       exact_threshold=exact_threshold, seed=seed),
        pairs_sampled=pairs,
        seed=seed,
    )
    counts = sum(row.count for row in report.per_group)
    if counts != n:
        raise MetricsError(f"per-group counts {counts} do not sum to {n}")
    return report
