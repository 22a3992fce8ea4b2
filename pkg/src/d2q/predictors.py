"""The four watch-time predictors and their label constructions.

vr      direct value regression (linear head, MSE on raw watch time)
wlr     weighted logistic regression at the q60 watch-time threshold; two
        sigmoid heads share the trunk (watch-time-weighted and unweighted),
        decoded through the odds formula
d2q     duration-grouped quantile regression: labels are per-group mid-rank
        quantiles of watch time, decoded through the group's inverse CDF
resd2q  d2q plus a duration tower concatenated before the output layer
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset, DatasetSchema
from .distribution import (DEFAULT_MIN_GROUP_SAMPLES, GroupCdfs, cdf_label, fit_ecdf,
                           fit_group_cdfs, inverse_cdf)
from .grouping import DurationGroups, assign_group, assign_groups, fit_duration_groups
from .model import (EPS, Batch, ModelConfig, NetParams, forward, sigmoid, train)
from .synthgen import DiscreteToyWorld

KINDS = ("vr", "wlr", "d2q", "resd2q")
Q60 = 0.6
_PREDICT_CHUNK = 8192


class PredictorError(ValueError):
    pass


@dataclass
class Predictor:
    """A trained watch-time model with everything needed for inference."""

    kind: str
    config: ModelConfig
    schema: DatasetSchema
    params: NetParams
    groups: DurationGroups | None = None
    group_cdfs: GroupCdfs | None = None
    q60_threshold: float | None = None
    wlr_mode: str = "adapted"
    train_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PredictorError(f"unknown predictor kind {self.kind!r}")
        if self.kind in ("d2q", "resd2q"):
            if self.groups is None or self.group_cdfs is None:
                raise PredictorError(f"{self.kind} needs duration groups and CDFs")
            if self.group_cdfs.m != self.groups.m:
                raise PredictorError("groups and group CDFs disagree on m")
        if self.kind == "wlr" and self.q60_threshold is None:
            raise PredictorError("wlr needs the q60 threshold")
        if self.wlr_mode not in ("adapted", "classic"):
            raise PredictorError(f"unknown wlr mode {self.wlr_mode!r}")


def make_d2q_labels(ds: Dataset, g: DurationGroups, cdfs: GroupCdfs) -> np.ndarray:
    """Per-record quantile of watch time within its own duration group."""
    if cdfs.m != g.m:
        raise PredictorError("groups and CDFs disagree on m")
    group_idx = assign_groups(g, ds.durations)
    labels = np.empty(len(ds), dtype=np.float64)
    for k in range(g.m):
        mask = group_idx == k
        if mask.any():
            labels[mask] = cdf_label(cdfs[k], ds.watch_times[mask])
    return labels


def make_wlr_labels(ds: Dataset) -> tuple[np.ndarray, np.ndarray, float]:
    """Binary labels at the q60 watch-time threshold, with watch-time weights.

    Returns (labels, weights, threshold). The threshold is the 0.6-quantile
    of the training watch times under the mid-rank / interpolated-inverse
    convention; records at or above it are positive and weighted by their
    watch time, the rest get unit weight.
    """
    if len(ds) == 0:
        raise PredictorError("cannot build labels for an empty dataset")
    threshold = float(inverse_cdf(fit_ecdf(ds.watch_times), Q60))
    y = (ds.watch_times >= threshold).astype(np.float64)
    weights = np.where(y == 1.0, ds.watch_times, 1.0)
    return y, weights, threshold


def _effective_config(kind: str, c: ModelConfig) -> ModelConfig:
    if kind == "vr":
        return replace(c, output_head="linear", n_outputs=1, duration_tower=())
    if kind == "wlr":
        return replace(c, output_head="sigmoid", n_outputs=2, duration_tower=())
    if kind == "d2q":
        return replace(c, output_head="sigmoid", n_outputs=1, duration_tower=())
    return replace(c, output_head="sigmoid", n_outputs=1)  # resd2q keeps the tower


def _data_fingerprint(ds: Dataset) -> str:
    h = hashlib.sha256()
    for col in (ds.user_ids, ds.video_ids, ds.durations, ds.watch_times,
                ds.dense, ds.ids):
        h.update(np.ascontiguousarray(col).tobytes())
    return h.hexdigest()[:16]


def _make_batches(ds: Dataset, labels: np.ndarray, weights: np.ndarray | None,
                  batch_size: int, seed: int) -> list[Batch]:
    rng = np.random.default_rng(np.random.SeedSequence((seed, 7)))
    order = rng.permutation(len(ds))
    batches = []
    for start in range(0, len(ds), batch_size):
        idx = order[start:start + batch_size]
        batches.append(Batch(
            dense=ds.dense[idx], ids=ds.ids[idx], durations=ds.durations[idx],
            labels=labels[idx], weights=None if weights is None else weights[idx]))
    return batches


def train_predictor(kind: str, ds: Dataset, m: int, c: ModelConfig,
                    min_group_samples: int = DEFAULT_MIN_GROUP_SAMPLES,
                    history: list | None = None) -> Predictor:
    """Fit one of the four methods on a dataset.

    m is the duration group count; vr and wlr do not split and reject m > 1.
    Deterministic given (kind, ds, m, c).
    """
    if kind not in KINDS:
        raise PredictorError(f"unknown predictor kind {kind!r}")
    if len(ds) == 0:
        raise PredictorError("cannot train on an empty dataset")
    if kind in ("vr", "wlr") and m != 1:
        raise PredictorError(f"m={m} invalid for {kind}; duration splitting "
                             f"applies to d2q/resd2q only")
    if m < 1:
        raise PredictorError(f"group count must be >= 1, got {m}")

    cfg = _effective_config(kind, c)
    groups = group_cdfs = None
    q60 = None
    weights = None
    if kind == "vr":
        labels = ds.watch_times.copy()
        loss_kind = "mse"
        # Raw-seconds targets scale every gradient by the error magnitude;
        # dividing the step size by the label variance keeps vr at the same
        # effective step as the (0,1)-label methods.
        scale = max(1.0, float(labels.var()))
        cfg = replace(cfg, learning_rate=cfg.learning_rate / scale)
    elif kind == "wlr":
        y, w, q60 = make_wlr_labels(ds)
        labels = np.column_stack([y, y])
        weights = np.column_stack([w, np.ones_like(w)])
        loss_kind = "logloss"
    else:
        groups = fit_duration_groups(ds.durations, m)
        group_cdfs = fit_group_cdfs(ds, groups, min_group_samples)
        labels = make_d2q_labels(ds, groups, group_cdfs)
        loss_kind = "mse"

    batches = _make_batches(ds, labels, weights, cfg.batch_size, cfg.seed)
    sd = float(ds.durations.std())
    params = train(cfg, batches, loss_kind,
                   dense_len=ds.schema.dense_len,
                   vocab_sizes=list(ds.schema.id_vocab_sizes),
                   duration_stats=(float(ds.durations.mean()), sd if sd > 0 else 1.0),
                   history=history)
    meta = {"seed": cfg.seed, "n_records": len(ds),
            "data_fingerprint": _data_fingerprint(ds), "m": m}
    return Predictor(kind=kind, config=cfg, schema=ds.schema, params=params,
                     groups=groups, group_cdfs=group_cdfs, q60_threshold=q60,
                     train_meta=meta)


def _raw_outputs(p: Predictor, dense: np.ndarray, ids: np.ndarray,
                 durations: np.ndarray) -> np.ndarray:
    out = []
    for start in range(0, len(durations), _PREDICT_CHUNK):
        sl = slice(start, start + _PREDICT_CHUNK)
        batch = Batch(dense=dense[sl], ids=ids[sl], durations=durations[sl],
                      labels=np.zeros(len(durations[sl])))
        out.append(np.atleast_1d(forward(p.params, p.config, batch)))
    return np.concatenate(out, axis=0)


def _decode(p: Predictor, raw: np.ndarray, durations: np.ndarray) -> np.ndarray:
    if p.kind == "vr":
        return np.maximum(raw, 0.0)
    if p.kind == "wlr":
        p_w = np.clip(raw[:, 0], EPS, 1.0 - EPS)
        odds = p_w / (1.0 - p_w)
        if p.wlr_mode == "classic":
            return odds
        return odds * (1.0 - raw[:, 1])
    group_idx = assign_groups(p.groups, durations)
    out = np.empty_like(raw)
    for k in np.unique(group_idx):
        mask = group_idx == k
        out[mask] = inverse_cdf(p.group_cdfs[int(k)], raw[mask])
    return out


def predict(p: Predictor, dense, ids, duration: float) -> float:
    """Watch-time estimate in seconds for a single (user, video, duration)."""
    if duration <= 0:
        raise PredictorError(f"duration must be positive, got {duration}")
    dense = np.asarray(dense, dtype=np.float64).reshape(1, -1)
    ids = np.asarray(ids, dtype=np.int64).reshape(1, -1)
    raw = _raw_outputs(p, dense, ids, np.asarray([duration], dtype=np.float64))
    return float(_decode(p, raw, np.asarray([duration]))[0])


def predict_dataset(p: Predictor, ds: Dataset) -> np.ndarray:
    """Vectorized watch-time estimates for every record, in dataset order."""
    if len(ds) == 0:
        raise PredictorError("cannot predict on an empty dataset")
    if ds.schema.dense_len != p.schema.dense_len or \
            len(ds.schema.id_vocab_sizes) != len(p.schema.id_vocab_sizes):
        raise PredictorError("dataset schema does not match the predictor's")
    raw = _raw_outputs(p, ds.dense, ds.ids, ds.durations)
    return _decode(p, raw, ds.durations)


def backdoor_estimate(world: DiscreteToyWorld, u: int, v: int) -> float:
    """Deconfounded expected watch time: sum over d of P(d) * E[W | u, v, d]."""
    if not 0 <= u < world.n_users or not 0 <= v < world.n_videos:
        raise PredictorError(f"(u={u}, v={v}) outside the toy world supports")
    cell = world.expected_w[u, v]
    if not np.isfinite(cell).all():
        raise PredictorError(f"missing conditional table entry for (u={u}, v={v})")
    total = 0.0
    for i in range(len(world.durations)):
        total += float(world.p_d[i]) * float(cell[i])
    return total
