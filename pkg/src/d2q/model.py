"""Trainable watch-time network with manual backpropagation.

Architecture: per-slot id embeddings plus affine encoders for the dense
vector and the (standardized) duration scalar are concatenated and projected,
then fed through a Swish MLP whose last layer is affine. An optional duration
tower (its own small Swish MLP on the duration embedding) is concatenated
with the trunk's hidden state before the output layer. The output head is
either linear or sigmoid, with one or more output columns.

Everything is float64 numpy; given (seed, config, data order) the forward,
backward, and train functions are bit-deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

EPS = 1e-7  # clamp for probabilities before logs / odds


class ModelError(ValueError):
    pass


class TrainDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    """Network and optimizer settings.

    Defaults are desk scale; :meth:`full_scale` gives the production-size
    dimensions (dense 32, id total 512, duration 32, projection 512,
    MLP 256/128/64, batch 512).
    """

    dense_embed_dim: int = 4
    id_embed_total_dim: int = 64
    duration_embed_dim: int = 4
    projection_out_dim: int = 64
    mlp_dims: tuple[int, ...] = (32, 16, 8)
    output_head: str = "sigmoid"
    duration_tower: tuple[int, ...] = ()
    n_outputs: int = 1
    batch_size: int = 512
    learning_rate: float = 0.05
    momentum: float = 0.0
    epochs: int = 5
    seed: int = 0

    def __post_init__(self):
        dims = (self.dense_embed_dim, self.id_embed_total_dim, self.duration_embed_dim,
                self.projection_out_dim, self.n_outputs, self.batch_size)
        if any(d < 1 for d in dims) or any(d < 1 for d in self.mlp_dims):
            raise ModelError(f"all dimensions must be >= 1: {self}")
        if not self.mlp_dims:
            raise ModelError("mlp_dims must name at least one layer")
        if self.output_head not in ("linear", "sigmoid"):
            raise ModelError(f"unknown output head {self.output_head!r}")
        if self.epochs < 1 or self.learning_rate <= 0:
            raise ModelError("epochs must be >= 1 and learning_rate > 0")

    @property
    def concat_dim(self) -> int:
        return self.dense_embed_dim + self.id_embed_total_dim + self.duration_embed_dim

    @classmethod
    def full_scale(cls, **overrides) -> "ModelConfig":
        base = dict(dense_embed_dim=32, id_embed_total_dim=512, duration_embed_dim=32,
                    projection_out_dim=512, mlp_dims=(256, 128, 64), batch_size=512,
                    duration_tower=(16, 16))
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        return {
            "dense_embed_dim": self.dense_embed_dim,
            "id_embed_total_dim": self.id_embed_total_dim,
            "duration_embed_dim": self.duration_embed_dim,
            "projection_out_dim": self.projection_out_dim,
            "mlp_dims": list(self.mlp_dims),
            "output_head": self.output_head,
            "duration_tower": list(self.duration_tower),
            "n_outputs": self.n_outputs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "momentum": self.momentum,
            "epochs": self.epochs,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["mlp_dims"] = tuple(d.get("mlp_dims", (32, 16, 8)))
        d["duration_tower"] = tuple(d.get("duration_tower", ()))
        return cls(**d)


def slot_embed_dims(total_dim: int, n_slots: int) -> list[int]:
    """Split the total id embedding width across slots as evenly as possible."""
    if n_slots < 1:
        raise ModelError("need at least one id slot")
    base, extra = divmod(total_dim, n_slots)
    dims = [base + (1 if s < extra else 0) for s in range(n_slots)]
    if any(d < 1 for d in dims):
        raise ModelError(
            f"id_embed_total_dim {total_dim} too small for {n_slots} slots")
    return dims


@dataclass
class NetParams:
    """All weights of the network, plus the duration standardization buffers."""

    id_embeds: list[np.ndarray]
    dense_w: np.ndarray
    dense_b: np.ndarray
    dur_w: np.ndarray
    dur_b: np.ndarray
    proj_w: np.ndarray
    proj_b: np.ndarray
    mlp_w: list[np.ndarray]
    mlp_b: list[np.ndarray]
    tower_w: list[np.ndarray]
    tower_b: list[np.ndarray]
    out_w: np.ndarray
    out_b: np.ndarray
    dur_mean: float = 0.0
    dur_std: float = 1.0

    def named_arrays(self) -> list[tuple[str, np.ndarray]]:
        """Trainable tensors in a fixed, serialization-stable order."""
        out = [(f"id_embed_{s}", t) for s, t in enumerate(self.id_embeds)]
        out += [("dense_w", self.dense_w), ("dense_b", self.dense_b),
                ("dur_w", self.dur_w), ("dur_b", self.dur_b),
                ("proj_w", self.proj_w), ("proj_b", self.proj_b)]
        for l, (w, b) in enumerate(zip(self.mlp_w, self.mlp_b)):
            out += [(f"mlp_w_{l}", w), (f"mlp_b_{l}", b)]
        for l, (w, b) in enumerate(zip(self.tower_w, self.tower_b)):
            out += [(f"tower_w_{l}", w), (f"tower_b_{l}", b)]
        out += [("out_w", self.out_w), ("out_b", self.out_b)]
        return out

    def zeros_like(self) -> "NetParams":
        return NetParams(
            id_embeds=[np.zeros_like(t) for t in self.id_embeds],
            dense_w=np.zeros_like(self.dense_w), dense_b=np.zeros_like(self.dense_b),
            dur_w=np.zeros_like(self.dur_w), dur_b=np.zeros_like(self.dur_b),
            proj_w=np.zeros_like(self.proj_w), proj_b=np.zeros_like(self.proj_b),
            mlp_w=[np.zeros_like(w) for w in self.mlp_w],
            mlp_b=[np.zeros_like(b) for b in self.mlp_b],
            tower_w=[np.zeros_like(w) for w in self.tower_w],
            tower_b=[np.zeros_like(b) for b in self.tower_b],
            out_w=np.zeros_like(self.out_w), out_b=np.zeros_like(self.out_b),
            dur_mean=self.dur_mean, dur_std=self.dur_std,
        )

    def copy(self) -> "NetParams":
        p = self.zeros_like()
        for (_, dst), (_, src) in zip(p.named_arrays(), self.named_arrays()):
            dst += src
        return p

    def all_finite(self) -> bool:
        return all(np.isfinite(t).all() for _, t in self.named_arrays())


@dataclass
class Batch:
    """Row-aligned minibatch; weights default to all-ones."""

    dense: np.ndarray
    ids: np.ndarray
    durations: np.ndarray
    labels: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        self.dense = np.asarray(self.dense, dtype=np.float64)
        self.ids = np.asarray(self.ids, dtype=np.int64)
        self.durations = np.asarray(self.durations, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.float64)
        n = len(self.durations)
        if self.dense.shape[0] != n or self.ids.shape[0] != n or self.labels.shape[0] != n:
            raise ModelError("batch columns are not row-aligned")
        if self.weights is None:
            self.weights = np.ones_like(self.labels)
        else:
            self.weights = np.asarray(self.weights, dtype=np.float64)
            if self.weights.shape != self.labels.shape:
                raise ModelError("weights must match label shape")
            if np.any(self.weights < 0):
                raise ModelError("weights must be non-negative")

    def __len__(self) -> int:
        return len(self.durations)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def swish(x):
    """x * sigmoid(x), elementwise; accepts scalars or arrays."""
    arr = np.asarray(x, dtype=np.float64)
    out = arr * sigmoid(arr)
    return float(out) if np.isscalar(x) or arr.ndim == 0 else out


def _swish_grad(x: np.ndarray) -> np.ndarray:
    s = sigmoid(x)
    return s * (1.0 + x * (1.0 - s))


def init_params(config: ModelConfig, dense_len: int, vocab_sizes: list[int],
                dur_mean: float = 0.0, dur_std: float = 1.0) -> NetParams:
    """Seeded Glorot-uniform weights, zero biases.

    The draw order is fixed (embeddings, encoders, projection, trunk, tower,
    output), so configs that share a prefix of the architecture share those
    initial weights for the same seed.
    """
    rng = np.random.default_rng(config.seed)

    def glorot(fan_in, fan_out, shape):
        s = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-s, s, size=shape)

    slot_dims = slot_embed_dims(config.id_embed_total_dim, len(vocab_sizes))
    id_embeds = [glorot(v, d, (v, d)) for v, d in zip(vocab_sizes, slot_dims)]
    dense_w = glorot(dense_len, config.dense_embed_dim, (dense_len, config.dense_embed_dim))
    dur_w = glorot(1, config.duration_embed_dim, (1, config.duration_embed_dim))
    proj_w = glorot(config.concat_dim, config.projection_out_dim,
                    (config.concat_dim, config.projection_out_dim))

    mlp_w, mlp_b = [], []
    prev = config.projection_out_dim
    for dim in config.mlp_dims:
        mlp_w.append(glorot(prev, dim, (prev, dim)))
        mlp_b.append(np.zeros(dim))
        prev = dim
    trunk_out = prev

    tower_w, tower_b = [], []
    prev = config.duration_embed_dim
    for dim in config.duration_tower:
        tower_w.append(glorot(prev, dim, (prev, dim)))
        tower_b.append(np.zeros(dim))
        prev = dim
    head_in = trunk_out + (prev if config.duration_tower else 0)

    out_w = glorot(head_in, config.n_outputs, (head_in, config.n_outputs))
    return NetParams(
        id_embeds=id_embeds,
        dense_w=dense_w, dense_b=np.zeros(config.dense_embed_dim),
        dur_w=dur_w, dur_b=np.zeros(config.duration_embed_dim),
        proj_w=proj_w, proj_b=np.zeros(config.projection_out_dim),
        mlp_w=mlp_w, mlp_b=mlp_b, tower_w=tower_w, tower_b=tower_b,
        out_w=out_w, out_b=np.zeros(config.n_outputs),
        dur_mean=float(dur_mean), dur_std=float(dur_std),
    )


def _affine_chain(x: np.ndarray, ws: list[np.ndarray], bs: list[np.ndarray]):
    """Affine layers with swish between them and an affine final layer."""
    pre, act = [], [x]
    h = x
    for l, (w, b) in enumerate(zip(ws, bs)):
        z = h @ w + b
        pre.append(z)
        h = swish(z) if l < len(ws) - 1 else z
        act.append(h)
    return h, pre, act


def _forward_cache(p: NetParams, c: ModelConfig, b: Batch):
    n_slots = len(p.id_embeds)
    if b.ids.shape[1] != n_slots:
        raise ModelError(f"batch has {b.ids.shape[1]} id slots, params expect {n_slots}")
    if b.dense.shape[1] != p.dense_w.shape[0]:
        raise ModelError(
            f"batch dense width {b.dense.shape[1]} != params {p.dense_w.shape[0]}")

    e_dense = b.dense @ p.dense_w + p.dense_b
    e_id = np.concatenate([p.id_embeds[s][b.ids[:, s]] for s in range(n_slots)], axis=1)
    z_dur = ((b.durations - p.dur_mean) / p.dur_std)[:, None]
    e_dur = z_dur @ p.dur_w + p.dur_b

    concat = np.concatenate([e_dense, e_id, e_dur], axis=1)
    proj = concat @ p.proj_w + p.proj_b
    hidden, mlp_pre, mlp_act = _affine_chain(proj, p.mlp_w, p.mlp_b)

    if p.tower_w:
        tower, tow_pre, tow_act = _affine_chain(e_dur, p.tower_w, p.tower_b)
        head_in = np.concatenate([hidden, tower], axis=1)
    else:
        tow_pre, tow_act = [], []
        head_in = hidden

    logits = head_in @ p.out_w + p.out_b
    preds = sigmoid(logits) if c.output_head == "sigmoid" else logits
    cache = dict(e_dur=e_dur, z_dur=z_dur, concat=concat,
                 mlp_pre=mlp_pre, mlp_act=mlp_act,
                 tow_pre=tow_pre, tow_act=tow_act,
                 head_in=head_in, logits=logits, preds=preds)
    return preds, cache


def forward(p: NetParams, c: ModelConfig, b: Batch) -> np.ndarray:
    """Predictions for a batch: shape (B,) or (B, n_outputs) when multi-head."""
    preds, _ = _forward_cache(p, c, b)
    return preds[:, 0] if c.n_outputs == 1 else preds


def _as_columns(a: np.ndarray, n_outputs: int) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.shape[1] != n_outputs:
        raise ModelError(f"expected {n_outputs} label columns, got {a.shape[1]}")
    return a


def loss_mse(pred, label, weight=None) -> float:
    """Weighted mean squared error; 2-D inputs sum the per-column losses."""
    pred = np.atleast_1d(np.asarray(pred, dtype=np.float64))
    label = np.atleast_1d(np.asarray(label, dtype=np.float64))
    if pred.shape != label.shape:
        raise ModelError(f"pred shape {pred.shape} != label shape {label.shape}")
    w = np.ones_like(pred) if weight is None else np.asarray(weight, dtype=np.float64)
    if w.shape != pred.shape:
        raise ModelError(f"weight shape {w.shape} != pred shape {pred.shape}")
    p2, l2, w2 = (a.reshape(len(pred), -1) for a in (pred, label, w))
    col_w = w2.sum(axis=0)
    if np.any(col_w <= 0):
        raise ModelError("weights sum to zero")
    return float((((p2 - l2) ** 2 * w2).sum(axis=0) / col_w).sum())


def loss_weighted_logloss(pred, label, weight=None) -> float:
    """Weighted binary cross-entropy with EPS-clamped probabilities."""
    pred = np.atleast_1d(np.asarray(pred, dtype=np.float64))
    label = np.atleast_1d(np.asarray(label, dtype=np.float64))
    if pred.shape != label.shape:
        raise ModelError(f"pred shape {pred.shape} != label shape {label.shape}")
    if not np.all((label == 0.0) | (label == 1.0)):
        raise ModelError("logloss labels must be 0 or 1")
    w = np.ones_like(pred) if weight is None else np.asarray(weight, dtype=np.float64)
    if w.shape != pred.shape:
        raise ModelError(f"weight shape {w.shape} != pred shape {pred.shape}")
    p = np.clip(pred, EPS, 1.0 - EPS)
    ll = -(label * np.log(p) + (1.0 - label) * np.log1p(-p))
    p2, w2 = ll.reshape(len(pred), -1), w.reshape(len(pred), -1)
    col_w = w2.sum(axis=0)
    if np.any(col_w <= 0):
        raise ModelError("weights sum to zero")
    return float(((p2 * w2).sum(axis=0) / col_w).sum())


def loss_value(p: NetParams, c: ModelConfig, b: Batch, loss_kind: str) -> float:
    preds, _ = _forward_cache(p, c, b)
    labels = _as_columns(b.labels, c.n_outputs)
    weights = _as_columns(b.weights, c.n_outputs)
    if loss_kind == "mse":
        return loss_mse(preds, labels, weights)
    if loss_kind == "logloss":
        return loss_weighted_logloss(preds, labels, weights)
    raise ModelError(f"unknown loss kind {loss_kind!r}")


def _chain_backward(d_out, ws, bs, pre, act, gw, gb):
    """Backprop through an _affine_chain; returns gradient w.r.t. the input."""
    d = d_out
    for l in range(len(ws) - 1, -1, -1):
        dz = d if l == len(ws) - 1 else d * _swish_grad(pre[l])
        gw[l] += act[l].T @ dz
        gb[l] += dz.sum(axis=0)
        d = dz @ ws[l].T
    return d


def _loss_and_grads(p: NetParams, c: ModelConfig, b: Batch, loss_kind: str):
    preds, cache = _forward_cache(p, c, b)
    labels = _as_columns(b.labels, c.n_outputs)
    weights = _as_columns(b.weights, c.n_outputs)
    col_w = weights.sum(axis=0)
    if np.any(col_w <= 0):
        raise ModelError("weights sum to zero")

    pc = np.clip(preds, EPS, 1.0 - EPS)
    clipped = (preds < EPS) | (preds > 1.0 - EPS)
    if loss_kind == "mse":
        loss = float((((preds - labels) ** 2 * weights).sum(axis=0) / col_w).sum())
        d_pred = 2.0 * weights * (preds - labels) / col_w
        if c.output_head == "sigmoid":
            d_logit = d_pred * preds * (1.0 - preds)
        else:
            d_logit = d_pred
    elif loss_kind == "logloss":
        if not np.all((labels == 0.0) | (labels == 1.0)):
            raise ModelError("logloss labels must be 0 or 1")
        ll = -(labels * np.log(pc) + (1.0 - labels) * np.log1p(-pc))
        loss = float(((ll * weights).sum(axis=0) / col_w).sum())
        if c.output_head == "sigmoid":
            d_logit = weights * (preds - labels) / col_w
        else:
            d_logit = weights * (pc - labels) / (pc * (1.0 - pc)) / col_w
        d_logit = np.where(clipped, 0.0, d_logit)
    else:
        raise ModelError(f"unknown loss kind {loss_kind!r}")

    g = p.zeros_like()
    g.out_w += cache["head_in"].T @ d_logit
    g.out_b += d_logit.sum(axis=0)
    d_head_in = d_logit @ p.out_w.T

    trunk_out = p.mlp_w[-1].shape[1]
    d_hidden = d_head_in[:, :trunk_out]
    d_e_dur = np.zeros_like(cache["e_dur"])
    if p.tower_w:
        d_tower = d_head_in[:, trunk_out:]
        d_e_dur += _chain_backward(d_tower, p.tower_w, p.tower_b,
                                   cache["tow_pre"], cache["tow_act"],
                                   g.tower_w, g.tower_b)

    d_proj = _chain_backward(d_hidden, p.mlp_w, p.mlp_b,
                             cache["mlp_pre"], cache["mlp_act"], g.mlp_w, g.mlp_b)
    g.proj_w += cache["concat"].T @ d_proj
    g.proj_b += d_proj.sum(axis=0)
    d_concat = d_proj @ p.proj_w.T

    ded = p.dense_w.shape[1]
    dei = sum(t.shape[1] for t in p.id_embeds)
    d_e_dense = d_concat[:, :ded]
    d_e_id = d_concat[:, ded:ded + dei]
    d_e_dur += d_concat[:, ded + dei:]

    g.dense_w += b.dense.T @ d_e_dense
    g.dense_b += d_e_dense.sum(axis=0)
    g.dur_w += cache["z_dur"].T @ d_e_dur
    g.dur_b += d_e_dur.sum(axis=0)

    offset = 0
    for s, table in enumerate(p.id_embeds):
        dim = table.shape[1]
        np.add.at(g.id_embeds[s], b.ids[:, s], d_e_id[:, offset:offset + dim])
        offset += dim
    return loss, g


def backward(p: NetParams, c: ModelConfig, b: Batch, loss_kind: str) -> NetParams:
    """Exact analytic gradient of the chosen loss, in NetParams shape."""
    _, g = _loss_and_grads(p, c, b, loss_kind)
    return g


def train(config: ModelConfig, batches: list[Batch], loss_kind: str, *,
          dense_len: int | None = None, vocab_sizes: list[int] | None = None,
          duration_stats: tuple[float, float] | None = None,
          init: NetParams | None = None,
          history: list | None = None) -> NetParams:
    """Mini-batch SGD (optionally with momentum) for config.epochs passes.

    Batches are visited in the given order every epoch. Dimensions not passed
    explicitly are inferred from the batches; when ``history`` is a list, the
    mean batch loss of each epoch is appended to it.
    """
    if not batches:
        raise ModelError("need at least one batch")
    if dense_len is None:
        dense_len = batches[0].dense.shape[1]
    if vocab_sizes is None:
        n_slots = batches[0].ids.shape[1]
        vocab_sizes = [max(int(b.ids[:, s].max()) for b in batches) + 1
                       for s in range(n_slots)]
    if duration_stats is None:
        all_dur = np.concatenate([b.durations for b in batches])
        sd = float(all_dur.std())
        duration_stats = (float(all_dur.mean()), sd if sd > 0 else 1.0)

    params = init.copy() if init is not None else init_params(
        config, dense_len, vocab_sizes, duration_stats[0], duration_stats[1])
    velocity = params.zeros_like() if config.momentum > 0 else None

    lr = config.learning_rate
    for epoch in range(config.epochs):
        epoch_losses = []
        for bi, batch in enumerate(batches):
            loss, grads = _loss_and_grads(params, config, batch, loss_kind)
            if not np.isfinite(loss):
                raise TrainDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {bi} "
                    f"(learning_rate={lr})")
            if velocity is not None:
                for (_, v), (_, gr) in zip(velocity.named_arrays(), grads.named_arrays()):
                    v *= config.momentum
                    v += gr
                grads = velocity
            for (_, t), (_, gr) in zip(params.named_arrays(), grads.named_arrays()):
                t -= lr * gr
            epoch_losses.append(loss)
        if not params.all_finite():
            raise TrainDivergedError(
                f"non-finite parameters after epoch {epoch} (learning_rate={lr})")
        if history is not None:
            history.append(float(np.mean(epoch_losses)))
    return params
