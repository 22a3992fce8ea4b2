"""Synthetic causal world for watch-time experiments.

The world has latent user/video vectors, per-video durations, and the
structural equation

    w = d * sigmoid(a * s(u, v) + b + eps),   eps ~ Normal(0, sigma^2),

where s(u, v) = sigmoid(u.v / sqrt(p)) is the interest match. Logged
interactions choose a video from a uniform candidate slate via a softmax over
alpha * z(d) + beta * s, so alpha > 0 over-exposes long videos (the
confounding edge); the unbiased sampler picks videos uniformly instead.
Exact oracles: the expected watch time integrates the noise with 64-point
Gauss-Hermite quadrature, and small discrete worlds carry full tables for
backdoor-adjustment checks.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .data import Dataset, DatasetSchema

_CHUNK = 32768  # event generation block; fixed so output is seed-deterministic


class GenError(ValueError):
    pass


@dataclass(frozen=True)
class GenConfig:
    n_users: int = 2000
    n_videos: int = 2000
    latent_dim: int = 8
    duration_range: tuple[float, float] = (5.0, 300.0)
    interest_scale: float = 3.0
    interest_offset: float = -1.0
    noise_sd: float = 1.0
    exposure_bias: float = 2.0
    exposure_interest: float = 1.0
    slate_size: int = 50
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.duration_range
        if not (0 < lo <= hi):
            raise GenError(f"invalid duration_range {self.duration_range}")
        if self.n_users < 1 or self.n_videos < 1 or self.latent_dim < 1:
            raise GenError("n_users, n_videos, latent_dim must be >= 1")
        if self.noise_sd < 0:
            raise GenError("noise_sd must be >= 0")
        if self.slate_size < 1:
            raise GenError("slate_size must be >= 1")

    def to_dict(self) -> dict:
        d = self.__dict__.copy()
        d["duration_range"] = list(self.duration_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GenConfig":
        d = dict(d)
        d["duration_range"] = tuple(d.get("duration_range", (5.0, 300.0)))
        return cls(**d)


@dataclass
class World:
    config: GenConfig
    user_vecs: np.ndarray   # (U, p)
    video_vecs: np.ndarray  # (V, p)
    durations: np.ndarray   # (V,)
    video_stats: np.ndarray  # (V, 2), interest-independent dense features
    log_dur_mean: float
    log_dur_std: float

    @property
    def schema(self) -> DatasetSchema:
        return DatasetSchema(dense_len=3,
                             id_vocab_sizes=(self.config.n_users, self.config.n_videos))

    def z_duration(self, d) -> np.ndarray:
        return (np.log(d) - self.log_dur_mean) / self.log_dur_std


def _sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def generate_world(c: GenConfig) -> World:
    """Draw latents and durations; log-durations are uniform on the range."""
    rng = np.random.default_rng(c.seed)
    user_vecs = rng.standard_normal((c.n_users, c.latent_dim))
    video_vecs = rng.standard_normal((c.n_videos, c.latent_dim))
    lo, hi = c.duration_range
    durations = np.exp(rng.uniform(np.log(lo), np.log(hi), size=c.n_videos))
    if lo == hi:
        durations = np.full(c.n_videos, lo)  # avoid exp/log round-off
    video_stats = rng.standard_normal((c.n_videos, 2))
    log_d = np.log(durations)
    sd = float(log_d.std())
    return World(config=c, user_vecs=user_vecs, video_vecs=video_vecs,
                 durations=durations, video_stats=video_stats,
                 log_dur_mean=float(log_d.mean()),
                 log_dur_std=sd if sd > 1e-9 else 1.0)


def interest(world: World, users: np.ndarray, videos: np.ndarray) -> np.ndarray:
    """Match score s(u, v) in (0, 1); users/videos broadcast elementwise."""
    u = world.user_vecs[users]
    v = world.video_vecs[videos]
    dot = (u * v).sum(axis=-1) / np.sqrt(world.config.latent_dim)
    return _sigmoid(dot)


def _realize_watch(world: World, s: np.ndarray, videos: np.ndarray,
                   rng: np.random.Generator) -> np.ndarray:
    c = world.config
    eps = rng.normal(0.0, c.noise_sd, size=len(s)) if c.noise_sd > 0 else 0.0
    frac = _sigmoid(c.interest_scale * s + c.interest_offset + eps)
    return world.durations[videos] * frac


def _assemble(world: World, users, videos, watch) -> Dataset:
    z = world.z_duration(world.durations[videos])
    dense = np.column_stack([z, world.video_stats[videos]])
    ids = np.column_stack([users, videos])
    return Dataset(schema=world.schema, user_ids=users, video_ids=videos,
                   durations=world.durations[videos], watch_times=watch,
                   dense=dense, ids=ids)


def sample_logged_interactions(world: World, n: int, c: GenConfig,
                               seed: int | None = None) -> Dataset:
    """n logged events under exposure bias.

    Each event draws a uniform user and a uniform (with replacement) slate of
    slate_size candidates, then picks one with probability proportional to
    exp(alpha * z(d) + beta * s) over the slate (Gumbel-max sampling).
    """
    if n < 1:
        raise GenError(f"need n >= 1 events, got {n}")
    rng = np.random.default_rng(np.random.SeedSequence((c.seed, 101) if seed is None
                                                       else (seed, 101)))
    users_out, videos_out, watch_out = [], [], []
    done = 0
    while done < n:
        m = min(_CHUNK, n - done)
        users = rng.integers(0, c.n_users, size=m)
        slates = rng.integers(0, c.n_videos, size=(m, c.slate_size))
        s = interest(world, users[:, None], slates)
        z = world.z_duration(world.durations[slates])
        logits = c.exposure_bias * z + c.exposure_interest * s
        gumbel = rng.gumbel(size=(m, c.slate_size))
        pick = np.argmax(logits + gumbel, axis=1)
        videos = slates[np.arange(m), pick]
        s_chosen = s[np.arange(m), pick]
        watch = _realize_watch(world, s_chosen, videos, rng)
        users_out.append(users)
        videos_out.append(videos)
        watch_out.append(watch)
        done += m
    return _assemble(world, np.concatenate(users_out), np.concatenate(videos_out),
                     np.concatenate(watch_out))


def sample_unbiased_test(world: World, n: int, seed: int) -> Dataset:
    """n events with uniform user and uniform video selection (no exposure edge)."""
    if n < 1:
        raise GenError(f"need n >= 1 events, got {n}")
    rng = np.random.default_rng(np.random.SeedSequence((seed, 202)))
    users_out, videos_out, watch_out = [], [], []
    done = 0
    while done < n:
        m = min(_CHUNK, n - done)
        users = rng.integers(0, world.config.n_users, size=m)
        videos = rng.integers(0, world.config.n_videos, size=m)
        s = interest(world, users, videos)
        watch = _realize_watch(world, s, videos, rng)
        users_out.append(users)
        videos_out.append(videos)
        watch_out.append(watch)
        done += m
    return _assemble(world, np.concatenate(users_out), np.concatenate(videos_out),
                     np.concatenate(watch_out))


def true_expected_watch_time(world: World, u: int, v: int) -> float:
    """Noise-integrated expected watch time d * E[sigmoid(a*s + b + eps)].

    The expectation over eps uses 64-point Gauss-Hermite quadrature; with
    noise_sd = 0 it reduces to the closed form.
    """
    c = world.config
    s = float(interest(world, np.asarray(u), np.asarray(v)))
    mu = c.interest_scale * s + c.interest_offset
    d = float(world.durations[v])
    if c.noise_sd == 0:
        return d * float(_sigmoid(mu))
    nodes, weights = np.polynomial.hermite.hermgauss(64)
    vals = _sigmoid(mu + np.sqrt(2.0) * c.noise_sd * nodes)
    return d * float((weights * vals).sum() / np.sqrt(np.pi))


@dataclass(frozen=True)
class DiscreteToyWorld:
    """Finite (U, V, D) supports with exact P(D) and E[W | u, v, d] tables."""

    durations: np.ndarray   # (nd,) support of D, positive
    p_d: np.ndarray         # (nd,) marginal of D, sums to 1
    expected_w: np.ndarray  # (nu, nv, nd)

    @property
    def n_users(self) -> int:
        return self.expected_w.shape[0]

    @property
    def n_videos(self) -> int:
        return self.expected_w.shape[1]


def make_toy_world(durations, p_d, expected_w) -> DiscreteToyWorld:
    durations = np.asarray(durations, dtype=np.float64)
    p_d = np.asarray(p_d, dtype=np.float64)
    expected_w = np.asarray(expected_w, dtype=np.float64)
    if expected_w.ndim != 3 or expected_w.shape[2] != len(durations):
        raise GenError(f"expected_w must be (n_users, n_videos, {len(durations)})")
    if len(p_d) != len(durations):
        raise GenError("p_d length must match the duration support")
    if np.any(durations <= 0):
        raise GenError("toy durations must be positive")
    if np.any(p_d < 0) or abs(p_d.sum() - 1.0) > 1e-12:
        raise GenError(f"p_d must be a distribution, sums to {p_d.sum()}")
    if not np.isfinite(expected_w).all():
        raise GenError("expected_w table is incomplete (non-finite entry)")
    return DiscreteToyWorld(durations=durations, p_d=p_d, expected_w=expected_w)


def sample_toy_interactions(world: DiscreteToyWorld, n: int, seed: int,
                            p_v_given_d: np.ndarray | None = None) -> Dataset:
    """Draw n events from a toy world; watch time realizes E[W|u,v,d] exactly.

    p_v_given_d is an optional (n_videos, nd) table of exposure-biased video
    choice per duration value (columns sum to 1); None means uniform videos.
    """
    nu, nv, nd = world.expected_w.shape
    if p_v_given_d is not None:
        p_v_given_d = np.asarray(p_v_given_d, dtype=np.float64)
        if p_v_given_d.shape != (nv, nd):
            raise GenError(f"p_v_given_d must be ({nv}, {nd})")
        if np.any(p_v_given_d < 0) or not np.allclose(p_v_given_d.sum(axis=0), 1.0,
                                                      atol=1e-12):
            raise GenError("p_v_given_d columns must each sum to 1")
    rng = np.random.default_rng(np.random.SeedSequence((seed, 303)))
    users = rng.integers(0, nu, size=n)
    d_idx = rng.choice(nd, size=n, p=world.p_d)
    if p_v_given_d is None:
        videos = rng.integers(0, nv, size=n)
    else:
        u01 = rng.random(n)
        cum = np.cumsum(p_v_given_d, axis=0)  # (nv, nd)
        videos = np.empty(n, dtype=np.int64)
        for k in range(nd):
            mask = d_idx == k
            videos[mask] = np.searchsorted(cum[:, k], u01[mask], side="right")
        videos = np.clip(videos, 0, nv - 1)
    watch = world.expected_w[users, videos, d_idx]
    durations = world.durations[d_idx]
    dense = np.log(durations)[:, None]
    schema = DatasetSchema(dense_len=1, id_vocab_sizes=(nu, nv))
    return Dataset(schema=schema, user_ids=users, video_ids=videos,
                   durations=durations, watch_times=watch, dense=dense,
                   ids=np.column_stack([users, videos]))
