"""Run configuration: generator + model settings plus the sweep grid."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from ..data import DatasetSchema
from ..model import ModelConfig
from ..predictors import KINDS
from ..synthgen import GenConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Everything one experiment run needs, serializable as JSON.

    method_overrides patches ModelConfig fields per method before training
    (e.g. a smaller learning rate for vr, whose raw-seconds targets need it).
    """

    gen: GenConfig = field(default_factory=GenConfig)
    model: ModelConfig = field(default_factory=lambda: ModelConfig(duration_tower=(16, 16)))
    methods: tuple[str, ...] = ("vr", "wlr", "d2q", "resd2q")
    group_counts: tuple[int, ...] = (1, 4, 8, 16, 32, 64, 256)
    train_size: int = 200_000
    test_size: int = 40_000
    seeds: tuple[int, ...] = (0, 1, 2)
    output_dir: str = "runs/default"
    min_group_samples: int = 10
    diagnostic_groups: int = 8
    quantile_grid: int = 1000
    method_overrides: dict = field(default_factory=lambda: {"vr": {"learning_rate": 0.002}})

    def __post_init__(self):
        if not self.methods:
            raise ConfigError("methods must be non-empty")
        for m in self.methods:
            if m not in KINDS:
                raise ConfigError(f"unknown method {m!r}; valid: {KINDS}")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if not self.group_counts or any(k < 1 for k in self.group_counts):
            raise ConfigError(f"group_counts must all be >= 1: {self.group_counts}")
        for m in self.method_overrides:
            if m not in KINDS:
                raise ConfigError(f"method_overrides names unknown method {m!r}")

    def to_dict(self) -> dict:
        return {
            "gen": self.gen.to_dict(),
            "model": self.model.to_dict(),
            "methods": list(self.methods),
            "group_counts": list(self.group_counts),
            "train_size": self.train_size,
            "test_size": self.test_size,
            "seeds": list(self.seeds),
            "output_dir": self.output_dir,
            "min_group_samples": self.min_group_samples,
            "diagnostic_groups": self.diagnostic_groups,
            "quantile_grid": self.quantile_grid,
            "method_overrides": self.method_overrides,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {"gen", "model", "methods", "group_counts", "train_size", "test_size",
                 "seeds", "output_dir", "min_group_samples", "diagnostic_groups",
                 "quantile_grid", "method_overrides"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(d)
        if "gen" in kwargs:
            kwargs["gen"] = GenConfig.from_dict(kwargs["gen"])
        if "model" in kwargs:
            kwargs["model"] = ModelConfig.from_dict(kwargs["model"])
        for key in ("methods", "group_counts", "seeds"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


def default_config(**overrides) -> RunConfig:
    """The desk-scale default run (200k biased train, 40k unbiased test, 3 seeds)."""
    cfg = RunConfig()
    if overrides:
        cfg = RunConfig.from_dict({**cfg.to_dict(), **overrides})
    return cfg


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config {path} is not valid JSON: {e.msg}") from None
    return RunConfig.from_dict(raw)


def save_config(cfg: RunConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(cfg.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(canonical_json(cfg.to_dict()).encode()).hexdigest()[:16]


def schema_hash(schema: DatasetSchema) -> str:
    return hashlib.sha256(canonical_json(schema.to_dict()).encode()).hexdigest()[:16]
