"""Versioned predictor checkpoints.

Layout: magic "D2QC", u32 version, u64 header length, UTF-8 JSON header,
then a payload of little-endian float64 tensors in header order. The header
carries the model/grouping metadata and the shape manifest; group CDFs ride
in the payload, compressed to a quantile-knot grid when a group's sample is
large.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from ..data import DatasetSchema
from ..distribution import EmpiricalCdf, GroupCdfs, compress_ecdf
from ..grouping import DurationGroups
from ..model import ModelConfig, NetParams
from ..predictors import Predictor
from .config import canonical_json, schema_hash

MAGIC = b"D2QC"
VERSION = 1
FULL_CDF_LIMIT = 100_000  # per-group sample count above which the grid kicks in


class CheckpointError(ValueError):
    pass


def serialize_predictor(p: Predictor, *, quantile_grid: int = 1000,
                        extra_header: dict | None = None) -> bytes:
    tensors = list(p.params.named_arrays())
    if p.group_cdfs is not None:
        for k in range(p.group_cdfs.m):
            e = p.group_cdfs[k]
            if e.n > FULL_CDF_LIMIT:
                e = compress_ecdf(e, quantile_grid)
            tensors.append((f"cdf_{k}", e.sorted_values))

    header = {
        "method": p.kind,
        "model_config": p.config.to_dict(),
        "schema": p.schema.to_dict(),
        "schema_hash": schema_hash(p.schema),
        "duration_norm": [p.params.dur_mean, p.params.dur_std],
        "tensors": [[name, list(t.shape)] for name, t in tensors],
        "groups": None if p.groups is None else p.groups.to_dict(),
        "n_cdfs": 0 if p.group_cdfs is None else p.group_cdfs.m,
        "q60_threshold": p.q60_threshold,
        "wlr_mode": p.wlr_mode,
        "train_meta": p.train_meta,
    }
    header.update(extra_header or {})
    header_bytes = canonical_json(header).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(t, dtype="<f8").tobytes()
                       for _, t in tensors)
    return MAGIC + struct.pack("<I", VERSION) + struct.pack("<Q", len(header_bytes)) \
        + header_bytes + payload


def deserialize_predictor(blob: bytes) -> tuple[Predictor, dict]:
    if blob[:4] != MAGIC:
        raise CheckpointError(f"bad magic {blob[:4]!r}, expected {MAGIC!r}")
    (version,) = struct.unpack("<I", blob[4:8])
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (hlen,) = struct.unpack("<Q", blob[8:16])
    header = json.loads(blob[16:16 + hlen].decode("utf-8"))
    offset = 16 + hlen

    arrays = {}
    for name, shape in header["tensors"]:
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
        arrays[name] = arr.reshape(shape).astype(np.float64).copy()
        offset += count * 8
    if offset != len(blob):
        raise CheckpointError(f"trailing bytes: payload ends at {offset}, "
                              f"file has {len(blob)}")

    config = ModelConfig.from_dict(header["model_config"])
    schema = DatasetSchema.from_dict(header["schema"])
    params = _assemble_params(arrays, config, header)

    groups = None if header["groups"] is None else DurationGroups.from_dict(header["groups"])
    group_cdfs = None
    if header["n_cdfs"]:
        cdfs = []
        for k in range(header["n_cdfs"]):
            values = arrays[f"cdf_{k}"]
            cdfs.append(EmpiricalCdf(sorted_values=values, n=len(values)))
        group_cdfs = GroupCdfs(cdfs=tuple(cdfs))

    predictor = Predictor(kind=header["method"], config=config, schema=schema,
                          params=params, groups=groups, group_cdfs=group_cdfs,
                          q60_threshold=header["q60_threshold"],
                          wlr_mode=header["wlr_mode"],
                          train_meta=header["train_meta"])
    return predictor, header


def _assemble_params(arrays: dict, config: ModelConfig, header: dict) -> NetParams:
    def take(name):
        if name not in arrays:
            raise CheckpointError(f"checkpoint is missing tensor {name!r}")
        return arrays[name]

    id_embeds = []
    s = 0
    while f"id_embed_{s}" in arrays:
        id_embeds.append(arrays[f"id_embed_{s}"])
        s += 1
    mlp_w = [take(f"mlp_w_{l}") for l in range(len(config.mlp_dims))]
    mlp_b = [take(f"mlp_b_{l}") for l in range(len(config.mlp_dims))]
    tower_w = [take(f"tower_w_{l}") for l in range(len(config.duration_tower))]
    tower_b = [take(f"tower_b_{l}") for l in range(len(config.duration_tower))]
    mean, std = header["duration_norm"]
    return NetParams(
        id_embeds=id_embeds,
        dense_w=take("dense_w"), dense_b=take("dense_b"),
        dur_w=take("dur_w"), dur_b=take("dur_b"),
        proj_w=take("proj_w"), proj_b=take("proj_b"),
        mlp_w=mlp_w, mlp_b=mlp_b, tower_w=tower_w, tower_b=tower_b,
        out_w=take("out_w"), out_b=take("out_b"),
        dur_mean=float(mean), dur_std=float(std),
    )


def save_checkpoint(path, p: Predictor, *, quantile_grid: int = 1000,
                    extra_header: dict | None = None) -> None:
    blob = serialize_predictor(p, quantile_grid=quantile_grid,
                               extra_header=extra_header)
    with open(path, "wb") as f:
        f.write(blob)


def load_checkpoint(path) -> tuple[Predictor, dict]:
    with open(path, "rb") as f:
        return deserialize_predictor(f.read())
