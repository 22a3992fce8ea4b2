"""Interaction-log dataset: schema, validation, JSONL/CSV persistence, splits.

A dataset is a columnar store of logged (user, video, duration, watch_time)
events plus fixed-length dense and categorical feature vectors. Records are
kept in file order; all loaders validate every record against the schema and
report the offending row and field.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np


class DataError(ValueError):
    """Schema violation, parse failure, or degenerate dataset."""


@dataclass(frozen=True)
class DatasetSchema:
    """Declared feature layout shared by every record of a dataset."""

    dense_len: int
    id_vocab_sizes: tuple[int, ...]

    def __post_init__(self):
        if self.dense_len < 0:
            raise DataError(f"dense_len must be >= 0, got {self.dense_len}")
        if any(v < 1 for v in self.id_vocab_sizes):
            raise DataError(f"id vocab sizes must be >= 1, got {self.id_vocab_sizes}")

    @property
    def n_id_slots(self) -> int:
        return len(self.id_vocab_sizes)

    def feature_names(self) -> list[str]:
        dense = [f"dense_{i}" for i in range(self.dense_len)]
        ids = [f"id_{i}" for i in range(self.n_id_slots)]
        return dense + ids

    def to_dict(self) -> dict:
        return {"dense_len": self.dense_len, "id_vocab_sizes": list(self.id_vocab_sizes)}

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSchema":
        return cls(dense_len=int(d["dense_len"]), id_vocab_sizes=tuple(int(v) for v in d["id_vocab_sizes"]))


@dataclass(frozen=True)
class InteractionRecord:
    """One logged view event."""

    user_id: int
    video_id: int
    duration: float
    watch_time: float
    dense: tuple[float, ...]
    ids: tuple[int, ...]


@dataclass
class Dataset:
    """Ordered collection of interaction records, stored columnwise.

    Columns are plain numpy arrays aligned by row; ``records`` iterates in
    stored order. Instances are treated as immutable after construction.
    """

    schema: DatasetSchema
    user_ids: np.ndarray
    video_ids: np.ndarray
    durations: np.ndarray
    watch_times: np.ndarray
    dense: np.ndarray
    ids: np.ndarray

    def __post_init__(self):
        n = len(self.durations)
        self.user_ids = np.asarray(self.user_ids, dtype=np.int64)
        self.video_ids = np.asarray(self.video_ids, dtype=np.int64)
        self.durations = np.asarray(self.durations, dtype=np.float64)
        self.watch_times = np.asarray(self.watch_times, dtype=np.float64)
        self.dense = np.asarray(self.dense, dtype=np.float64).reshape(n, self.schema.dense_len)
        self.ids = np.asarray(self.ids, dtype=np.int64).reshape(n, self.schema.n_id_slots)
        for name, col in [("user_ids", self.user_ids), ("video_ids", self.video_ids),
                          ("watch_times", self.watch_times)]:
            if len(col) != n:
                raise DataError(f"column {name} has {len(col)} rows, expected {n}")
        _validate_columns(self)

    def __len__(self) -> int:
        return len(self.durations)

    def __getitem__(self, i: int) -> InteractionRecord:
        return InteractionRecord(
            user_id=int(self.user_ids[i]),
            video_id=int(self.video_ids[i]),
            duration=float(self.durations[i]),
            watch_time=float(self.watch_times[i]),
            dense=tuple(float(x) for x in self.dense[i]),
            ids=tuple(int(x) for x in self.ids[i]),
        )

    @property
    def records(self) -> Iterator[InteractionRecord]:
        for i in range(len(self)):
            yield self[i]

    @classmethod
    def from_records(cls, records: list[InteractionRecord], schema: DatasetSchema) -> "Dataset":
        n = len(records)
        return cls(
            schema=schema,
            user_ids=np.array([r.user_id for r in records], dtype=np.int64),
            video_ids=np.array([r.video_id for r in records], dtype=np.int64),
            durations=np.array([r.duration for r in records], dtype=np.float64),
            watch_times=np.array([r.watch_time for r in records], dtype=np.float64),
            dense=np.array([r.dense for r in records], dtype=np.float64).reshape(n, schema.dense_len),
            ids=np.array([r.ids for r in records], dtype=np.int64).reshape(n, schema.n_id_slots),
        )

    def take(self, indices: np.ndarray) -> "Dataset":
        """Row subset in the given index order."""
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            schema=self.schema,
            user_ids=self.user_ids[idx],
            video_ids=self.video_ids[idx],
            durations=self.durations[idx],
            watch_times=self.watch_times[idx],
            dense=self.dense[idx],
            ids=self.ids[idx],
        )

    def equals(self, other: "Dataset", tol: float = 0.0) -> bool:
        if self.schema != other.schema or len(self) != len(other):
            return False
        same_ids = (np.array_equal(self.user_ids, other.user_ids)
                    and np.array_equal(self.video_ids, other.video_ids)
                    and np.array_equal(self.ids, other.ids))
        if not same_ids:
            return False
        for a, b in [(self.durations, other.durations),
                     (self.watch_times, other.watch_times),
                     (self.dense, other.dense)]:
            if not np.allclose(a, b, rtol=0.0, atol=tol):
                return False
        return True


def _validate_columns(ds: Dataset) -> None:
    bad = np.flatnonzero(~(ds.durations > 0))
    if bad.size:
        raise DataError(f"record {bad[0]}: duration must be > 0, got {ds.durations[bad[0]]}")
    bad = np.flatnonzero(ds.watch_times < 0)
    if bad.size:
        raise DataError(f"record {bad[0]}: watch_time must be >= 0, got {ds.watch_times[bad[0]]}")
    for k, vocab in enumerate(ds.schema.id_vocab_sizes):
        col = ds.ids[:, k]
        bad = np.flatnonzero((col < 0) | (col >= vocab))
        if bad.size:
            raise DataError(
                f"record {bad[0]}: id_{k} value {col[bad[0]]} outside vocab size {vocab}")
    if not (np.isfinite(ds.dense).all() and np.isfinite(ds.durations).all()
            and np.isfinite(ds.watch_times).all()):
        raise DataError("non-finite value in dataset columns")


def _record_from_json(obj: dict, row: int) -> InteractionRecord:
    try:
        return InteractionRecord(
            user_id=int(obj["user_id"]),
            video_id=int(obj["video_id"]),
            duration=float(obj["duration"]),
            watch_time=float(obj["watch_time"]),
            dense=tuple(float(x) for x in obj["dense"]),
            ids=tuple(int(x) for x in obj["ids"]),
        )
    except KeyError as e:
        raise DataError(f"record {row}: missing field {e.args[0]!r}") from None


def _infer_schema(records: list[InteractionRecord]) -> DatasetSchema:
    dense_len = len(records[0].dense)
    n_slots = len(records[0].ids)
    vocab = [1] * n_slots
    for r in records:
        for k in range(min(n_slots, len(r.ids))):
            vocab[k] = max(vocab[k], r.ids[k] + 1)
    return DatasetSchema(dense_len=dense_len, id_vocab_sizes=tuple(vocab))


def _check_record_shape(r: InteractionRecord, schema: DatasetSchema, row: int) -> None:
    if len(r.dense) != schema.dense_len:
        raise DataError(
            f"record {row}: dense length {len(r.dense)} != schema dense_len {schema.dense_len}")
    if len(r.ids) != schema.n_id_slots:
        raise DataError(
            f"record {row}: ids length {len(r.ids)} != schema id slots {schema.n_id_slots}")
    if r.duration <= 0:
        raise DataError(f"record {row}: duration must be > 0, got {r.duration}")
    if r.watch_time < 0:
        raise DataError(f"record {row}: watch_time must be >= 0, got {r.watch_time}")
    for k, (v, vocab) in enumerate(zip(r.ids, schema.id_vocab_sizes)):
        if not 0 <= v < vocab:
            raise DataError(f"record {row}: id_{k} value {v} outside vocab size {vocab}")


def load_dataset(path, format: str = "jsonl", schema: DatasetSchema | None = None) -> Dataset:
    """Load and validate a dataset file.

    When ``schema`` is omitted it is inferred: feature lengths from the first
    record, vocab sizes from the per-slot maxima. Record order follows the
    file exactly.
    """
    if format == "jsonl":
        records = _load_jsonl(path)
    elif format == "csv":
        records = _load_csv(path)
    else:
        raise DataError(f"unknown format {format!r}")
    if not records:
        raise DataError(f"empty dataset file: {path}")
    if schema is None:
        schema = _infer_schema(records)
    for i, r in enumerate(records):
        _check_record_shape(r, schema, i)
    return Dataset.from_records(records, schema)


def _load_jsonl(path) -> list[InteractionRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"line {lineno}: JSON parse failure: {e.msg}") from None
            records.append(_record_from_json(obj, lineno))
    return records


def _load_csv(path) -> list[InteractionRecord]:
    records = []
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            return []
        dense_cols = [i for i, h in enumerate(header) if h.startswith("dense_")]
        id_cols = [i for i, h in enumerate(header) if h.startswith("id_")]
        try:
            base = {name: header.index(name) for name in
                    ("user_id", "video_id", "duration", "watch_time")}
        except ValueError as e:
            raise DataError(f"csv header missing required column: {e}") from None
        for row_idx, row in enumerate(reader):
            try:
                records.append(InteractionRecord(
                    user_id=int(row[base["user_id"]]),
                    video_id=int(row[base["video_id"]]),
                    duration=float(row[base["duration"]]),
                    watch_time=float(row[base["watch_time"]]),
                    dense=tuple(float(row[i]) for i in dense_cols),
                    ids=tuple(int(row[i]) for i in id_cols),
                ))
            except (ValueError, IndexError) as e:
                raise DataError(f"record {row_idx}: csv parse failure: {e}") from None
    return records


def save_dataset(ds: Dataset, path, format: str = "jsonl") -> None:
    """Write a dataset readable back by :func:`load_dataset`.

    Floats are written with ``repr`` (shortest round-tripping decimal), so a
    save/load cycle preserves values to well below 1e-9.
    """
    if len(ds) == 0:
        raise DataError("empty dataset")
    if format == "jsonl":
        text = dataset_to_jsonl(ds)
    elif format == "csv":
        text = _dataset_to_csv(ds)
    else:
        raise DataError(f"unknown format {format!r}")
    with open(path, "w", encoding="utf-8") as f:
        f.write(text)


def dataset_to_jsonl(ds: Dataset) -> str:
    lines = []
    for r in ds.records:
        lines.append(json.dumps({
            "user_id": r.user_id,
            "video_id": r.video_id,
            "duration": r.duration,
            "watch_time": r.watch_time,
            "dense": list(r.dense),
            "ids": list(r.ids),
        }))
    return "\n".join(lines) + "\n"


def _dataset_to_csv(ds: Dataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = (["user_id", "video_id", "duration", "watch_time"]
              + [f"dense_{i}" for i in range(ds.schema.dense_len)]
              + [f"id_{i}" for i in range(ds.schema.n_id_slots)])
    writer.writerow(header)
    for r in ds.records:
        writer.writerow([r.user_id, r.video_id, repr(r.duration), repr(r.watch_time)]
                        + [repr(x) for x in r.dense] + list(r.ids))
    return buf.getvalue()


def split_train_test(ds: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Disjoint random partition into (train, test).

    Test size is round(fraction * n); the same seed always produces the same
    split. Row order within each half follows the original dataset.
    """
    if not 0.0 < test_fraction < 1.0:
        raise DataError(f"test_fraction must be in (0, 1), got {test_fraction}")
    n = len(ds)
    n_test = int(round(test_fraction * n))
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    test_idx = np.sort(perm[:n_test])
    train_idx = np.sort(perm[n_test:])
    return ds.take(train_idx), ds.take(test_idx)
