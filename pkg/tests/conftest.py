import numpy as np
import pytest

from d2q.data import Dataset, DatasetSchema


def make_dataset(durations, watch_times, user_ids=None, video_ids=None,
                 dense=None, ids=None, n_users=None, n_videos=None) -> Dataset:
    """Hand-rolled dataset for unit tests; ids default to (user, video)."""
    durations = np.asarray(durations, dtype=np.float64)
    watch_times = np.asarray(watch_times, dtype=np.float64)
    n = len(durations)
    user_ids = np.zeros(n, dtype=np.int64) if user_ids is None else np.asarray(user_ids)
    video_ids = (np.arange(n, dtype=np.int64) if video_ids is None
                 else np.asarray(video_ids))
    if dense is None:
        dense = np.log(durations)[:, None]
    dense = np.asarray(dense, dtype=np.float64)
    if ids is None:
        ids = np.column_stack([user_ids, video_ids])
    ids = np.asarray(ids, dtype=np.int64)
    schema = DatasetSchema(
        dense_len=dense.shape[1],
        id_vocab_sizes=(
            int(user_ids.max()) + 1 if n_users is None else n_users,
            int(video_ids.max()) + 1 if n_videos is None else n_videos,
        ),
    )
    return Dataset(schema=schema, user_ids=user_ids, video_ids=video_ids,
                   durations=durations, watch_times=watch_times,
                   dense=dense, ids=ids)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
