import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from d2q.data import DatasetSchema
from d2q.distribution import GroupCdfs, cdf_label, fit_ecdf, fit_group_cdfs
from d2q.grouping import DurationGroups, assign_groups, fit_duration_groups
from d2q.model import ModelConfig, init_params
from d2q.predictors import (Predictor, PredictorError, backdoor_estimate,
                            make_d2q_labels, make_wlr_labels, predict,
                            predict_dataset, train_predictor)
from d2q.synthgen import DiscreteToyWorld, make_toy_world
from d2q.cli.checkpoint import serialize_predictor
from conftest import make_dataset


def small_config(**kw):
    base = dict(dense_embed_dim=2, id_embed_total_dim=4, duration_embed_dim=2,
                projection_out_dim=4, mlp_dims=(4, 3), batch_size=64,
                learning_rate=0.05, epochs=2, seed=0)
    base.update(kw)
    return ModelConfig(**base)


def logit(p):
    return math.log(p / (1.0 - p))


# --- d2q labels -------------------------------------------------------------

def test_d2q_labels_single_group_midranks():
    ds = make_dataset(durations=[5.0, 5.0, 5.0, 5.0],
                      watch_times=[10.0, 20.0, 30.0, 40.0])
    g = fit_duration_groups(ds.durations, 1)
    cdfs = fit_group_cdfs(ds, g, min_group_samples=1)
    assert list(make_d2q_labels(ds, g, cdfs)) == [0.125, 0.375, 0.625, 0.875]


def test_d2q_labels_per_group_midranks():
    ds = make_dataset(durations=[1.0, 1.0, 9.0, 9.0],
                      watch_times=[5.0, 15.0, 50.0, 100.0])
    g = fit_duration_groups(ds.durations, 2)
    cdfs = fit_group_cdfs(ds, g, min_group_samples=1)
    assert list(make_d2q_labels(ds, g, cdfs)) == [0.25, 0.75, 0.25, 0.75]


def test_d2q_labels_ties_share_value():
    ds = make_dataset(durations=[2.0, 2.0, 2.0], watch_times=[7.0, 7.0, 1.0])
    g = fit_duration_groups(ds.durations, 1)
    cdfs = fit_group_cdfs(ds, g, min_group_samples=1)
    labels = make_d2q_labels(ds, g, cdfs)
    assert labels[0] == labels[1]


def test_d2q_labels_m1_equals_pooled_ecdf():
    rng = np.random.default_rng(0)
    ds = make_dataset(durations=rng.uniform(1, 100, 50),
                      watch_times=rng.uniform(0, 60, 50))
    g = fit_duration_groups(ds.durations, 1)
    cdfs = fit_group_cdfs(ds, g, min_group_samples=1)
    pooled = cdf_label(fit_ecdf(ds.watch_times), ds.watch_times)
    assert np.array_equal(make_d2q_labels(ds, g, cdfs), pooled)


# --- wlr labels -------------------------------------------------------------

def test_wlr_labels_rank_arithmetic():
    ds = make_dataset(durations=np.full(10, 5.0),
                      watch_times=np.arange(1.0, 11.0))
    y, w, thr = make_wlr_labels(ds)
    # interpolated between knots (0.55, 6) and (0.65, 7)
    assert thr == pytest.approx(6.5, abs=1e-12)
    assert list(y) == [0, 0, 0, 0, 0, 0, 1, 1, 1, 1]
    assert list(w) == [1, 1, 1, 1, 1, 1, 7, 8, 9, 10]


def test_wlr_labels_all_equal_watch_times():
    ds = make_dataset(durations=[1.0, 2.0, 3.0], watch_times=[4.0, 4.0, 4.0])
    y, w, thr = make_wlr_labels(ds)
    assert thr == 4.0
    assert list(y) == [1, 1, 1]
    assert list(w) == [4.0, 4.0, 4.0]


def test_wlr_positive_weight_mass_law():
    rng = np.random.default_rng(1)
    watch = rng.exponential(20.0, size=500)
    ds = make_dataset(durations=np.full(500, 9.0), watch_times=watch,
                      video_ids=np.zeros(500, dtype=int))
    y, w, thr = make_wlr_labels(ds)
    assert w[y == 1].sum() == watch[watch >= thr].sum()
    assert w[y == 1].min() >= thr >= 0


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.0, 1e4), min_size=2, max_size=60))
def test_wlr_positive_fraction_near_forty_percent(watch):
    ds = make_dataset(durations=np.full(len(watch), 3.0),
                      watch_times=np.asarray(watch),
                      video_ids=np.zeros(len(watch), dtype=int))
    y, w, thr = make_wlr_labels(ds)
    assert ((np.asarray(watch) >= thr) == (y == 1)).all()
    assert np.all(w[y == 0] == 1.0)


# --- training ---------------------------------------------------------------

def _toy_training_set(n=400, seed=0):
    rng = np.random.default_rng(seed)
    durations = rng.uniform(2.0, 120.0, size=n)
    users = rng.integers(0, 12, size=n)
    videos = rng.integers(0, 15, size=n)
    watch = durations * rng.uniform(0.05, 0.95, size=n)
    return make_dataset(durations=durations, watch_times=watch, user_ids=users,
                        video_ids=videos, n_users=12, n_videos=15)


@pytest.mark.parametrize("kind", ["vr", "wlr"])
def test_group_split_rejected_for_unsplit_methods(kind):
    ds = _toy_training_set()
    with pytest.raises(PredictorError, match="invalid"):
        train_predictor(kind, ds, 10, small_config())


def test_unknown_kind_rejected():
    with pytest.raises(PredictorError):
        train_predictor("boost", _toy_training_set(), 1, small_config())


def test_training_is_byte_deterministic():
    ds = _toy_training_set()
    a = train_predictor("d2q", ds, 4, small_config(), min_group_samples=5)
    b = train_predictor("d2q", ds, 4, small_config(), min_group_samples=5)
    assert serialize_predictor(a) == serialize_predictor(b)


def test_resd2q_with_empty_tower_equals_d2q():
    ds = _toy_training_set()
    cfg = small_config(duration_tower=())
    d2q = train_predictor("d2q", ds, 4, cfg, min_group_samples=5)
    res = train_predictor("resd2q", ds, 4, cfg, min_group_samples=5)
    assert np.array_equal(predict_dataset(d2q, ds), predict_dataset(res, ds))


def test_q60_threshold_stored():
    ds = _toy_training_set()
    p = train_predictor("wlr", ds, 1, small_config())
    _, _, thr = make_wlr_labels(ds)
    assert p.q60_threshold == thr


def test_training_records_route_through_label_group():
    # inference must use the same group index the label was built from
    ds = _toy_training_set()
    p = train_predictor("d2q", ds, 4, small_config(), min_group_samples=5)
    label_groups = assign_groups(fit_duration_groups(ds.durations, 4), ds.durations)
    assert np.array_equal(assign_groups(p.groups, ds.durations), label_groups)


# --- prediction -------------------------------------------------------------

def _handmade(kind, n_outputs=1, out_bias=(0.0,), groups=None, cdfs=None, q60=None,
              head="sigmoid"):
    cfg = small_config(output_head=head, n_outputs=n_outputs)
    params = init_params(cfg, dense_len=1, vocab_sizes=[2, 2])
    for _, t in params.named_arrays():
        t[...] = 0.0
    params.out_b[:] = out_bias
    schema = DatasetSchema(dense_len=1, id_vocab_sizes=(2, 2))
    return Predictor(kind=kind, config=cfg, schema=schema, params=params,
                     groups=groups, group_cdfs=cdfs, q60_threshold=q60)


def test_d2q_prediction_hits_cdf_knot():
    groups = DurationGroups(m=1, boundaries=())
    cdfs = GroupCdfs(cdfs=(fit_ecdf([10.0, 20.0, 30.0, 40.0]),))
    p = _handmade("d2q", out_bias=(logit(0.375),), groups=groups, cdfs=cdfs)
    assert abs(predict(p, [0.0], [0, 0], 5.0) - 20.0) < 1e-9


def test_wlr_adapted_and_classic_formulas():
    p = _handmade("wlr", n_outputs=2, out_bias=(logit(0.5), logit(0.4)), q60=6.5)
    assert abs(predict(p, [0.0], [0, 0], 5.0) - 0.6) < 1e-9  # 1.0 * (1 - 0.4)
    p.wlr_mode = "classic"
    assert abs(predict(p, [0.0], [0, 0], 5.0) - 1.0) < 1e-9  # odds at p_w = 0.5


def test_vr_prediction_clamped_at_zero():
    p = _handmade("vr", out_bias=(-3.0,), head="linear")
    assert predict(p, [0.0], [0, 0], 5.0) == 0.0


def test_predict_rejects_nonpositive_duration():
    p = _handmade("vr", head="linear")
    with pytest.raises(PredictorError):
        predict(p, [0.0], [0, 0], 0.0)


def test_predict_dataset_schema_guard():
    p = _handmade("vr", head="linear")
    other = make_dataset(durations=[2.0], watch_times=[1.0],
                         dense=np.zeros((1, 3)))
    with pytest.raises(PredictorError, match="schema"):
        predict_dataset(p, other)


def test_predictions_finite_and_nonnegative():
    ds = _toy_training_set()
    for kind, m in [("vr", 1), ("wlr", 1), ("d2q", 4), ("resd2q", 4)]:
        cfg = small_config(duration_tower=(3,)) if kind == "resd2q" else small_config()
        p = train_predictor(kind, ds, m, cfg, min_group_samples=5)
        preds = predict_dataset(p, ds)
        assert np.isfinite(preds).all() and (preds >= 0).all(), kind


# --- backdoor oracle --------------------------------------------------------

def test_backdoor_single_duration_degenerates():
    world = make_toy_world([7.0], [1.0], np.full((2, 2, 1), 3.5))
    assert backdoor_estimate(world, 0, 1) == 3.5


def test_backdoor_two_point_average():
    table = np.zeros((1, 1, 2))
    table[0, 0] = [2.0, 4.0]
    world = make_toy_world([5.0, 50.0], [0.5, 0.5], table)
    assert backdoor_estimate(world, 0, 0) == 3.0


def test_backdoor_matches_brute_force_enumeration(rng):
    durations = rng.uniform(1.0, 60.0, size=3)
    p_d = rng.dirichlet(np.ones(3))
    table = rng.uniform(0.0, 30.0, size=(3, 3, 3))
    world = make_toy_world(durations, p_d, table)
    for u in range(3):
        for v in range(3):
            expected = 0.0
            for i in range(3):
                expected += float(p_d[i]) * float(table[u, v, i])
            assert backdoor_estimate(world, u, v) == expected


def test_backdoor_missing_entry_rejected():
    table = np.full((1, 1, 2), np.nan)
    world = DiscreteToyWorld(durations=np.array([1.0, 2.0]),
                             p_d=np.array([0.5, 0.5]), expected_w=table)
    with pytest.raises(PredictorError, match="missing"):
        backdoor_estimate(world, 0, 0)


def test_backdoor_rejects_out_of_support():
    world = make_toy_world([7.0], [1.0], np.full((2, 2, 1), 3.5))
    with pytest.raises(PredictorError):
        backdoor_estimate(world, 5, 0)
