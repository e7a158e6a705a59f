import numpy as np
import pytest

import idvt.train_eval as te
from idvt.dataset_io import Dataset
from idvt.errors import ConfigError, SamplingImpossibleError
from idvt.model import Hyperparams
from idvt.sparse_graph import SparseBinaryMatrix
from idvt.train_eval import (
    MetricsReport,
    evaluate,
    evaluate_dataset,
    fit,
    inference_embeddings,
    pairs_by_user,
    rank_items,
    resolve_variant,
    sample_negatives,
    train_epoch,
)

from oracles import random_directed_edges, ranking_oracle


def build_dataset(seed=0, n=16, m=20, train_per_user=6, test_per_user=2, n_social=28):
    """In-memory dataset with full item coverage in the train pairs."""
    rng = np.random.default_rng(seed)
    train, test = set(), set()
    for i in range(m):  # base coverage so the train matrix has no empty item
        train.add((i % n, i))
    for u in range(n):
        have = {i for uu, i in train if uu == u}
        order = rng.permutation(m)
        for i in order:
            if len(have) >= train_per_user:
                break
            have.add(int(i))
        remaining = [int(i) for i in order if int(i) not in have]
        train.update((u, i) for i in have)
        test.update((u, i) for i in remaining[:test_per_user])
    social = random_directed_edges(rng, n, n_social)
    return Dataset(
        n=n, m=m,
        user_map={f"u{k}": k for k in range(n)},
        item_map={f"i{k}": k for k in range(m)},
        train_pairs=train, test_pairs=test, social_edges=social,
    )


def quick_hyper(**kw):
    base = dict(dim=8, n_layers=2, tau=0.2, threshold=0.4, drop_ratio=0.2,
                lambda1=0.05, lambda2=0.05, lambda3=1e-4, beta=0.5, lr=0.01,
                batch_size=64, epochs=3, top_k=5, seed=0)
    base.update(kw)
    return Hyperparams(**base)


# ---------------------------------------------------------------------------
# negative sampling


def test_forced_negative_when_single_candidate():
    # every user interacts with all items but one
    n, m = 4, 5
    pairs = {(u, i) for u in range(n) for i in range(m) if i != u}
    mat = SparseBinaryMatrix.from_pairs(n, m, pairs)
    for batch in sample_negatives(mat, epoch_seed=3, batch_size=64):
        for u, j in zip(batch.users, batch.neg_items):
            assert j == u  # the only missing item of user u is item u


def test_sampling_deterministic():
    mat = SparseBinaryMatrix.from_pairs(3, 6, {(u, i) for u in range(3) for i in range(3)})
    def collect(seed):
        return [
            (b.users.tolist(), b.pos_items.tolist(), b.neg_items.tolist())
            for b in sample_negatives(mat, epoch_seed=seed, batch_size=4)
        ]
    assert collect(11) == collect(11)
    assert collect(11) != collect(12)


def test_sampling_validity_and_uniformity():
    # one user with 3 interacted and 3 free items
    mat = SparseBinaryMatrix.from_pairs(1, 6, {(0, 0), (0, 1), (0, 2)})
    counts = {3: 0, 4: 0, 5: 0}
    draws = 0
    epoch = 0
    while draws < 10_000:
        for batch in sample_negatives(mat, epoch_seed=epoch, batch_size=8):
            for j in batch.neg_items:
                counts[int(j)] += 1
                draws += 1
        epoch += 1
    for j, count in counts.items():
        assert abs(count - draws / 3) < 200, counts


def test_sampling_impossible():
    mat = SparseBinaryMatrix.from_pairs(2, 3, {(u, i) for u in range(2) for i in range(3)})
    with pytest.raises(SamplingImpossibleError):
        next(sample_negatives(mat, epoch_seed=0, batch_size=4))


def test_triples_satisfy_train_membership():
    ds = build_dataset()
    mat = SparseBinaryMatrix.from_pairs(ds.n, ds.m, ds.train_pairs)
    for batch in sample_negatives(mat, epoch_seed=5, batch_size=32):
        for u, i, j in zip(batch.users, batch.pos_items, batch.neg_items):
            assert (u, i) in ds.train_pairs
            assert (u, j) not in ds.train_pairs


# ---------------------------------------------------------------------------
# ranking


def test_rank_items_order_and_ties():
    items = np.array([[0.9], [0.1]])
    ranked = rank_items(np.array([1.0]), items)
    assert ranked.tolist() == [0, 1]
    equal = np.zeros((4, 1))
    assert rank_items(np.array([1.0]), equal).tolist() == [0, 1, 2, 3]


def test_rank_items_exclusion():
    items = np.array([[3.0], [2.0], [1.0]])
    ranked = rank_items(np.array([1.0]), items, exclude=[0])
    assert 0 not in ranked.tolist()
    assert ranked.tolist() == [1, 2]


# ---------------------------------------------------------------------------
# evaluation


def test_evaluate_single_user_rank_one():
    user_vecs = np.array([[1.0, 0.0]])
    item_vecs = np.array([[1.0, 0.0], [0.5, 0.1], [0.2, 0.3], [0.1, 0.0], [0.0, 0.2], [0.0, 0.1]])
    report = evaluate(user_vecs, item_vecs, {0: np.array([0])}, k=5)
    assert report.precision == pytest.approx(0.2)
    assert report.recall == pytest.approx(1.0)
    assert report.ndcg == pytest.approx(1.0)
    assert report.hit_ratio == pytest.approx(1.0)


def test_evaluate_rank_three_ndcg_half():
    user_vecs = np.array([[1.0]])
    item_vecs = np.array([[5.0], [4.0], [3.0], [2.0], [1.0], [0.5]])
    report = evaluate(user_vecs, item_vecs, {0: np.array([2])}, k=5)
    assert report.ndcg == pytest.approx(1.0 / np.log2(4.0))
    assert report.ndcg == pytest.approx(0.5)


def test_evaluate_no_hits_all_zero():
    user_vecs = np.array([[1.0], [1.0]])
    item_vecs = np.array([[9.0], [8.0], [7.0], [6.0], [5.0], [0.1], [0.2]])
    report = evaluate(user_vecs, item_vecs, {0: np.array([5]), 1: np.array([6])}, k=5)
    assert report.precision == 0.0
    assert report.recall == 0.0
    assert report.ndcg == 0.0
    assert report.hit_ratio == 0.0


def test_evaluate_skips_and_counts_empty_users():
    user_vecs = np.zeros((3, 1))
    item_vecs = np.ones((4, 1))
    report = evaluate(user_vecs, item_vecs, {1: np.array([2])}, k=2)
    assert report.evaluated_users == 1
    assert report.skipped_users == 2


@pytest.mark.parametrize("seed", range(4))
def test_evaluate_matches_brute_force_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 12))
    m = int(rng.integers(10, 50))
    d = 3
    # integer-valued embeddings make scores exact, so ties exercise the rule
    user_vecs = rng.integers(-3, 4, size=(n, d)).astype(float)
    item_vecs = rng.integers(-3, 4, size=(m, d)).astype(float)
    test_by_user = {}
    exclude_by_user = {}
    for u in range(n):
        items = rng.permutation(m)
        test_by_user[u] = np.sort(items[:3])
        exclude_by_user[u] = np.sort(items[3:7])
    for hit_mode in ("pooled", "peruser"):
        report = evaluate(user_vecs, item_vecs, test_by_user, exclude_by_user, k=5,
                          hit_mode=hit_mode)
        expected = ranking_oracle(user_vecs, item_vecs, test_by_user, exclude_by_user,
                                  k=5, hit_mode=hit_mode)
        assert report.hit_ratio == expected["hit_ratio"]
        assert report.precision == expected["precision"]
        assert report.recall == expected["recall"]
        assert report.ndcg == expected["ndcg"]


def test_evaluate_invariant_to_monotone_score_transform():
    rng = np.random.default_rng(9)
    user_vecs = rng.normal(size=(5, 3))
    item_vecs = rng.normal(size=(20, 3))
    test_by_user = {u: np.array([u, u + 5]) for u in range(5)}
    base = evaluate(user_vecs, item_vecs, test_by_user, k=5)
    # positive scaling and a constant shift (via an appended dimension)
    scaled = evaluate(3.7 * user_vecs, item_vecs, test_by_user, k=5)
    shifted_users = np.hstack([user_vecs, np.full((5, 1), 2.0)])
    shifted_items = np.hstack([item_vecs, np.ones((20, 1))])
    shifted = evaluate(shifted_users, shifted_items, test_by_user, k=5)
    for other in (scaled, shifted):
        assert other.precision == base.precision
        assert other.recall == base.recall
        assert other.ndcg == base.ndcg
        assert other.hit_ratio == base.hit_ratio


def test_excluding_train_items_never_hurts():
    rng = np.random.default_rng(10)
    ds = build_dataset(seed=3)
    user_vecs = rng.normal(size=(ds.n, 4))
    item_vecs = rng.normal(size=(ds.m, 4))
    with_mask = evaluate_dataset(user_vecs, item_vecs, ds, k=5, exclude_train=True)
    without = evaluate_dataset(user_vecs, item_vecs, ds, k=5, exclude_train=False)
    assert with_mask.precision >= without.precision
    assert with_mask.recall >= without.recall
    assert with_mask.ndcg >= without.ndcg
    assert with_mask.hit_ratio >= without.hit_ratio


def test_evaluate_thread_count_independent():
    rng = np.random.default_rng(11)
    ds = build_dataset(seed=4)
    user_vecs = rng.normal(size=(ds.n, 4))
    item_vecs = rng.normal(size=(ds.m, 4))
    single = evaluate_dataset(user_vecs, item_vecs, ds, k=5, threads=1)
    multi = evaluate_dataset(user_vecs, item_vecs, ds, k=5, threads=4)
    assert single.to_json() == multi.to_json()
    assert single.per_user == multi.per_user


def test_metrics_report_json_shape():
    report = MetricsReport(k=5, hit_ratio=0.1, precision=0.2, recall=0.3, ndcg=0.4,
                           seed=7, epoch=3, variant="full")
    payload = report.to_json()
    assert payload.startswith('{"k": 5, "hit_ratio": 0.1, "precision": 0.2')
    assert '"variant": "full"' in payload


# ---------------------------------------------------------------------------
# training


def frozen_negative_dataset(n=6, m=7):
    """Every user holds all items but one, forcing the negative draw."""
    train = {(u, i) for u in range(n) for i in range(m) if i != u}
    social = {(u, (u + 1) % n) for u in range(n)}
    return Dataset(
        n=n, m=m,
        user_map={f"u{k}": k for k in range(n)},
        item_map={f"i{k}": k for k in range(m)},
        train_pairs=train, test_pairs=set(), social_edges=social,
    )


def test_zero_lr_keeps_parameters_and_loss_constant():
    ds = frozen_negative_dataset()
    hyper = quick_hyper(lr=0.0, lambda1=0.0, lambda2=0.0, lambda3=0.0,
                        epochs=4, batch_size=1024)
    result = fit(ds, hyper, "no_both", patience=0)
    params = result.state.params
    fresh = fit(ds, hyper, "no_both", patience=0).state.params
    for name in params.names():
        assert np.array_equal(params[name].data, fresh[name].data)
    losses = [row["bpr"] for row in result.history]
    for value in losses[1:]:
        assert value == pytest.approx(losses[0], abs=1e-12)
    # and parameters never moved from init
    init = te.mdl.init_parameters(ds.n, ds.m, hyper.dim, te.RngHub(hyper.seed))
    assert np.array_equal(params["user_emb"].data, init["user_emb"].data)


def test_bpr_decreases_on_small_dataset():
    ds = build_dataset(seed=5, n=20, m=24)
    hyper = quick_hyper(lambda1=0.0, lambda2=0.0, lr=0.05, epochs=50,
                        batch_size=4096, dim=8)
    result = fit(ds, hyper, "no_both", patience=0)
    losses = np.array([row["bpr"] for row in result.history])
    slope = np.polyfit(np.arange(losses.size), losses, 1)[0]
    assert slope < 0.0
    assert losses[-1] < losses[0]


def test_training_deterministic_across_runs():
    ds = build_dataset(seed=6)
    hyper = quick_hyper(epochs=3)
    first = fit(ds, hyper, "full", patience=0)
    second = fit(ds, hyper, "full", patience=0)
    assert first.history == second.history
    for name in first.state.params.names():
        assert np.array_equal(first.state.params[name].data, second.state.params[name].data)


def test_epoch_stats_include_all_terms():
    ds = build_dataset(seed=7)
    state = te.TrainState(ds, quick_hyper(epochs=1), "full")
    stats = train_epoch(state)
    assert stats.bpr > 0.0
    assert stats.inter_gl != 0.0
    assert stats.intra_g != 0.0
    assert stats.inter_d != 0.0
    assert np.isfinite(stats.total)


def test_early_stopping_restores_best_params():
    ds = build_dataset(seed=8)
    hyper = quick_hyper(epochs=6, lambda1=0.0, lambda2=0.0, lr=0.05)
    result = fit(ds, hyper, "no_both", patience=2, val_fraction=0.2)
    assert result.best_epoch <= result.history[-1]["epoch"]
    assert "val_ndcg" in result.history[0]


# ---------------------------------------------------------------------------
# variants


def test_unknown_variant_rejected():
    with pytest.raises(ConfigError):
        resolve_variant("nope")


def test_no_both_equals_full_with_zero_lambdas():
    ds = build_dataset(seed=9)
    hyper_full = quick_hyper(lambda1=0.0, lambda2=0.0, epochs=3)
    a = fit(ds, hyper_full, "full", patience=0)
    b = fit(ds, quick_hyper(epochs=3), "no_both", patience=0)
    assert a.history == b.history
    for name in a.state.params.names():
        assert np.array_equal(a.state.params[name].data, b.state.params[name].data)
    ua, ia = inference_embeddings(a.state)
    ub, ib = inference_embeddings(b.state)
    assert np.array_equal(ua, ub) and np.array_equal(ia, ib)


def test_lightgcn_baseline_never_builds_social_matrix(monkeypatch):
    ds = build_dataset(seed=10)

    def boom(_dataset):
        raise AssertionError("social matrix requested")

    monkeypatch.setattr(te, "build_social_matrix", boom)
    hyper = quick_hyper(epochs=2)
    result = fit(ds, hyper, "lightgcn_baseline", patience=0)
    assert len(result.history) == 2
    with pytest.raises(AssertionError):
        fit(ds, hyper, "full", patience=0)


def test_bpr_mf_baseline_uses_raw_embeddings():
    ds = build_dataset(seed=11)
    result = fit(ds, quick_hyper(epochs=1), "bpr_mf_baseline", patience=0)
    user_vecs, item_vecs = inference_embeddings(result.state)
    assert np.array_equal(user_vecs, result.state.params["user_emb"].data)
    assert np.array_equal(item_vecs, result.state.params["item_emb"].data)


def test_variant_lambda_forcing():
    hyper = quick_hyper()
    assert te.apply_variant(hyper, "no_LV").lambda1 == 0.0
    assert te.apply_variant(hyper, "no_LV").lambda2 == hyper.lambda2
    assert te.apply_variant(hyper, "no_DV").lambda2 == 0.0
    both = te.apply_variant(hyper, "no_both")
    assert both.lambda1 == 0.0 and both.lambda2 == 0.0
