import numpy as np
import pytest

from idvt.dataset_io import Dataset
from idvt.errors import DegenerateGraphError
from idvt.sparse_graph import (
    SparseBinaryMatrix,
    build_interaction_matrix,
    build_social_matrix,
    common_items,
    symmetric_normalize,
)

from oracles import random_bipartite

# 3 users / 3 items toy: u1:{i1,i2}, u2:{i2,i3}, u3:{i3}
TOY_PAIRS = {(0, 0), (0, 1), (1, 1), (1, 2), (2, 2)}


def make_dataset(n, m, train, social=(), test=()):
    return Dataset(
        n=n, m=m,
        user_map={f"u{k}": k for k in range(n)},
        item_map={f"i{k}": k for k in range(m)},
        train_pairs=set(train), test_pairs=set(test), social_edges=set(social),
    )


def test_single_nonzero():
    ds = make_dataset(2, 2, {(0, 1)}, social={(0, 1)})
    mat = build_interaction_matrix(ds)
    assert mat.nnz == 1
    assert mat.has(0, 1) and not mat.has(0, 0) and not mat.has(1, 1)


def test_empty_train_matrix():
    ds = make_dataset(2, 2, set())
    mat = build_interaction_matrix(ds)
    assert mat.nnz == 0
    assert np.array_equal(mat.row_degrees(), [0, 0])


def test_toy_counts_and_degrees():
    ds = make_dataset(3, 3, TOY_PAIRS)
    mat = build_interaction_matrix(ds)
    assert mat.nnz == 5
    assert np.array_equal(mat.row_degrees(), [2, 2, 1])


def test_test_pairs_never_enter_train_matrix():
    ds = make_dataset(2, 2, {(0, 0)}, test={(1, 1)})
    assert build_interaction_matrix(ds).nnz == 1
    assert build_interaction_matrix(ds, include_test=True).nnz == 2


def test_social_matrix_is_directed():
    ds = make_dataset(2, 2, {(0, 0)}, social={(0, 1)})
    social = build_social_matrix(ds)
    assert social.has(0, 1) and not social.has(1, 0)
    both = build_social_matrix(make_dataset(2, 2, {(0, 0)}, social={(0, 1), (1, 0)}))
    assert both.nnz == 2


def test_from_pairs_dedups():
    mat = SparseBinaryMatrix.from_pairs(3, 3, [(0, 1), (0, 1), (1, 2), (2, 0)])
    assert mat.nnz == 3


def test_symmetric_normalize_values():
    single = SparseBinaryMatrix.from_pairs(1, 1, [(0, 0)])
    assert symmetric_normalize(single).value(0, 0) == pytest.approx(1.0)

    # u0 with degree 4, each item degree 1 -> coefficient 1/sqrt(4) = 0.5
    fan = SparseBinaryMatrix.from_pairs(1, 4, [(0, j) for j in range(4)])
    assert symmetric_normalize(fan).value(0, 2) == pytest.approx(0.5)

    toy = SparseBinaryMatrix.from_pairs(3, 3, TOY_PAIRS)
    adj = symmetric_normalize(toy)
    assert adj.value(0, 1) == pytest.approx(0.5)  # 1/sqrt(2*2)


def test_symmetric_normalize_rejects_zero_degree():
    mat = SparseBinaryMatrix.from_pairs(2, 2, [(0, 0), (0, 1)])  # user 1 empty
    with pytest.raises(DegenerateGraphError):
        symmetric_normalize(mat)


def test_normalized_values_symmetric_and_bounded():
    rng = np.random.default_rng(0)
    pairs = random_bipartite(rng, 6, 5)
    adj = symmetric_normalize(SparseBinaryMatrix.from_pairs(6, 5, pairs))
    for u, i in pairs:
        v = adj.value(u, i)
        assert 0.0 < v <= 1.0
        assert adj.iu[i, u] == pytest.approx(v)


def test_common_items():
    same = SparseBinaryMatrix.from_pairs(2, 3, [(0, j) for j in range(3)] + [(1, j) for j in range(3)])
    assert common_items(same, 0, 1) == 3
    disjoint = SparseBinaryMatrix.from_pairs(2, 4, [(0, 0), (0, 1), (1, 2), (1, 3)])
    assert common_items(disjoint, 0, 1) == 0
    toy = SparseBinaryMatrix.from_pairs(3, 3, TOY_PAIRS)
    assert common_items(toy, 0, 1) == 1


def test_common_items_symmetric():
    rng = np.random.default_rng(1)
    mat = SparseBinaryMatrix.from_pairs(8, 10, random_bipartite(rng, 8, 10))
    for _ in range(20):
        u, v = rng.integers(8, size=2)
        assert common_items(mat, u, v) == common_items(mat, v, u)


def test_row_degree_matches_inserted_bits():
    rng = np.random.default_rng(2)
    pairs = random_bipartite(rng, 7, 9)
    mat = SparseBinaryMatrix.from_pairs(7, 9, pairs)
    for u in range(7):
        assert mat.degree(u) == len({p for p in pairs if p[0] == u})
    assert mat.nnz == len(pairs)


def test_ones_propagation_matches_dense_oracle():
    # one propagation step of an all-ones item embedding through the
    # normalized adjacency must equal the dense row sums
    rng = np.random.default_rng(3)
    for trial in range(5):
        n, m = rng.integers(3, 10), rng.integers(3, 10)
        pairs = random_bipartite(rng, n, m)
        mat = SparseBinaryMatrix.from_pairs(n, m, pairs)
        adj = symmetric_normalize(mat)
        dense = np.zeros((n, m))
        deg_u = mat.row_degrees()
        deg_i = mat.col_degrees()
        for u, i in pairs:
            dense[u, i] = 1.0 / np.sqrt(deg_u[u] * deg_i[i])
        ones = np.ones((m, 1))
        assert np.allclose(adj.ui @ ones, dense @ ones, atol=1e-12)
