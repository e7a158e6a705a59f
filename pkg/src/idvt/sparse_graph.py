"""CSR adjacency structures for the interaction and social graphs."""

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateGraphError, DimensionError


class SparseBinaryMatrix:
    """Binary CSR matrix with de-duplicated, sorted column indices per row.

    Immutable after construction; built once from a pair list and then
    queried (rows, degrees, intersections) or handed to scipy for products.
    """

    def __init__(self, n_rows, n_cols, row_offsets, col_indices):
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self.row_offsets = np.asarray(row_offsets, dtype=np.int64)
        self.col_indices = np.asarray(col_indices, dtype=np.int64)
        self._validate()

    def _validate(self):
        if self.row_offsets.shape != (self.n_rows + 1,):
            raise DimensionError("row_offsets must have n_rows + 1 entries")
        if self.row_offsets[0] != 0 or self.row_offsets[-1] != self.col_indices.shape[0]:
            raise DimensionError("row_offsets endpoints inconsistent with col_indices")
        if np.any(np.diff(self.row_offsets) < 0):
            raise DimensionError("row_offsets must be monotone non-decreasing")
        if self.col_indices.size:
            if self.col_indices.min() < 0 or self.col_indices.max() >= self.n_cols:
                raise DimensionError("column index out of range")
        for r in range(self.n_rows):
            row = self.col_indices[self.row_offsets[r] : self.row_offsets[r + 1]]
            if row.size > 1 and np.any(np.diff(row) <= 0):
                raise DimensionError(f"row {r} columns not strictly increasing")

    @classmethod
    def from_pairs(cls, n_rows, n_cols, pairs):
        pairs = list(pairs)
        if not pairs:
            return cls(n_rows, n_cols, np.zeros(n_rows + 1, dtype=np.int64), np.empty(0, dtype=np.int64))
        arr = np.asarray(pairs, dtype=np.int64)
        arr = np.unique(arr, axis=0)  # dedup + lexicographic sort by (row, col)
        rows, cols = arr[:, 0], arr[:, 1]
        if rows.min() < 0 or rows.max() >= n_rows or cols.min() < 0 or cols.max() >= n_cols:
            raise DimensionError("pair index out of range")
        offsets = np.zeros(n_rows + 1, dtype=np.int64)
        np.add.at(offsets, rows + 1, 1)
        np.cumsum(offsets, out=offsets)
        return cls(n_rows, n_cols, offsets, cols)

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self):
        return int(self.col_indices.shape[0])

    def row(self, r):
        """Sorted column indices of row ``r`` (a read-only view)."""
        return self.col_indices[self.row_offsets[r] : self.row_offsets[r + 1]]

    def degree(self, r):
        return int(self.row_offsets[r + 1] - self.row_offsets[r])

    def row_degrees(self):
        return np.diff(self.row_offsets)

    def col_degrees(self):
        counts = np.zeros(self.n_cols, dtype=np.int64)
        np.add.at(counts, self.col_indices, 1)
        return counts

    def edges(self):
        """(rows, cols) index arrays in (row, col) sorted order."""
        rows = np.repeat(np.arange(self.n_rows, dtype=np.int64), np.diff(self.row_offsets))
        return rows, self.col_indices.copy()

    def has(self, r, c):
        row = self.row(r)
        pos = np.searchsorted(row, c)
        return pos < row.size and row[pos] == c

    def to_scipy(self, dtype=np.float64):
        data = np.ones(self.nnz, dtype=dtype)
        return sp.csr_matrix(
            (data, self.col_indices.copy(), self.row_offsets.copy()),
            shape=(self.n_rows, self.n_cols),
        )

    def __eq__(self, other):
        if not isinstance(other, SparseBinaryMatrix):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.row_offsets, other.row_offsets)
            and np.array_equal(self.col_indices, other.col_indices)
        )

    def __repr__(self):
        return f"SparseBinaryMatrix({self.n_rows}x{self.n_cols}, nnz={self.nnz})"


class NormalizedAdjacency:
    """Bipartite propagation operator with 1/sqrt(deg_u * deg_i) weights.

    Holds the user->item weighted matrix and its transpose so one
    propagation layer is two sparse-dense products.
    """

    def __init__(self, ui, iu, user_degrees, item_degrees):
        self.ui = ui
        self.iu = iu
        self.user_degrees = user_degrees
        self.item_degrees = item_degrees

    @property
    def shape(self):
        return self.ui.shape

    def value(self, u, i):
        """Coefficient at (u, i); 0.0 when the edge is absent."""
        return float(self.ui[u, i])


def build_interaction_matrix(dataset, include_test=False):
    """CSR user-item matrix from the dataset's train pairs.

    Test pairs never enter unless ``include_test`` is set explicitly.
    """
    pairs = set(dataset.train_pairs)
    if include_test:
        pairs |= set(dataset.test_pairs)
    return SparseBinaryMatrix.from_pairs(dataset.n, dataset.m, pairs)


def build_social_matrix(dataset):
    """Directed n x n social adjacency; never symmetrized here."""
    return SparseBinaryMatrix.from_pairs(dataset.n, dataset.n, dataset.social_edges)


def symmetric_normalize(interaction, allow_isolated=False):
    """Weight each interaction edge by 1/sqrt(deg(u) * deg(i)).

    By default every user and item must have positive degree (the 5-core
    guarantees this on full data); a zero-degree node signals a
    preprocessing bug.  ``allow_isolated`` admits cold nodes -- a random
    train split can orphan an item -- which is safe because coefficients
    are only evaluated at edges, where both endpoint degrees are >= 1.
    """
    user_deg = interaction.row_degrees()
    item_deg = interaction.col_degrees()
    if not allow_isolated and (np.any(user_deg == 0) or np.any(item_deg == 0)):
        raise DegenerateGraphError("zero-degree node in interaction graph")
    rows, cols = interaction.edges()
    values = 1.0 / np.sqrt(user_deg[rows].astype(np.float64) * item_deg[cols].astype(np.float64))
    ui = sp.csr_matrix((values, (rows, cols)), shape=interaction.shape)
    iu = ui.T.tocsr()
    return NormalizedAdjacency(ui, iu, user_deg, item_deg)


def common_items(matrix, u, v):
    """|N_u intersect N_v| via sorted-list intersection."""
    return int(np.intersect1d(matrix.row(u), matrix.row(v), assume_unique=True).size)
