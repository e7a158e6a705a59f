"""Interest-aware denoising of the social graph, plus stochastic edge dropout.

Each directed social edge (u, v) gets an interest-confidence score: the
cosine similarity of the two users' structural embeddings (sums of their
one-hop social neighbors' ID embeddings), mapped from [-1, 1] to [0, 1].
Edges scoring below a threshold are treated as noise and removed.  Scoring
happens outside the gradient tape: the denoised graph is a constant input
to the model for the rest of the epoch.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError
from .sparse_graph import SparseBinaryMatrix

EPS = 1e-12


@dataclass
class StructuralEmbeddings:
    """Rows are sums of each user's out-neighbors' ID embeddings."""

    matrix: np.ndarray
    social: SparseBinaryMatrix
    source: np.ndarray  # the ID-embedding snapshot the rows were built from


@dataclass
class DenoisedSocialGraph:
    """Scored directed edges with a keep/remove verdict per edge."""

    n_users: int
    src: np.ndarray  # original edge sources
    dst: np.ndarray  # original edge destinations
    scores: np.ndarray  # interest confidence per original edge
    threshold: float
    kept_mask: np.ndarray

    @property
    def kept_src(self):
        return self.src[self.kept_mask]

    @property
    def kept_dst(self):
        return self.dst[self.kept_mask]

    @property
    def kept_edges(self):
        return list(zip(self.kept_src.tolist(), self.kept_dst.tolist()))

    @property
    def removal_ratio(self):
        if self.src.size == 0:
            return 0.0
        return float(np.count_nonzero(~self.kept_mask) / self.src.size)

    def to_matrix(self):
        return SparseBinaryMatrix.from_pairs(
            self.n_users, self.n_users, zip(self.kept_src, self.kept_dst)
        )


def structural_embeddings(social, embeddings):
    """S @ E: aggregate one-hop social neighborhoods of the ID embeddings."""
    emb = np.asarray(embeddings, dtype=np.float64)
    if emb.ndim != 2 or social.n_cols != emb.shape[0] or social.n_rows != emb.shape[0]:
        raise DimensionError(
            f"social {social.shape} incompatible with embeddings {emb.shape}"
        )
    return StructuralEmbeddings(
        matrix=social.to_scipy() @ emb, social=social, source=emb
    )


def interest_confidence(e_u, e_v, eps=EPS):
    """(cos(e_u, e_v) + 1) / 2 in [0, 1]; near-zero vectors score 0.5.

    The cosine uses an eps-guarded denominator: if either norm is below
    ``eps`` the cosine is defined as 0, making the score total.
    """
    e_u = np.asarray(e_u, dtype=np.float64).reshape(-1)
    e_v = np.asarray(e_v, dtype=np.float64).reshape(-1)
    nu = np.linalg.norm(e_u)
    nv = np.linalg.norm(e_v)
    if nu < eps or nv < eps:
        cos = 0.0
    else:
        cos = float(np.dot(e_u, e_v) / (nu * nv))
        cos = min(1.0, max(-1.0, cos))
    return (cos + 1.0) / 2.0


def _edge_scores(structural, src, dst, eps=EPS):
    mat = structural.matrix
    norms = np.linalg.norm(mat, axis=1)
    dots = np.einsum("ij,ij->i", mat[src], mat[dst])
    denom = norms[src] * norms[dst]
    valid = (norms[src] >= eps) & (norms[dst] >= eps)
    cos = np.where(valid, dots / np.where(valid, denom, 1.0), 0.0)
    cos = np.clip(cos, -1.0, 1.0)
    return (cos + 1.0) / 2.0


def denoise_graph(social, embeddings, threshold):
    """Score every directed edge and drop those with confidence < threshold.

    Each directed edge is judged independently: (u, v) may survive while
    (v, u) does not.  Thresholds above 1 are legal and remove everything
    (useful for sweeps); negative thresholds are rejected.
    """
    if threshold < 0.0:
        raise ConfigError(f"threshold must be non-negative, got {threshold}")
    structural = structural_embeddings(social, embeddings)
    src, dst = social.edges()
    scores = _edge_scores(structural, src, dst)
    kept = scores >= threshold
    return DenoisedSocialGraph(
        n_users=social.n_rows,
        src=src,
        dst=dst,
        scores=scores,
        threshold=float(threshold),
        kept_mask=kept,
    )


def edge_dropout(social, drop_ratio, seed):
    """Remove exactly round(drop_ratio * |E|) directed edges uniformly.

    Rounds half up so the removed count is deterministic; the choice of
    edges is uniform without replacement, fixed by the seed.
    """
    if not 0.0 <= drop_ratio <= 1.0:
        raise ConfigError(f"drop_ratio must be in [0, 1], got {drop_ratio}")
    src, dst = social.edges()
    n_edges = src.size
    n_drop = int(np.floor(drop_ratio * n_edges + 0.5))
    if n_drop == 0:
        return SparseBinaryMatrix.from_pairs(social.n_rows, social.n_cols, zip(src, dst))
    rng = np.random.default_rng(seed)
    dropped = rng.choice(n_edges, size=n_drop, replace=False)
    keep = np.ones(n_edges, dtype=bool)
    keep[dropped] = False
    return SparseBinaryMatrix.from_pairs(
        social.n_rows, social.n_cols, zip(src[keep], dst[keep])
    )


def write_edge_audit(graph, kept_path, removed_path, user_tokens=None):
    """Dump kept/removed edges as ``u v ic`` text lines for inspection."""

    def fmt(u, v, score):
        if user_tokens is not None:
            return f"{user_tokens[u]} {user_tokens[v]} {score:.6f}\n"
        return f"{u} {v} {score:.6f}\n"

    with open(kept_path, "w", encoding="utf-8") as kept_fh:
        for u, v, score in zip(graph.src[graph.kept_mask], graph.dst[graph.kept_mask], graph.scores[graph.kept_mask]):
            kept_fh.write(fmt(int(u), int(v), float(score)))
    with open(removed_path, "w", encoding="utf-8") as removed_fh:
        mask = ~graph.kept_mask
        for u, v, score in zip(graph.src[mask], graph.dst[mask], graph.scores[mask]):
            removed_fh.write(fmt(int(u), int(v), float(score)))
