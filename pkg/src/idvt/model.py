"""Model views and loss terms.

The global view encodes the denoised social graph with a single-head GAT,
adds the result onto the user ID embeddings, propagates the fused users
and the items through LightGCN over the interaction graph, and merges the
propagated and social representations with a sigmoid gate.  The local view
is plain LightGCN over the interaction graph; the dropout-enhanced views
run the full global pipeline over two independently edge-dropped social
graphs.  Contrastive (InfoNCE) terms tie the views together and BPR drives
the ranking task.
"""

from dataclasses import dataclass, field

import numpy as np

from . import engine as eg
from .denoise import DenoisedSocialGraph
from .engine import Tensor
from .errors import ConfigError, DimensionError
from .optim import ParameterSet

LEAKY_SLOPE = 0.2


@dataclass
class Hyperparams:
    dim: int = 64
    n_layers: int = 2
    tau: float = 0.2
    threshold: float = 0.5
    drop_ratio: float = 0.1
    lambda1: float = 0.01
    lambda2: float = 0.01
    lambda3: float = 1e-4
    beta: float = 0.5
    lr: float = 1e-3
    batch_size: int = 2048
    epochs: int = 100
    top_k: int = 5
    seed: int = 0
    infonce_normalize: bool = True  # cosine similarities; False keeps raw dots
    infonce_negatives: str = "batch"  # or "all": denominator over every user

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigError(f"dim must be >= 1, got {self.dim}")
        if self.n_layers < 1:
            raise ConfigError(f"n_layers must be >= 1, got {self.n_layers}")
        if self.tau <= 0.0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        for name in ("lambda1", "lambda2", "lambda3"):
            if getattr(self, name) < 0.0:
                raise ConfigError(f"{name} must be non-negative")
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigError(f"beta must be in [0, 1], got {self.beta}")
        if self.threshold < 0.0:
            raise ConfigError(f"threshold must be non-negative, got {self.threshold}")
        if not 0.0 <= self.drop_ratio <= 1.0:
            raise ConfigError(f"drop_ratio must be in [0, 1], got {self.drop_ratio}")
        if self.infonce_negatives not in ("batch", "all"):
            raise ConfigError(f"infonce_negatives must be 'batch' or 'all'")


@dataclass
class ViewEmbeddings:
    """All per-step embedding matrices the losses consume."""

    social: Tensor = None  # E^SO, GAT over the denoised graph
    fused: Tensor = None  # E^FU = E^SO + E^IN
    global_user_propagated: Tensor = None  # E^G_FU, LightGCN user output
    global_item: Tensor = None  # E^G_I
    global_user: Tensor = None  # E^G_U, gated
    gate: Tensor = None  # g_u, entries strictly in (0, 1)
    local_user: Tensor = None  # E^L
    dropout_user_1: Tensor = None  # E^DR1
    dropout_user_2: Tensor = None  # E^DR2


def init_parameters(n_users, n_items, dim, hub, with_social=True):
    """Uniform[-0.05, 0.05] init of every learnable tensor, in fixed order."""
    rng = hub.stream("init")

    def uniform(rows, cols):
        return Tensor(rng.uniform(-0.05, 0.05, size=(rows, cols)), requires_grad=True)

    tensors = {
        "user_emb": uniform(n_users, dim),
        "item_emb": uniform(n_items, dim),
    }
    if with_social:
        tensors["gat_weight"] = uniform(dim, dim)
        tensors["gat_attn"] = uniform(2 * dim, 1)
        tensors["gate_w1"] = uniform(dim, dim)
        tensors["gate_w2"] = uniform(dim, dim)
    return ParameterSet(tensors)


def _attention_edges(n_users, graph):
    """Directed out-edges plus one self-loop per user, sorted by source."""
    if isinstance(graph, DenoisedSocialGraph):
        src, dst = graph.kept_src, graph.kept_dst
    else:
        src, dst = graph.edges()
    loop = np.arange(n_users, dtype=np.int64)
    src = np.concatenate([src.astype(np.int64), loop])
    dst = np.concatenate([dst.astype(np.int64), loop])
    order = np.lexsort((dst, src))
    return src[order], dst[order]


def gat_encode(e_in, graph, weight, attn):
    """Single-head graph attention over out-neighbors with self-loops.

    For user u and neighbor v: logit = LeakyReLU(a^T [W e_u || W e_v]),
    softmaxed over u's neighbor set (self-loop included, so never empty);
    the output row is the attention-weighted sum of the W e_v.
    """
    n_users, dim = e_in.shape
    if weight.shape != (dim, dim):
        raise DimensionError(f"gat weight shape {weight.shape}, expected {(dim, dim)}")
    if attn.shape != (2 * dim, 1):
        raise DimensionError(f"gat attention shape {attn.shape}, expected {(2 * dim, 1)}")
    src, dst = _attention_edges(n_users, graph)
    transformed = eg.matmul(e_in, eg.transpose(weight))  # row u is W e_u
    attn_src = eg.matmul(transformed, eg.gather_rows(attn, np.arange(dim)))
    attn_dst = eg.matmul(transformed, eg.gather_rows(attn, np.arange(dim, 2 * dim)))
    logits = eg.leaky_relu(
        eg.add(eg.gather_rows(attn_src, src), eg.gather_rows(attn_dst, dst)),
        LEAKY_SLOPE,
    )
    alpha = eg.segment_softmax(logits, src, n_users)
    messages = eg.scale_rows(eg.gather_rows(transformed, dst), alpha)
    return eg.segment_sum(messages, src, n_users)


def fuse(e_so, e_in):
    """Element-wise addition of social and ID embeddings."""
    return eg.add(e_so, e_in)


def lightgcn_propagate(e_u, e_i, adj, n_layers):
    """Alternating normalized propagation; output is the mean over layers 0..K."""
    u_layers = [e_u]
    i_layers = [e_i]
    for _ in range(n_layers):
        u_next = eg.spmm(adj.ui, i_layers[-1], matrix_t=adj.iu)
        i_next = eg.spmm(adj.iu, u_layers[-1], matrix_t=adj.ui)
        u_layers.append(u_next)
        i_layers.append(i_next)

    def mean_of(layers):
        acc = layers[0]
        for layer in layers[1:]:
            acc = eg.add(acc, layer)
        return eg.affine(acc, 1.0 / len(layers))

    return mean_of(u_layers), mean_of(i_layers)


def global_encode(e_in_u, e_in_i, graph, adj, weight, attn, n_layers):
    """Social GAT -> fuse -> LightGCN. Returns (E^G_FU, E^G_I, E^SO)."""
    e_so = gat_encode(e_in_u, graph, weight, attn)
    e_fu = fuse(e_so, e_in_u)
    e_g_fu, e_g_i = lightgcn_propagate(e_fu, e_in_i, adj, n_layers)
    return e_g_fu, e_g_i, e_so


def gate_aggregate(e_g_fu, e_so, w1, w2):
    """Sigmoid-gated convex combination of the two domains.

    g = sigmoid(e_fu W1^T + e_so W2^T); output g*e_fu + (1-g)*e_so.
    """
    if e_g_fu.shape != e_so.shape:
        raise DimensionError(f"gate inputs differ: {e_g_fu.shape} vs {e_so.shape}")
    pre = eg.add(eg.matmul(e_g_fu, eg.transpose(w1)), eg.matmul(e_so, eg.transpose(w2)))
    gate = eg.sigmoid(pre)
    combined = eg.add(
        eg.mul(gate, e_g_fu),
        eg.mul(eg.affine(gate, -1.0, 1.0), e_so),
    )
    return combined, gate


def local_encode(e_in_u, e_in_i, adj, n_layers):
    """User half of plain LightGCN; no social information enters."""
    user, _item = lightgcn_propagate(e_in_u, e_in_i, adj, n_layers)
    return user


def _prepare_views(e_a, e_b, batch, normalize, negatives):
    batch = np.asarray(batch, dtype=np.intp).reshape(-1)
    if batch.size == 0:
        raise ConfigError("contrastive batch is empty")
    anchors = eg.gather_rows(e_a, batch)
    positives = eg.gather_rows(e_b, batch)
    if negatives == "all":
        candidates = e_b
    else:
        candidates = positives
    if normalize:
        anchors = eg.normalize_rows(anchors)
        positives = eg.normalize_rows(positives)
        candidates = eg.normalize_rows(candidates) if negatives == "all" else positives
    return anchors, positives, candidates


def infonce_inter(e_a, e_b, tau, batch, normalize=True, negatives="batch"):
    """Cross-view InfoNCE summed over the batch.

    Positive pairs are the same user in the two views; the denominator runs
    over the batch (or every user with ``negatives='all'``) in view b.
    """
    if tau <= 0.0:
        raise ConfigError(f"tau must be positive, got {tau}")
    anchors, positives, candidates = _prepare_views(e_a, e_b, batch, normalize, negatives)
    pos = eg.sum_all(eg.mul(anchors, positives))
    sims = eg.affine(eg.matmul(anchors, eg.transpose(candidates)), 1.0 / tau)
    lse = eg.sum_all(eg.row_logsumexp(sims))
    return eg.sub(lse, eg.affine(pos, 1.0 / tau))


def infonce_intra(e_g, tau, batch, normalize=True, negatives="batch"):
    """Same-view InfoNCE, literally with both arguments the same matrix.

    The numerator is each user's self-similarity (a constant exp(1/tau)
    after normalization), so the term acts as a uniformity loss pushing
    same-view users apart.
    """
    return infonce_inter(e_g, e_g, tau, batch, normalize=normalize, negatives=negatives)


def infonce_dropout(e_dr1, e_dr2, tau, batch, normalize=True, negatives="batch"):
    """InfoNCE between the two dropout-enhanced views."""
    return infonce_inter(e_dr1, e_dr2, tau, batch, normalize=normalize, negatives=negatives)


def predict(e_u, e_i):
    """Inner product of unnormalized global embeddings."""
    u = np.asarray(e_u, dtype=np.float64).reshape(-1)
    i = np.asarray(e_i, dtype=np.float64).reshape(-1)
    if u.shape != i.shape:
        raise DimensionError(f"predict: {u.shape} vs {i.shape}")
    return float(np.dot(u, i))


def bpr_loss(pos_scores, neg_scores):
    """Sum of -log sigmoid(pos - neg) over score pairs."""
    if pos_scores.shape != neg_scores.shape:
        raise DimensionError(
            f"bpr_loss: {pos_scores.shape} vs {neg_scores.shape} score shapes"
        )
    return eg.sum_all(eg.softplus(eg.sub(neg_scores, pos_scores)))


@dataclass
class LossTerms:
    """Per-batch scalar tensors; None means the term is disabled."""

    bpr: Tensor
    inter_gl: Tensor = None
    intra_g: Tensor = None
    inter_d: Tensor = None
    reg: Tensor = None


def total_loss(terms, hyper):
    """L_BPR + l1*(beta*inter + (1-beta)*intra) + l2*dropout + l3*||theta||^2.

    Zero-weight terms are skipped entirely, so a disabled view never has to
    be computed.
    """
    total = terms.bpr
    if hyper.lambda1 > 0.0:
        view_term = None
        if hyper.beta > 0.0:
            if terms.inter_gl is None:
                raise ConfigError("lambda1 > 0 with beta > 0 requires the inter-view term")
            view_term = eg.affine(terms.inter_gl, hyper.beta)
        if hyper.beta < 1.0:
            if terms.intra_g is None:
                raise ConfigError("lambda1 > 0 with beta < 1 requires the intra-view term")
            intra = eg.affine(terms.intra_g, 1.0 - hyper.beta)
            view_term = intra if view_term is None else eg.add(view_term, intra)
        total = eg.add(total, eg.affine(view_term, hyper.lambda1))
    if hyper.lambda2 > 0.0:
        if terms.inter_d is None:
            raise ConfigError("lambda2 > 0 requires the dropout-view term")
        total = eg.add(total, eg.affine(terms.inter_d, hyper.lambda2))
    if hyper.lambda3 > 0.0 and terms.reg is not None:
        total = eg.add(total, eg.affine(terms.reg, hyper.lambda3))
    return total


def squared_norm(tensor, rows=None):
    """Sum of squared entries, optionally restricted to the given rows."""
    if rows is not None:
        tensor = eg.gather_rows(tensor, rows)
    return eg.sum_all(eg.mul(tensor, tensor))
