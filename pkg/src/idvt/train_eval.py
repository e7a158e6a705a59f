"""Training loop, negative sampling, full-ranking evaluation, and variants."""

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import engine as eg
from . import model as mdl
from .dataset_io import Dataset, split
from .denoise import denoise_graph, edge_dropout
from .errors import ConfigError, SamplingImpossibleError
from .optim import Adam
from .rng import RngHub
from .sparse_graph import SparseBinaryMatrix, build_social_matrix, symmetric_normalize


@dataclass
class VariantSpec:
    uses_social: bool
    propagates: bool
    zero_lambda1: bool = False
    zero_lambda2: bool = False


VARIANTS = {
    "full": VariantSpec(uses_social=True, propagates=True),
    "no_LV": VariantSpec(uses_social=True, propagates=True, zero_lambda1=True),
    "no_DV": VariantSpec(uses_social=True, propagates=True, zero_lambda2=True),
    "no_both": VariantSpec(uses_social=True, propagates=True, zero_lambda1=True, zero_lambda2=True),
    "lightgcn_baseline": VariantSpec(uses_social=False, propagates=True, zero_lambda1=True, zero_lambda2=True),
    "bpr_mf_baseline": VariantSpec(uses_social=False, propagates=False, zero_lambda1=True, zero_lambda2=True),
}


def resolve_variant(name):
    try:
        return VARIANTS[name]
    except KeyError:
        raise ConfigError(f"unknown variant {name!r}; choose from {sorted(VARIANTS)}") from None


def apply_variant(hyper, name):
    spec = resolve_variant(name)
    changes = {}
    if spec.zero_lambda1:
        changes["lambda1"] = 0.0
    if spec.zero_lambda2:
        changes["lambda2"] = 0.0
    return replace(hyper, **changes) if changes else hyper


# ---------------------------------------------------------------------------
# negative sampling


@dataclass
class TripleBatch:
    users: np.ndarray
    pos_items: np.ndarray
    neg_items: np.ndarray


def sample_negatives(train_matrix, epoch_seed, batch_size):
    """Yield shuffled (u, i, j) batches, one uniform negative per train pair.

    Negatives come from rejection sampling over items the user never
    interacted with in the train matrix; a user interacting with every item
    makes that impossible and is reported as an error.
    """
    n_items = train_matrix.n_cols
    if np.any(train_matrix.row_degrees() == n_items):
        raise SamplingImpossibleError("a user interacts with every item; no negatives exist")
    src, dst = train_matrix.edges()
    rng = np.random.default_rng(epoch_seed)
    order = rng.permutation(src.size)
    for start in range(0, src.size, batch_size):
        chunk = order[start : start + batch_size]
        users = src[chunk]
        pos = dst[chunk]
        neg = np.empty_like(pos)
        for k, u in enumerate(users):
            row = train_matrix.row(u)
            while True:
                j = int(rng.integers(n_items))
                pos_idx = np.searchsorted(row, j)
                if pos_idx >= row.size or row[pos_idx] != j:
                    neg[k] = j
                    break
        yield TripleBatch(users=users, pos_items=pos, neg_items=neg)


# ---------------------------------------------------------------------------
# training


@dataclass
class EpochStats:
    epoch: int
    bpr: float
    inter_gl: float
    intra_g: float
    inter_d: float
    reg: float
    total: float


class TrainState:
    """Everything one training run mutates: parameters, optimizer, graphs."""

    def __init__(self, dataset, hyper, variant_name):
        self.dataset = dataset
        self.variant_name = variant_name
        self.spec = resolve_variant(variant_name)
        self.hyper = apply_variant(hyper, variant_name)
        self.hub = RngHub(self.hyper.seed)
        self.epoch = 0
        self.denoised = None
        self.val_by_user = None
        self.fit_exclude_by_user = None

        fit_pairs = dataset.train_pairs
        self.val_fraction_used = 0.0
        self.train_matrix = SparseBinaryMatrix.from_pairs(dataset.n, dataset.m, fit_pairs)
        self.adj = symmetric_normalize(self.train_matrix, allow_isolated=True) if self.spec.propagates else None
        self.social = build_social_matrix(dataset) if self.spec.uses_social else None
        self.params = mdl.init_parameters(
            dataset.n, dataset.m, self.hyper.dim, self.hub, with_social=self.spec.uses_social
        )
        self.adam = Adam(self.params, lr=self.hyper.lr)

    def hold_out_validation(self, val_fraction):
        """Carve a per-user validation slice out of the train pairs.

        The model then fits on the remainder; the held-out pairs drive
        early stopping.  Must be called before any training epoch.
        """
        carrier = Dataset(
            n=self.dataset.n,
            m=self.dataset.m,
            user_map=self.dataset.user_map,
            item_map=self.dataset.item_map,
            train_pairs=set(self.dataset.train_pairs),
            test_pairs=set(),
            social_edges=self.dataset.social_edges,
        )
        divided = split(carrier, val_fraction, self.hub.child_seed("val_split"))
        self.val_fraction_used = val_fraction
        self.train_matrix = SparseBinaryMatrix.from_pairs(
            self.dataset.n, self.dataset.m, divided.train_pairs
        )
        if self.spec.propagates:
            self.adj = symmetric_normalize(self.train_matrix, allow_isolated=True)
        self.val_by_user = pairs_by_user(divided.test_pairs)
        self.fit_exclude_by_user = pairs_by_user(divided.train_pairs)


def pairs_by_user(pairs):
    by_user = {}
    for u, i in pairs:
        by_user.setdefault(u, []).append(i)
    return {u: np.array(sorted(items), dtype=np.int64) for u, items in by_user.items()}


def _epoch_graphs(state):
    """Denoise the social graph (and two dropped copies) from current params."""
    graphs = {}
    if not state.spec.uses_social:
        return graphs
    snapshot = state.params["user_emb"].data
    state.denoised = denoise_graph(state.social, snapshot, state.hyper.threshold)
    graphs["main"] = state.denoised
    if state.hyper.lambda2 > 0.0:
        for view in (1, 2):
            dropped = edge_dropout(
                state.social,
                state.hyper.drop_ratio,
                state.hub.child_seed("dropout", state.epoch, view),
            )
            graphs[f"dr{view}"] = denoise_graph(dropped, snapshot, state.hyper.threshold)
    return graphs


def _global_user_item(state, graph):
    p = state.params
    e_g_fu, e_g_i, e_so = mdl.global_encode(
        p["user_emb"], p["item_emb"], graph, state.adj,
        p["gat_weight"], p["gat_attn"], state.hyper.n_layers,
    )
    e_g_u, gate = mdl.gate_aggregate(e_g_fu, e_so, p["gate_w1"], p["gate_w2"])
    return e_g_u, e_g_i


def _batch_terms(state, graphs, batch):
    p = state.params
    hyper = state.hyper
    if state.spec.uses_social:
        e_g_u, e_g_i = _global_user_item(state, graphs["main"])
    elif state.spec.propagates:
        e_g_u, e_g_i = mdl.lightgcn_propagate(
            p["user_emb"], p["item_emb"], state.adj, hyper.n_layers
        )
    else:
        e_g_u, e_g_i = p["user_emb"], p["item_emb"]

    u_rows = eg.gather_rows(e_g_u, batch.users)
    pos_scores = eg.row_sum(eg.mul(u_rows, eg.gather_rows(e_g_i, batch.pos_items)))
    neg_scores = eg.row_sum(eg.mul(u_rows, eg.gather_rows(e_g_i, batch.neg_items)))
    l_bpr = mdl.bpr_loss(pos_scores, neg_scores)

    batch_users = np.unique(batch.users)
    inter_gl = intra_g = inter_d = None
    if hyper.lambda1 > 0.0:
        local = mdl.local_encode(p["user_emb"], p["item_emb"], state.adj, hyper.n_layers)
        if hyper.beta > 0.0:
            inter_gl = mdl.infonce_inter(
                e_g_u, local, hyper.tau, batch_users,
                normalize=hyper.infonce_normalize, negatives=hyper.infonce_negatives,
            )
        if hyper.beta < 1.0:
            intra_g = mdl.infonce_intra(
                e_g_u, hyper.tau, batch_users,
                normalize=hyper.infonce_normalize, negatives=hyper.infonce_negatives,
            )
    if hyper.lambda2 > 0.0:
        e_dr1, _ = _global_user_item(state, graphs["dr1"])
        e_dr2, _ = _global_user_item(state, graphs["dr2"])
        inter_d = mdl.infonce_dropout(
            e_dr1, e_dr2, hyper.tau, batch_users,
            normalize=hyper.infonce_normalize, negatives=hyper.infonce_negatives,
        )

    reg = None
    if hyper.lambda3 > 0.0:
        touched_items = np.unique(np.concatenate([batch.pos_items, batch.neg_items]))
        reg = eg.add(
            mdl.squared_norm(p["user_emb"], batch_users),
            mdl.squared_norm(p["item_emb"], touched_items),
        )
        if state.spec.uses_social:
            for name in ("gat_weight", "gat_attn", "gate_w1", "gate_w2"):
                reg = eg.add(reg, mdl.squared_norm(p[name]))

    return mdl.LossTerms(bpr=l_bpr, inter_gl=inter_gl, intra_g=intra_g, inter_d=inter_d, reg=reg)


def train_epoch(state):
    """One pass over the train pairs; returns per-triple mean losses.

    The denoised graph (and both dropout graphs) are rebuilt once from the
    latest parameters and stay frozen for the whole epoch.
    """
    hyper = state.hyper
    graphs = _epoch_graphs(state)
    sums = {"bpr": 0.0, "inter_gl": 0.0, "intra_g": 0.0, "inter_d": 0.0, "reg": 0.0, "total": 0.0}
    n_triples = 0
    epoch_seed = state.hub.child_seed("sampling", state.epoch)
    for batch in sample_negatives(state.train_matrix, epoch_seed, hyper.batch_size):
        terms = _batch_terms(state, graphs, batch)
        total = mdl.total_loss(terms, hyper)
        sums["bpr"] += terms.bpr.item()
        for key, term in (("inter_gl", terms.inter_gl), ("intra_g", terms.intra_g),
                          ("inter_d", terms.inter_d), ("reg", terms.reg)):
            if term is not None:
                sums[key] += term.item()
        sums["total"] += total.item()
        n_triples += batch.users.size
        total.backward()
        state.adam.step()
    scale = 1.0 / max(n_triples, 1)
    return EpochStats(
        epoch=state.epoch,
        bpr=sums["bpr"] * scale,
        inter_gl=sums["inter_gl"] * scale,
        intra_g=sums["intra_g"] * scale,
        inter_d=sums["inter_d"] * scale,
        reg=sums["reg"] * scale,
        total=sums["total"] * scale,
    )


def inference_embeddings(state):
    """Frozen-forward user/item matrices for scoring (no gradient graph).

    The denoised graph is recomputed from the current parameters so
    inference always reflects the latest embeddings.
    """
    p = state.params
    e_u = p["user_emb"].detach()
    e_i = p["item_emb"].detach()
    if state.spec.uses_social:
        graph = denoise_graph(state.social, p["user_emb"].data, state.hyper.threshold)
        e_g_fu, e_g_i, e_so = mdl.global_encode(
            e_u, e_i, graph, state.adj,
            p["gat_weight"].detach(), p["gat_attn"].detach(), state.hyper.n_layers,
        )
        e_g_u, _ = mdl.gate_aggregate(
            e_g_fu, e_so, p["gate_w1"].detach(), p["gate_w2"].detach()
        )
        return e_g_u.data, e_g_i.data
    if state.spec.propagates:
        e_g_u, e_g_i = mdl.lightgcn_propagate(e_u, e_i, state.adj, state.hyper.n_layers)
        return e_g_u.data, e_g_i.data
    return e_u.data.copy(), e_i.data.copy()


@dataclass
class FitResult:
    state: TrainState
    history: list
    best_epoch: int
    best_val_ndcg: float = None


def fit(dataset, hyper, variant="full", patience=0, val_fraction=0.1):
    """Train until the epoch budget or early stopping on validation NDCG.

    With ``patience`` > 0 a per-user slice of the train pairs is held out;
    training stops after ``patience`` epochs without improvement and the
    best parameters are restored.
    """
    state = TrainState(dataset, hyper, variant)
    use_val = patience > 0 and val_fraction > 0.0
    if use_val:
        state.hold_out_validation(val_fraction)
    history = []
    best_snapshot = None
    best_ndcg = -1.0
    best_epoch = -1
    stale = 0
    for epoch in range(state.hyper.epochs):
        state.epoch = epoch
        stats = train_epoch(state)
        row = {
            "epoch": epoch, "bpr": stats.bpr, "inter_gl": stats.inter_gl,
            "intra_g": stats.intra_g, "inter_d": stats.inter_d, "total": stats.total,
        }
        if use_val:
            user_vecs, item_vecs = inference_embeddings(state)
            val = evaluate(
                user_vecs, item_vecs, state.val_by_user,
                exclude_by_user=state.fit_exclude_by_user, k=state.hyper.top_k,
            )
            row["val_ndcg"] = val.ndcg
            if val.ndcg > best_ndcg:
                best_ndcg = val.ndcg
                best_epoch = epoch
                best_snapshot = state.params.snapshot()
                stale = 0
            else:
                stale += 1
            history.append(row)
            if stale >= patience:
                break
        else:
            history.append(row)
    if use_val and best_snapshot is not None:
        state.params.restore(best_snapshot)
        return FitResult(state=state, history=history, best_epoch=best_epoch, best_val_ndcg=best_ndcg)
    return FitResult(state=state, history=history, best_epoch=len(history) - 1)


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class MetricsReport:
    k: int
    hit_ratio: float
    precision: float
    recall: float
    ndcg: float
    seed: int = None
    epoch: int = None
    variant: str = None
    config_digest: str = ""
    evaluated_users: int = 0
    skipped_users: int = 0
    per_user: list = field(default_factory=list, repr=False)

    def to_json(self):
        return json.dumps({
            "k": self.k,
            "hit_ratio": self.hit_ratio,
            "precision": self.precision,
            "recall": self.recall,
            "ndcg": self.ndcg,
            "seed": self.seed,
            "epoch": self.epoch,
            "variant": self.variant,
        })


def rank_items(user_vec, item_vecs, exclude=None):
    """All candidate items sorted by descending score, ties by ascending id.

    Excluded items (the user's train items) are removed from the list, not
    just pushed to the bottom.
    """
    scores = item_vecs @ np.asarray(user_vec, dtype=np.float64).reshape(-1)
    candidates = np.arange(item_vecs.shape[0], dtype=np.int64)
    if exclude is not None and len(exclude):
        mask = np.ones(item_vecs.shape[0], dtype=bool)
        mask[np.asarray(list(exclude), dtype=np.int64)] = False
        candidates = candidates[mask]
        scores = scores[mask]
    order = np.lexsort((candidates, -scores))
    return candidates[order]


def _idcg(n_relevant, k):
    hits = min(n_relevant, k)
    return float(np.sum(1.0 / np.log2(np.arange(2, hits + 2))))


def _user_metrics(user_vec, item_vecs, test_items, exclude, k):
    top = rank_items(user_vec, item_vecs, exclude=exclude)[:k]
    test_set = set(int(i) for i in test_items)
    hits = 0
    dcg = 0.0
    for position, item in enumerate(top):
        if int(item) in test_set:
            hits += 1
            dcg += 1.0 / np.log2(position + 2)
    n_test = len(test_set)
    return {
        "hits": hits,
        "n_test": n_test,
        "precision": hits / k,
        "recall": hits / n_test,
        "ndcg": dcg / _idcg(n_test, k),
    }


def evaluate(user_vecs, item_vecs, test_by_user, exclude_by_user=None, k=5,
             hit_mode="pooled", threads=1, seed=None, epoch=None, variant=None,
             config_digest=""):
    """Full-ranking top-K metrics over every user with test interactions.

    Hit ratio defaults to the pooled ratio sum(hits)/sum(|T_u|); the
    per-user at-least-one-hit variant is available as ``hit_mode='peruser'``.
    Results are reduced in user-index order, so they are identical for any
    thread count.
    """
    if hit_mode not in ("pooled", "peruser"):
        raise ConfigError(f"hit_mode must be 'pooled' or 'peruser', got {hit_mode!r}")
    exclude_by_user = exclude_by_user or {}
    users = sorted(u for u, items in test_by_user.items() if len(items))
    skipped = user_vecs.shape[0] - len(users)

    def one(u):
        return u, _user_metrics(
            user_vecs[u], item_vecs, test_by_user[u], exclude_by_user.get(u), k
        )

    if threads > 1 and len(users) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = dict(pool.map(one, users))
    else:
        results = dict(one(u) for u in users)

    rows = [results[u] for u in users]
    if not rows:
        report = MetricsReport(k=k, hit_ratio=0.0, precision=0.0, recall=0.0, ndcg=0.0)
    else:
        total_hits = sum(r["hits"] for r in rows)
        total_test = sum(r["n_test"] for r in rows)
        if hit_mode == "pooled":
            hit_ratio = total_hits / total_test
        else:
            hit_ratio = float(np.mean([1.0 if r["hits"] else 0.0 for r in rows]))
        report = MetricsReport(
            k=k,
            hit_ratio=float(hit_ratio),
            precision=float(np.mean([r["precision"] for r in rows])),
            recall=float(np.mean([r["recall"] for r in rows])),
            ndcg=float(np.mean([r["ndcg"] for r in rows])),
        )
    report.seed = seed
    report.epoch = epoch
    report.variant = variant
    report.config_digest = config_digest
    report.evaluated_users = len(users)
    report.skipped_users = skipped
    report.per_user = [(u, results[u]) for u in users]
    return report


def evaluate_dataset(user_vecs, item_vecs, dataset, k=5, exclude_train=True, **kwargs):
    test_by_user = pairs_by_user(dataset.test_pairs)
    exclude = pairs_by_user(dataset.train_pairs) if exclude_train else None
    return evaluate(user_vecs, item_vecs, test_by_user, exclude_by_user=exclude, k=k, **kwargs)


# ---------------------------------------------------------------------------
# end-to-end runs


def run_training(config, dataset=None):
    """Fit one variant from a RunConfig; returns (report, fit_result)."""
    from .config import load_dataset_from_config

    if dataset is None:
        dataset = load_dataset_from_config(config)
    hyper = config.hyperparams()
    result = fit(
        dataset, hyper, config.variant,
        patience=config.patience, val_fraction=config.val_fraction,
    )
    user_vecs, item_vecs = inference_embeddings(result.state)
    report = evaluate_dataset(
        user_vecs, item_vecs, dataset, k=hyper.top_k,
        exclude_train=config.exclude_train, hit_mode=config.hit_mode,
        threads=config.eval_threads, seed=hyper.seed, epoch=result.best_epoch,
        variant=config.variant, config_digest=config.digest(),
    )
    return report, result


def run_variant(variant, config, dataset=None):
    """MetricsReport for one named variant (config's variant is overridden)."""
    resolve_variant(variant)
    config = config.with_overrides(variant=variant)
    report, _result = run_training(config, dataset=dataset)
    return report
