"""Synthetic community-structured datasets with planted social noise.

Users and items are partitioned into communities; every user interacts only
with items of its own community, so a cross-community social pair shares no
items by construction ("noise") while intra-community pairs are drawn until
they share at least one ("shared interest").  The realized noise ratio of
the written files therefore equals the requested fraction up to rounding.
"""

import os

import numpy as np

from .errors import GenerationError
from .rng import RngHub

RATINGS_FILE = "ratings.txt"
TRUST_FILE = "trust.txt"
LABELS_FILE = "social_labels.txt"

_MIN_DEGREE = 5


def make_synthetic(n_users, n_items, communities, noise_fraction, seed, out_dir,
                   items_per_user=12, social_pairs_per_user=4.0):
    """Write ratings/trust/label files; returns the output directory.

    Guarantees every user at least ``items_per_user`` interactions, every
    item at least five, and every user at least one social edge, so the
    5-core and social filters leave the data untouched.
    """
    if communities < 2:
        raise GenerationError(f"need at least 2 communities, got {communities}")
    if not 0.0 <= noise_fraction <= 1.0:
        raise GenerationError(f"noise_fraction must be in [0, 1], got {noise_fraction}")
    if n_users < communities * 2 or n_items < communities * items_per_user:
        raise GenerationError("too few users or items per community")
    if items_per_user < _MIN_DEGREE:
        raise GenerationError(f"items_per_user must be >= {_MIN_DEGREE}")

    rng = RngHub(seed).stream("synth")
    user_comm = np.arange(n_users) % communities
    item_comm = np.arange(n_items) % communities
    comm_users = [np.flatnonzero(user_comm == c) for c in range(communities)]
    comm_items = [np.flatnonzero(item_comm == c) for c in range(communities)]
    if min(len(ci) for ci in comm_items) < items_per_user:
        raise GenerationError("a community has fewer items than items_per_user")
    if min(len(cu) for cu in comm_users) < _MIN_DEGREE:
        raise GenerationError(f"a community has fewer than {_MIN_DEGREE} users")

    items_of = {}
    for u in range(n_users):
        pool = comm_items[user_comm[u]]
        items_of[u] = set(rng.choice(pool, size=items_per_user, replace=False).tolist())

    # lift low-degree items to the 5-core floor with extra same-community users
    item_degree = np.zeros(n_items, dtype=np.int64)
    for u, items in items_of.items():
        for i in items:
            item_degree[i] += 1
    for i in range(n_items):
        deficit = _MIN_DEGREE - item_degree[i]
        if deficit <= 0:
            continue
        candidates = [u for u in comm_users[item_comm[i]] if i not in items_of[u]]
        if len(candidates) < deficit:
            raise GenerationError(f"cannot raise item {i} to degree {_MIN_DEGREE}")
        chosen = rng.choice(np.array(candidates), size=deficit, replace=False)
        for u in chosen:
            items_of[int(u)].add(i)
            item_degree[i] += 1

    total_pairs = int(np.ceil(n_users * social_pairs_per_user))
    if total_pairs < n_users:
        raise GenerationError("social_pairs_per_user < 1 cannot cover every user")
    n_noise = int(np.floor(noise_fraction * total_pairs + 0.5))
    labels = np.array([1] * n_noise + [0] * (total_pairs - n_noise))
    rng.shuffle(labels)

    def pick_intra_partner(u):
        pool = comm_users[user_comm[u]]
        for _ in range(1000):
            v = int(rng.choice(pool))
            if v != u and items_of[u] & items_of[v]:
                return v
        raise GenerationError(f"no intra-community partner shares an item with user {u}")

    def pick_cross_partner(u):
        while True:
            v = int(rng.integers(n_users))
            if user_comm[v] != user_comm[u]:
                return v

    pair_set = set()
    pairs = []

    def add_pair(u, noisy):
        for _ in range(1000):
            v = pick_cross_partner(u) if noisy else pick_intra_partner(u)
            key = (min(u, v), max(u, v))
            if key not in pair_set:
                pair_set.add(key)
                pairs.append((u, v, noisy))
                return
        raise GenerationError("could not place a fresh social pair")

    # first pass guarantees social coverage for every user, then fill to target
    for slot, u in enumerate(range(n_users)):
        if slot >= total_pairs:
            break
        add_pair(u, bool(labels[slot]))
    for slot in range(n_users, total_pairs):
        u = int(rng.integers(n_users))
        add_pair(u, bool(labels[slot]))

    os.makedirs(out_dir, exist_ok=True)
    user_token = [f"u{u}" for u in range(n_users)]
    item_token = [f"i{i}" for i in range(n_items)]
    with open(os.path.join(out_dir, RATINGS_FILE), "w", encoding="utf-8") as fh:
        for u in range(n_users):
            for i in sorted(items_of[u]):
                fh.write(f"{user_token[u]} {item_token[i]} 1\n")
    with open(os.path.join(out_dir, TRUST_FILE), "w", encoding="utf-8") as trust_fh, open(
        os.path.join(out_dir, LABELS_FILE), "w", encoding="utf-8"
    ) as label_fh:
        for u, v, noisy in pairs:
            tag = "cross" if noisy else "intra"
            for a, b in ((u, v), (v, u)):
                trust_fh.write(f"{user_token[a]} {user_token[b]}\n")
                label_fh.write(f"{user_token[a]} {user_token[b]} {tag}\n")
    return out_dir


def load_edge_labels(path, user_map):
    """Map a labels file back onto dense ids: {(u, v): 'intra'|'cross'}."""
    labels = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            fields = line.split()
            if len(fields) != 3:
                continue
            u_tok, v_tok, tag = fields
            if u_tok in user_map and v_tok in user_map:
                labels[(user_map[u_tok], user_map[v_tok])] = tag
    return labels
