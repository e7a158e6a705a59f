"""Loading, filtering, and splitting of rating / trust files.

File formats: UTF-8 text, one record per line, whitespace-separated.
Ratings are ``user item rating`` triples, trust is ``truster trustee``
pairs; ``#``-prefixed comment lines are tolerated in both.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, EmptyDatasetError, ParseError


@dataclass
class TrustRecords:
    """Directed trust edges after dedup, plus what was dropped on load."""

    edges: list
    self_loops: int = 0
    duplicates: int = 0


@dataclass
class RawRecords:
    """Raw interaction and social records, pre-filtering.

    Interactions keep their rating value, but any rating counts as an
    interaction downstream (implicit feedback).  Social edges are directed,
    de-duplicated, and self-loop free.
    """

    interactions: list = field(default_factory=list)
    social: list = field(default_factory=list)
    social_self_loops: int = 0
    social_duplicates: int = 0


@dataclass
class Dataset:
    """ID-mapped dataset with train/test pair sets and directed social edges."""

    n: int
    m: int
    user_map: dict
    item_map: dict
    train_pairs: set
    test_pairs: set
    social_edges: set

    def all_pairs(self):
        return self.train_pairs | self.test_pairs

    def user_tokens(self):
        inverse = [None] * self.n
        for token, idx in self.user_map.items():
            inverse[idx] = token
        return inverse

    def item_tokens(self):
        inverse = [None] * self.m
        for token, idx in self.item_map.items():
            inverse[idx] = token
        return inverse


def _data_lines(path):
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            yield line_no, stripped


def load_ratings(path):
    """Parse ``user item rating`` triples; empty input is an error."""
    records = []
    for line_no, line in _data_lines(path):
        fields = line.split()
        if len(fields) != 3:
            raise ParseError(path, line_no, f"expected 'user item rating', got {len(fields)} fields")
        user, item, raw_rating = fields
        try:
            rating = float(raw_rating)
        except ValueError:
            raise ParseError(path, line_no, f"rating {raw_rating!r} is not a number") from None
        records.append((user, item, rating))
    if not records:
        raise EmptyDatasetError(f"{path}: no interaction records")
    return records


def load_trust(path):
    """Parse directed ``truster trustee`` pairs.

    Duplicate lines collapse to one edge and self-loops are dropped; both
    are counted on the returned record.
    """
    seen = set()
    edges = []
    self_loops = 0
    duplicates = 0
    for line_no, line in _data_lines(path):
        fields = line.split()
        if len(fields) != 2:
            raise ParseError(path, line_no, f"expected 'truster trustee', got {len(fields)} fields")
        truster, trustee = fields
        if truster == trustee:
            self_loops += 1
            continue
        if (truster, trustee) in seen:
            duplicates += 1
            continue
        seen.add((truster, trustee))
        edges.append((truster, trustee))
    return TrustRecords(edges=edges, self_loops=self_loops, duplicates=duplicates)


def load_raw(ratings_path, trust_path):
    interactions = load_ratings(ratings_path)
    trust = load_trust(trust_path)
    return RawRecords(
        interactions=interactions,
        social=trust.edges,
        social_self_loops=trust.self_loops,
        social_duplicates=trust.duplicates,
    )


def _five_core(pair_set, min_degree=5):
    """Peel users/items below ``min_degree`` until a fixpoint. Returns surviving pairs."""
    pairs = set(pair_set)
    while True:
        user_deg = {}
        item_deg = {}
        for u, i in pairs:
            user_deg[u] = user_deg.get(u, 0) + 1
            item_deg[i] = item_deg.get(i, 0) + 1
        bad_users = {u for u, d in user_deg.items() if d < min_degree}
        bad_items = {i for i, d in item_deg.items() if d < min_degree}
        if not bad_users and not bad_items:
            return pairs
        pairs = {(u, i) for u, i in pairs if u not in bad_users and i not in bad_items}
        if not pairs:
            return pairs


def preprocess(raw, min_degree=5):
    """Filter raw records and assign dense ids.

    Users without any incident social edge (in either direction, among
    surviving users) are removed first, then the interaction graph is
    peeled to its ``min_degree``-core.  Removals on one side can invalidate
    the other, so both filters repeat until a joint fixpoint -- this is what
    makes the operation idempotent and both invariants hold simultaneously.
    Dense ids follow first appearance in the filtered record stream.
    """
    pairs = set()
    for user, item, _rating in raw.interactions:
        pairs.add((user, item))
    social = [(u, v) for u, v in raw.social]

    alive = {u for u, _ in pairs}
    while True:
        # users must keep at least one social tie to another surviving user
        incident = set()
        for u, v in social:
            if u in alive and v in alive:
                incident.add(u)
                incident.add(v)
        connected = alive & incident
        pairs = {(u, i) for u, i in pairs if u in connected}
        pairs = _five_core(pairs, min_degree)
        survivors = {u for u, _ in pairs}
        if survivors == alive:
            break
        alive = survivors
        if not alive:
            break

    if not pairs:
        raise EmptyDatasetError("preprocessing removed every interaction")

    user_map = {}
    item_map = {}
    kept_pairs = set()
    users_alive = {u for u, _ in pairs}
    for user, item, _rating in raw.interactions:
        if (user, item) not in pairs:
            continue
        if user not in user_map:
            user_map[user] = len(user_map)
        if item not in item_map:
            item_map[item] = len(item_map)
        kept_pairs.add((user_map[user], item_map[item]))

    social_edges = set()
    for u, v in social:
        if u in users_alive and v in users_alive:
            social_edges.add((user_map[u], user_map[v]))

    return Dataset(
        n=len(user_map),
        m=len(item_map),
        user_map=user_map,
        item_map=item_map,
        train_pairs=kept_pairs,
        test_pairs=set(),
        social_edges=social_edges,
    )


def split(dataset, test_fraction, seed):
    """Per-user uniform split of the (unsplit) pair set.

    Each user contributes floor(test_fraction * degree) test items, clamped
    so at least one interaction lands on each side.  Deterministic given
    the seed.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError(f"test_fraction must be in (0, 1), got {test_fraction}")
    pool = dataset.all_pairs()
    items_by_user = {}
    for u, i in pool:
        items_by_user.setdefault(u, []).append(i)
    rng = np.random.default_rng(seed)
    train, test = set(), set()
    for u in range(dataset.n):
        items = np.array(sorted(items_by_user.get(u, [])), dtype=np.int64)
        if items.size == 0:
            continue
        order = rng.permutation(items.size)
        n_test = int(np.floor(test_fraction * items.size))
        n_test = max(1, min(n_test, items.size - 1))
        test_items = items[order[:n_test]]
        train_items = items[order[n_test:]]
        test.update((u, int(i)) for i in test_items)
        train.update((u, int(i)) for i in train_items)
    return Dataset(
        n=dataset.n,
        m=dataset.m,
        user_map=dict(dataset.user_map),
        item_map=dict(dataset.item_map),
        train_pairs=train,
        test_pairs=test,
        social_edges=set(dataset.social_edges),
    )
