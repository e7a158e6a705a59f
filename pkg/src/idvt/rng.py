"""Deterministic random streams derived from one master seed.

Every consumer of randomness (init, splitting, negative sampling, edge
dropout, ...) asks the hub for a stream keyed by a purpose label plus
optional integers such as an epoch counter.  Labels are hashed into the
seed material, so adding a new consumer never shifts the draws seen by
existing ones, and the same (seed, label, extras) triple always yields
the same sequence on any platform.
"""

import hashlib

import numpy as np

_KEY_WORDS = 4


def _label_key(label, extra):
    h = hashlib.blake2b(digest_size=4 * _KEY_WORDS)
    h.update(label.encode("utf-8"))
    for item in extra:
        h.update(b"\x1f")
        h.update(str(int(item)).encode("ascii"))
    digest = h.digest()
    return tuple(
        int.from_bytes(digest[4 * i : 4 * (i + 1)], "little")
        for i in range(_KEY_WORDS)
    )


class RngHub:
    """Factory for labeled, mutually independent random substreams."""

    def __init__(self, seed):
        self.seed = int(seed)

    def _sequence(self, label, extra):
        return np.random.SeedSequence(self.seed, spawn_key=_label_key(label, extra))

    def stream(self, label, *extra):
        """Return a fresh Generator for (seed, label, *extra)."""
        return np.random.default_rng(self._sequence(label, extra))

    def child_seed(self, label, *extra):
        """Return a plain integer seed derived from (seed, label, *extra)."""
        return int(self._sequence(label, extra).generate_state(1, np.uint64)[0])
