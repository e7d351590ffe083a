"""Named, reproducible random substreams.

All randomness in the engine flows from one top-level integer seed.  A
substream is addressed by a tuple of names (e.g. ``("inference",
"early_voting", "I")``); the names are hashed into a spawn key, so streams
are independent of each other and of the order in which they are created.
Philox is counter-based, which keeps draws reproducible under any
parallel schedule.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _name_key(name: str) -> int:
    # Stable across processes (unlike hash()).
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big")


def substream(seed: int, *names: str) -> np.random.Generator:
    """Return a Generator for the substream addressed by ``names``."""
    key = tuple(_name_key(n) for n in names)
    ss = np.random.SeedSequence(entropy=seed, spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))


def subseed(seed: int, *names: str) -> int:
    """Derive a child integer seed (for APIs that take a seed, not a rng)."""
    key = tuple(_name_key(n) for n in names)
    ss = np.random.SeedSequence(entropy=seed, spawn_key=key)
    return int(ss.generate_state(1, dtype=np.uint64)[0])
