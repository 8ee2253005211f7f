"""Named RNG sub-streams so one seed reproducibly drives every protocol."""

import hashlib

import numpy as np


def substream(seed: int, label: str) -> np.random.Generator:
    """Independent generator derived from (seed, label).

    Streams for distinct labels are statistically independent, and the
    derivation is stable across platforms and interpreter runs (no reliance
    on Python's salted hash()).
    """
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *words]))
