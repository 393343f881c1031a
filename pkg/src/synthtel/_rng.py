from __future__ import annotations

import numpy as np


def as_rng(rng: np.random.Generator | int | None) -> np.random.Generator:
    """Return a Generator, seeding a fresh one when given an int or None."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for a (seed, key...) tuple.

    Used so that per-entity draws do not depend on evaluation order.
    """
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, *(int(k) for k in key)])
