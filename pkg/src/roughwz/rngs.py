"""Deterministic, splittable random streams.

Every stochastic routine in the package derives its generator from a
master seed plus a structured key (path index, schedule position, ...)
through ``numpy``'s ``SeedSequence`` spawn mechanism backed by the
Philox counter generator.  Streams are therefore independent of each
other and of evaluation order, so Monte Carlo loops can be chunked or
threaded without changing results.
"""

from __future__ import annotations

import numpy as np

__all__ = ["stream", "substream_state"]


def stream(seed: int, *key: int) -> np.random.Generator:
    """Return the generator for ``(seed, *key)``.

    The same ``(seed, key)`` always yields the same stream; distinct
    keys yield statistically independent streams.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def substream_state(seed: int, *key: int) -> dict:
    """Provenance record for a derived stream (stored in result objects)."""
    return {"seed": int(seed), "key": [int(k) for k in key], "bit_generator": "Philox"}
