"""Deterministic random streams.

All randomness in the package flows through ``substream(seed, stream)``:
a numpy ``Generator`` backed by the counter-based Philox bit generator,
keyed by ``SeedSequence(seed, spawn_key=(stream,))``. Distinct stream
indices give non-overlapping deterministic substreams, so parallel
workers (MC chunks, per-step training draws, per-row predictions) can
draw independently while the overall run stays bit-reproducible.
"""

import numpy as np


def substream(seed: int, stream: int = 0) -> np.random.Generator:
    """Return the deterministic generator for (seed, stream)."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    if stream < 0:
        raise ValueError(f"stream index must be non-negative, got {stream}")
    ss = np.random.SeedSequence(seed, spawn_key=(stream,))
    return np.random.Generator(np.random.Philox(ss))
