"""Named random substreams derived from a single experiment seed.

Every stochastic quantity in a run (initial noise, degradation patterns,
condition sampling, test scenarios) draws from its own named substream so
that adding a consumer never perturbs the others.
"""

import zlib

import numpy as np


def substream(seed: int, name: str) -> np.random.Generator:
    """Return a generator for the substream `name` of the master `seed`."""
    if seed < 0:
        raise ValueError(f"seed must be a nonnegative integer, got {seed}")
    tag = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([int(seed), tag]))
