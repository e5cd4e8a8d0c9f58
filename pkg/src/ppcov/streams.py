"""Counter-based splittable random streams for parallel replicates.

Every Monte Carlo replicate in this package draws from its own generator,
keyed by (seed, scenario index, replicate index, ...). Philox is counter
based, so streams with different keys are independent and a replicate's
draws never depend on execution order or the degree of parallelism.
"""

from __future__ import annotations

import numpy as np

__all__ = ["replicate_stream"]


def replicate_stream(*key: int) -> np.random.Generator:
    """Generator for the replicate identified by the given key tuple."""
    parts = [int(k) for k in key]
    if not parts or any(k < 0 for k in parts):
        raise ValueError(f"stream key must be nonnegative integers, got {key!r}")
    seq = np.random.SeedSequence(parts)
    return np.random.Generator(np.random.Philox(seq))
