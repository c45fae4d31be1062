"""Counter-based random streams.

Every stochastic routine in the package derives its randomness from a
64-bit base seed plus a tuple of string/integer tags.  Streams are backed
by Philox, so replica batches are reproducible independent of scheduling
and worker count.
"""

from __future__ import annotations

import zlib

import numpy as np
from scipy.stats import norm, qmc

_MASK64 = (1 << 64) - 1


def _tag_to_int(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        return int(tag) & _MASK64
    return zlib.crc32(str(tag).encode("utf-8"))


def derive_key(seed: int, *tags) -> np.random.SeedSequence:
    """SeedSequence keyed by (seed, tags); equal inputs give equal streams."""
    return np.random.SeedSequence(
        entropy=int(seed) & _MASK64,
        spawn_key=tuple(_tag_to_int(t) for t in tags),
    )


def generator(seed: int, *tags) -> np.random.Generator:
    """Philox generator for the stream identified by (seed, tags)."""
    return np.random.Generator(np.random.Philox(seed=derive_key(seed, *tags)))


def standard_normals(seed: int, shape, *tags) -> np.ndarray:
    return generator(seed, *tags).standard_normal(shape)


def sobol_normals(seed: int, n: int, dim: int, *tags) -> np.ndarray:
    """n scrambled-Sobol standard-normal points in `dim` dimensions.

    Scrambling is seeded, so different seeds perturb the point set while
    keeping its low-discrepancy structure; used as the inner sample set of
    the grid solver (common random numbers across sweeps).
    """
    ss = derive_key(seed, "sobol", dim, *tags)
    eng = qmc.Sobol(d=dim, scramble=True, seed=np.random.Generator(np.random.Philox(seed=ss)))
    u = eng.random(n)
    # keep ppf finite
    eps = 0.5 / max(n, 2) ** 2
    return norm.ppf(np.clip(u, eps, 1.0 - eps))


def chunk_indices(n: int, chunk: int):
    """Fixed chunking of range(n); the unit of parallel work distribution."""
    return [(lo, min(lo + chunk, n)) for lo in range(0, n, chunk)]
