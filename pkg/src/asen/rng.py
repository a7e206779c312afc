"""Seed derivation shared by every randomized stage.

All randomness in the package flows from one master seed. Child seeds are
derived with :class:`numpy.random.SeedSequence` so that independent jobs
(base learners, permutation repeats, bootstrap resamples) get uncorrelated
streams that do not depend on execution order.
"""

from __future__ import annotations

import zlib

import numpy as np

MAX_SEED = 2**64 - 1


def _key(part: int | str) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    if part < 0:
        raise ValueError(f"seed key parts must be non-negative, got {part}")
    return int(part)


def check_seed(seed: int) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must fit in an unsigned 64-bit integer, got {seed}")
    return seed


def derive_seed(master: int, *parts: int | str) -> int:
    """Return a 64-bit child seed for ``master`` keyed by ``parts``."""
    ss = np.random.SeedSequence(check_seed(master), spawn_key=tuple(_key(p) for p in parts))
    return int(ss.generate_state(1, np.uint64)[0])


def make_rng(master: int, *parts: int | str) -> np.random.Generator:
    if not parts:
        return np.random.default_rng(check_seed(master))
    return np.random.default_rng(derive_seed(master, *parts))
