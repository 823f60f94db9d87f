"""Deterministic seed derivation.

All randomness in the package flows through `numpy.random.Generator` objects
built from `SeedSequence`, so that a single 64-bit seed pins every draw in an
experiment. Child seeds are derived with string tags rather than positional
spawning, which keeps derivations stable when unrelated code paths are added.
"""

from __future__ import annotations

import zlib

import numpy as np

MAX_SEED = 2**64 - 1


def check_seed(seed: int) -> int:
    # bool is an int subclass but a True/False seed is always a config mistake
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    if not 0 <= int(seed) <= MAX_SEED:
        raise ValueError(f"seed must fit in 64 bits, got {seed}")
    return int(seed)


def _tag_to_int(tag: int | str) -> int:
    if isinstance(tag, (int, np.integer)):
        return int(tag) & MAX_SEED
    return zlib.crc32(tag.encode("utf-8"))


def child_seed(base: int, *tags: int | str) -> int:
    """Derive a 64-bit child seed from `base` and a sequence of tags."""
    ss = np.random.SeedSequence(check_seed(base), spawn_key=tuple(_tag_to_int(t) for t in tags))
    return int(ss.generate_state(1, np.uint64)[0])


def child_seeds(base: int, n: int, *tags: int | str) -> tuple[int, ...]:
    """Derive `n` independent child seeds.

    Element i equals `child_seed(base, *tags, i)`, so any single element can
    be re-derived without generating the whole sequence.
    """
    return tuple(child_seed(base, *tags, i) for i in range(n))


def rng_from(seed: int, *tags: int | str) -> np.random.Generator:
    if tags:
        seed = child_seed(seed, *tags)
    return np.random.default_rng(check_seed(seed))
