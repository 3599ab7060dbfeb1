"""Labeled, counter-based random streams.

Every random draw in the package comes from a Philox generator keyed by a
64-bit master seed, a stream label and a tuple of integer indices
(repeat, block, mode, trial...). Streams with different keys are
statistically independent, and a stream does not depend on which other
streams were consumed before it, so repeats can be generated in any order
or concurrently.
"""

from __future__ import annotations

import numpy as np

from .errors import ParameterError

#: Documented stream labels; the integer is part of the key.
LABELS = {
    "amplitudes": 1,
    "bernoulli": 2,
    "permutation": 3,
    "synthetic": 4,
}

#: Trajectories per generation block. Part of the stream layout: changing it
#: changes every sampled ensemble.
BLOCK = 1 << 15

_MASK64 = (1 << 64) - 1


def check_seed(seed) -> int:
    if isinstance(seed, (bool, np.bool_)) or not isinstance(seed, (int, np.integer)):
        raise ParameterError(f"seed must be an integer, got {seed!r}")
    seed = int(seed)
    if seed < 0 or seed > _MASK64:
        raise ParameterError(f"seed must fit in an unsigned 64-bit integer, got {seed}")
    return seed


def stream(seed: int, label: str, *indices: int) -> np.random.Generator:
    """Return the generator for ``(seed, label, *indices)``."""
    try:
        tag = LABELS[label]
    except KeyError:
        raise ParameterError(f"unknown stream label {label!r}") from None
    ss = np.random.SeedSequence(
        entropy=check_seed(seed), spawn_key=(tag, *(int(i) for i in indices))
    )
    return np.random.Generator(np.random.Philox(ss))


def block_sizes(n: int, block: int = BLOCK) -> list[int]:
    """Split ``n`` trajectories into generation blocks."""
    full, rest = divmod(n, block)
    return [block] * full + ([rest] if rest else [])
