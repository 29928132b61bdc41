"""Seeded random streams.

Every random draw in the package comes from a Philox4x64-10 counter-based
generator (Salmon et al., Random123) through ``numpy.random.Philox``. A stream
is addressed by a 128-bit key ``(seed, stream)``; the counter starts at zero
and is incremented *before* each 4-word block is produced, so block ``i``
(``i >= 1``) is ``philox4x64_10(counter=(i, 0, 0, 0), key=(seed, stream))``.

Doubles in [0, 1) are ``(word >> 11) * 2**-53`` and ``uniform(low, high)`` is
``low + (high - low) * double``. Test vectors live in ``tests/test_rng.py``.

Composite seeds (round, client, epoch, ...) are folded with SplitMix64 so that
a stream key is always two 64-bit words.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One SplitMix64 output step for state ``x`` (the state is advanced first)."""
    z = (x + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(*parts: int) -> int:
    """Fold integers into a single 64-bit seed; order-sensitive and deterministic."""
    acc = 0
    for part in parts:
        if part < 0:
            raise ValueError(f"seed components must be non-negative, got {part}")
        acc = splitmix64(acc ^ (part & MASK64))
    return acc


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Generator over the Philox stream keyed by ``(seed, stream)``."""
    key = np.array([seed & MASK64, stream & MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


# Stream ids; one per purpose so that no two consumers ever share draws.
INIT_STREAM = 1
SPLIT_STREAM = 2
PARTITION_STREAM = 3
SYNTH_STREAM = 4
FOLD_STREAM = 5
SAMPLE_STREAM = 6
SHUFFLE_STREAM = 8
FAILURE_STREAM = 9
