"""Deterministic random streams.

Every random draw in the library flows through numpy's Philox generator, a
counter-based bit generator with a published algorithm, so that a given
(seed, stream ids) pair reproduces bit-identical draws across runs and
platforms. Derived streams (per restart, per training step, per sample)
extend the base seed with integer stream identifiers instead of sharing one
mutable generator, which keeps concurrent evaluation orders irrelevant.
"""

from __future__ import annotations

import numpy as np


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Generator for ``seed``, optionally scoped by integer stream ids."""
    entropy = (int(seed),) + tuple(int(s) for s in stream)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def derive_seed(seed: int, *stream: int) -> int:
    """Collapse (seed, stream ids) into a single 64-bit child seed."""
    entropy = (int(seed),) + tuple(int(s) for s in stream)
    state = np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)
    return int(state[0])
