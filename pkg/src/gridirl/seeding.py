"""Deterministic seed derivation.

Every random stream in an experiment is keyed by the config seed plus a
small integer path, so runs are reproducible and the streams stay
independent when any single index changes. The world itself is built
straight from the config seed; everything else uses a derived stream.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "BENCH_DEMO_STREAM",
    "BENCH_INIT_STREAM",
    "DEMO_STREAM",
    "MODEL_INIT_STREAM",
    "TRANSFER_STREAM",
    "derive_seed",
]

DEMO_STREAM = 1
MODEL_INIT_STREAM = 2
TRANSFER_STREAM = 3
BENCH_DEMO_STREAM = 4
BENCH_INIT_STREAM = 5


def derive_seed(base: int, *stream: int) -> int:
    """Collapse (base, *stream) into one well-mixed nonnegative seed."""
    if base < 0 or any(index < 0 for index in stream):
        raise ValueError("seeds and stream indices must be nonnegative")
    sequence = np.random.SeedSequence((int(base),) + tuple(int(i) for i in stream))
    return int(sequence.generate_state(1, np.uint64)[0])
