"""Counter-based random streams.

Every stochastic decision in the pipeline draws from a Philox generator keyed
by the tuple of integers that identifies the decision (seed, subject, emotion,
frame, ...). Streams are therefore order-independent: generating sequence 37
never consumes state needed by sequence 12, so parallel generation and
re-generation of a single item both reproduce the same bytes.
"""

from __future__ import annotations

import numpy as np

_MIX_CONST = 0x9E3779B97F4A7C15  # SplitMix64 golden-ratio increment


def _splitmix64(x: int) -> int:
    x = (x + _MIX_CONST) & 0xFFFFFFFFFFFFFFFF
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


def key64(*parts: int) -> int:
    """Fold integer parts into a single 64-bit Philox key (SplitMix64 chain)."""
    acc = 0x8000000000000000
    for p in parts:
        acc = _splitmix64(acc ^ (int(p) & 0xFFFFFFFFFFFFFFFF))
    return acc


def stream(*parts: int) -> np.random.Generator:
    """Independent generator for the decision identified by `parts`."""
    return np.random.Generator(np.random.Philox(key=key64(*parts)))
