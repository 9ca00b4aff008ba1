"""Deterministic random streams backed by the Philox counter-based generator.

Every random quantity in the package is drawn from a stream addressed by a
user seed plus a tuple of labels (strings or integers). Streams are
independent Philox4x64-10 instances keyed by ``mix(seed, *labels)``, so the
same (seed, labels) pair reproduces the same draws on any platform and any
execution order. This is what makes repetitions safe to run in parallel and
the `bench` output byte-identical across runs.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = 0x9E3779B97F4A7C15
_MASK64 = 0xFFFFFFFFFFFFFFFF


def _splitmix64(state: int) -> tuple[int, int]:
    state = (state + _GOLDEN) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def stream_key(seed: int, *labels) -> int:
    """Fold seed and labels into a single 64-bit Philox key via splitmix64."""
    state = int(seed) & _MASK64
    state, key = _splitmix64(state)
    for label in labels:
        if isinstance(label, str):
            for byte in label.encode("utf-8"):
                state = (state ^ byte) & _MASK64
                state, key = _splitmix64(state)
        else:
            state = (state ^ (int(label) & _MASK64)) & _MASK64
            state, key = _splitmix64(state)
    return key


def generator(seed: int, *labels) -> np.random.Generator:
    """Return the Philox generator for the stream named by (seed, *labels)."""
    return np.random.Generator(np.random.Philox(key=stream_key(seed, *labels)))


def resolve_seed(seed=None, env=None) -> int:
    """Resolve an explicit seed, falling back to CRPSLAB_SEED, then 0."""
    if seed is not None:
        return int(seed)
    import os

    value = (env or os.environ).get("CRPSLAB_SEED")
    return int(value) if value is not None else 0
