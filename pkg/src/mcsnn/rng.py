"""Seeded random-stream management.

Every stochastic component draws from its own child stream of one master
seed, so runs are bit-reproducible and compartments stay statistically
independent.  Compartment k of a simulation uses the child ``(seed, k)``;
auxiliary consumers (data shuffling, weight init, evaluation) use fixed
branch constants well above any realistic compartment count.
"""

from __future__ import annotations

from typing import Sequence, Union

import numpy as np

# Branch constants for non-compartment streams (ASCII tags, >= 0x60000000
# so they can never collide with a compartment index).
DATA_STREAM = 0x64617461    # "data": dataset generation
SHUF_STREAM = 0x73687566    # "shuf": example-order shuffling during training
INIT_STREAM = 0x696E6974    # "init": weight initialization
EVAL_STREAM = 0x6576616C    # "eval": inference passes during evaluation

RngLike = Union[int, np.random.SeedSequence, Sequence[np.random.Generator]]


def child_sequence(seed: int, *key: int) -> np.random.SeedSequence:
    """Child SeedSequence of `seed` addressed by an integer key path."""
    return np.random.SeedSequence(seed, spawn_key=tuple(key))


def stream(seed: int, *key: int) -> np.random.Generator:
    """Generator on the child stream (seed, *key)."""
    return np.random.default_rng(child_sequence(seed, *key))


def compartment_streams(seed: int, count: int, *prefix: int) -> list[np.random.Generator]:
    """Independent generators for `count` compartments: child (seed, *prefix, k)."""
    return [stream(seed, *prefix, k) for k in range(count)]


def as_streams(rng: RngLike, count: int) -> list[np.random.Generator]:
    """Normalize an int seed, a SeedSequence, or explicit generators to
    `count` independent streams."""
    if isinstance(rng, (int, np.integer)):
        return compartment_streams(int(rng), count)
    if isinstance(rng, np.random.SeedSequence):
        return [np.random.default_rng(s) for s in rng.spawn(count)]
    streams = list(rng)
    if len(streams) != count:
        raise ValueError(f"expected {count} streams, got {len(streams)}")
    return streams
