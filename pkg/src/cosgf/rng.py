"""Seed handling.

One master seed per run. Every independent piece of work (a Monte Carlo
repetition, a bootstrap) gets its own stream from
``numpy.random.SeedSequence(master, spawn_key=path)``, where ``path`` is a
tuple of non-negative integers naming the piece of work. SeedSequence hashes
(entropy, spawn_key) into the generator state, so streams are reproducible
individually and independent of execution order.
"""
from __future__ import annotations

import secrets

import numpy as np

SeedLike = int | np.random.SeedSequence


def derive_seed(master: SeedLike, *path: int) -> np.random.SeedSequence:
    if isinstance(master, np.random.SeedSequence):
        return np.random.SeedSequence(
            master.entropy, spawn_key=tuple(master.spawn_key) + tuple(int(k) for k in path)
        )
    return np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in path))


def make_rng(seed: SeedLike | None) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def fresh_seed() -> int:
    """A random 63-bit seed, for runs where the user gave none."""
    return secrets.randbits(63)


def describe(seed: SeedLike) -> str:
    if isinstance(seed, np.random.SeedSequence):
        return f"{seed.entropy}/{'.'.join(map(str, seed.spawn_key))}"
    return str(seed)
