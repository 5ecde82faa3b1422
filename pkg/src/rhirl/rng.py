"""Deterministic RNG streams.

Every random draw in the package comes from a stream derived from the run
seed plus an integer path (e.g. (episode, time step, purpose)).  The same
(seed, path) always yields the same generator, independent of call order or
thread scheduling, which is what makes runs and resumes reproducible.
"""

from __future__ import annotations

import numpy as np

# Purpose tags appended to stream paths so different consumers at the same
# (episode, t) never share a stream.
INIT = 0
ROLLOUTS = 1
EXECUTE = 2
WINDOWS = 3
EPISODE_START = 4
EVAL = 5
DEMO = 6
SUBROLLOUTS = 7


def stream(seed: int, *path: int) -> np.random.Generator:
    """Generator for the stream identified by (seed, path)."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=tuple(path)))
