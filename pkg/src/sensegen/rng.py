"""Named random sub-streams derived from one user seed."""

import zlib

import numpy as np

from .errors import ConfigError


def stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for ``name`` (e.g. "init", "sampling", "shuffling").

    The same (seed, name) pair always yields the same sequence, and adding a
    new stream never perturbs existing ones.
    """
    if int(seed) != seed or seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")
    return np.random.default_rng([int(seed), zlib.crc32(name.encode("utf-8"))])
