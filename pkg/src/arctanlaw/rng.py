"""Per-path random streams.

Path ``k`` of a run seeded with ``seed`` draws from a Philox4x64 generator
whose key is derived from ``seed`` and whose counter starts at ``k * 2**128``.
Streams of different paths never overlap, and each is a pure function of
``(seed, k)``, so results do not depend on how paths are split across workers.
"""

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=64)
def _key(seed: int) -> tuple[int, int]:
    state = np.random.SeedSequence(int(seed)).generate_state(2, np.uint64)
    return int(state[0]), int(state[1])


def path_bitgen(seed: int, index: int) -> np.random.Philox:
    if index < 0:
        raise ValueError("path index must be nonnegative")
    return np.random.Philox(key=list(_key(seed)), counter=[0, 0, int(index), 0])


def path_generator(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(path_bitgen(seed, index))
