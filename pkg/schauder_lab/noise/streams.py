"""Counter-based random streams keyed by (master seed, path index, purpose).

Each stream is a Philox generator whose key is derived from the master seed
and the purpose tag, and whose counter starts at ``path_index << 128``. A
path's draws therefore depend on nothing but the triple, whatever order or
thread the path is generated in.
"""

import functools
from typing import Tuple

import numpy as np

PURPOSE_TAGS = ("wiener", "jump-count", "jump-times", "marks", "h-factor")


@functools.lru_cache(maxsize=256)
def _stream_key(master_seed: int, purpose: str) -> int:
    if purpose not in PURPOSE_TAGS:
        raise ValueError(f"unknown purpose tag {purpose!r}; expected one of {PURPOSE_TAGS}")
    words = np.random.SeedSequence([int(master_seed), PURPOSE_TAGS.index(purpose)]).generate_state(
        2, dtype=np.uint64
    )
    return int(words[0]) | (int(words[1]) << 64)


def stream(master_seed: int, path_index: int, purpose: str) -> np.random.Generator:
    """Generator for one (master seed, path index, purpose) triple."""
    if master_seed < 0 or path_index < 0:
        raise ValueError("master seed and path index must be nonnegative")
    bit_generator = np.random.Philox(
        key=_stream_key(master_seed, purpose), counter=int(path_index) << 128
    )
    return np.random.Generator(bit_generator)


SeedPair = Tuple[int, int]
