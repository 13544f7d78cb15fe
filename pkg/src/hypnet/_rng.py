"""Inline xorshift64 PRNG shared by the numba kernels.

Gives bit-identical streams for a fixed seed on every platform, which
the deterministic training and sampling modes rely on.
"""

import numpy as np
from numba import njit

_INV_2_53 = 1.0 / 9007199254740992.0


@njit(cache=True, nogil=True)
def xorshift(state: np.uint64) -> np.uint64:
    state ^= state << np.uint64(13)
    state ^= state >> np.uint64(7)
    state ^= state << np.uint64(17)
    return state


@njit(cache=True, nogil=True)
def seed_state(seed: int) -> np.uint64:
    state = (np.uint64(seed) + np.uint64(1)) * np.uint64(2654435761)
    return xorshift(xorshift(state))


@njit(cache=True, nogil=True)
def uniform(state: np.uint64) -> float:
    """Map a state to [0, 1); advance with xorshift first."""
    return (state >> np.uint64(11)) * _INV_2_53
