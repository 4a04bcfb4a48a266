"""Counter-based random streams built on the SplitMix64 finalizer.

Every trajectory owns one stream.  Its seed is

    seed_i = mix64(mix64(master ^ MASTER_SALT) + (i + 1) * GAMMA)

and the k-th uniform it produces (k = 0, 1, ...) is

    u_k = (mix64(seed_i + (k + 1) * GAMMA) >> 11) * 2**-53

with all arithmetic modulo 2**64.  This is the SplitMix64 generator started
from state ``seed_i``, so draws can be computed for many trajectories at once
without sharing state.  The constants below are part of the reproducibility
contract and must not change.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
MIX_MUL1 = 0xBF58476D1CE4E5B9
MIX_MUL2 = 0x94D049BB133111EB
MASTER_SALT = 0x5851F42D4C957F2D
TWO_POW_M53 = 2.0**-53


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * MIX_MUL1) & MASK64
    z = ((z ^ (z >> 27)) * MIX_MUL2) & MASK64
    return z ^ (z >> 31)


def derive_seed(master: int, index: int) -> int:
    """Per-trajectory seed for ``(master, index)``.

    For a fixed master the map ``index -> seed`` is injective over
    ``0 <= index < 2**64`` (odd multiplier followed by a bijective mixer).
    """
    if index < 0:
        raise ValueError("trajectory index must be nonnegative")
    base = mix64(master ^ MASTER_SALT)
    return mix64(base + (index + 1) * GAMMA)


def uniform_at(seed: int, k: int) -> float:
    """The k-th uniform in [0, 1) of the stream seeded with ``seed``."""
    return (mix64(seed + (k + 1) * GAMMA) >> 11) * TWO_POW_M53


class RngStream:
    """Reproducible draw sequence for one trajectory."""

    __slots__ = ("master_seed", "trajectory_index", "seed", "counter")

    def __init__(self, master_seed: int, trajectory_index: int = 0):
        if not 0 <= master_seed <= MASK64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        self.master_seed = int(master_seed)
        self.trajectory_index = int(trajectory_index)
        self.seed = derive_seed(self.master_seed, self.trajectory_index)
        self.counter = 0

    def uniform(self) -> float:
        u = uniform_at(self.seed, self.counter)
        self.counter += 1
        return u

    def __repr__(self) -> str:
        return (f"RngStream(master_seed={self.master_seed}, "
                f"trajectory_index={self.trajectory_index}, counter={self.counter})")


# vectorized counterparts; numpy uint64 arithmetic wraps modulo 2**64

_U30, _U27, _U31, _U11 = (np.uint64(s) for s in (30, 27, 31, 11))
_M1, _M2 = np.uint64(MIX_MUL1), np.uint64(MIX_MUL2)


def mix64_array(z: np.ndarray) -> np.ndarray:
    z = z.astype(np.uint64, copy=True)
    z ^= z >> _U30
    z *= _M1
    z ^= z >> _U27
    z *= _M2
    z ^= z >> _U31
    return z


def derive_seeds(master: int, indices: np.ndarray) -> np.ndarray:
    base = mix64(master ^ MASTER_SALT)
    idx = np.asarray(indices, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(base) + (idx + np.uint64(1)) * np.uint64(GAMMA)
    return mix64_array(z)


def uniforms_at(seeds: np.ndarray, k: int) -> np.ndarray:
    """Vectorized :func:`uniform_at` for a fixed draw index ``k``."""
    offset = np.uint64(((k + 1) * GAMMA) & MASK64)
    with np.errstate(over="ignore"):
        z = seeds + offset
    return (mix64_array(z) >> _U11).astype(np.float64) * TWO_POW_M53
