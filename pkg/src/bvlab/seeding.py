"""Deterministic seed derivation for nested experiments.

Every randomized operation takes a single master seed and derives child
seeds for its sub-tasks (bootstrap replicate i, ensemble member l, draw
index, ...) through a fixed 64-bit mixing function.  Results are therefore
bit-identical across replays and independent of execution order or thread
count.

The mixer is splitmix64 (Steele, Lea & Flood's 2014 finalizer), applied to
the master seed and then folded with each path component in turn:

    state_0 = mix(master)
    state_k = mix(state_{k-1} XOR mix(path_k + GOLDEN))

where GOLDEN = 0x9E3779B97F4A7C15 is the 64-bit golden-ratio increment.
String path components are folded byte-wise before mixing.
"""
from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix(z: int) -> int:
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def _fold(component: int | str) -> int:
    if isinstance(component, str):
        acc = 2870177450012600261  # FNV-1a offset basis, 64 bit
        for byte in component.encode("utf-8"):
            acc = ((acc ^ byte) * 1099511628211) & _MASK
        return acc
    return component & _MASK


def derive_seed(master: int, *path: int | str) -> int:
    """Derive a 64-bit child seed from ``master`` and a path of components."""
    state = _mix(master)
    for component in path:
        state = _mix(state ^ _mix(_fold(component) + _GOLDEN))
    return state


def rng_for(master: int, *path: int | str) -> np.random.Generator:
    """A fresh numpy Generator seeded from the derived child seed."""
    return np.random.default_rng(derive_seed(master, *path))
