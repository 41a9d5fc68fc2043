"""Deterministic derivation of per-task random seeds.

Independent tasks (Monte Carlo replications, bootstrap resamples, chunked
expectation estimates) each get a seed mixed from a master seed and the task
index, so results are identical whether tasks run serially or in parallel.
"""

from __future__ import annotations

_MASK = (1 << 64) - 1


def mix_seed(master: int, index: int) -> int:
    """Derive an independent 64-bit seed from a master seed and task index.

    Uses a splitmix-style finalizer: the task index selects a point on a
    Weyl sequence anchored at the master seed, which is then bit-mixed.
    """
    z = (int(master) + (int(index) + 1) * 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK
