"""Counter-based substreams.

Every replication owns a Philox generator keyed by ``(seed, index)``, so a
replication's draws never depend on which worker ran it or in what order.
"""
from __future__ import annotations

import numpy as np

_draws = 0


def substream(seed: int, index: int, *extra: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(index), *map(int, extra)))
    return np.random.Generator(np.random.Philox(ss))


def record_draws(k: int) -> None:
    global _draws
    _draws += int(k)


def draw_count() -> int:
    """Number of variates drawn in this process since the last reset."""
    return _draws


def reset_draw_count() -> None:
    global _draws
    _draws = 0
