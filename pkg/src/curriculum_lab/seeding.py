"""Deterministic sub-seed derivation.

A repetition is driven by one base seed; every randomized role inside the
repetition (model init, batch sampling, control scores, splits) gets its own
derived stream so the roles never share draws.
"""
from __future__ import annotations

import numpy as np

INIT = 0
BATCH = 1
SCORE = 2
SPLIT = 3
SUBSET = 4


def derived_seed(base: int, role: int) -> int:
    if base < 0:
        raise ValueError(f"seed must be non-negative, got {base}")
    return int(np.random.SeedSequence([int(base), int(role)]).generate_state(1)[0])
