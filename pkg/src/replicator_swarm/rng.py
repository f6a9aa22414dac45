"""Per-trial random streams.

Trial ``k`` under master seed ``s`` uses Philox4x64-10 keyed by ``s`` with
the counter's most significant word set to ``k``.  Streams of different
trials therefore never overlap, and a trial's draws do not depend on how
many workers ran the ensemble.
"""

import numpy as np

RNG_ALGORITHM = "philox4x64-10"
SEED_MASK = (1 << 64) - 1


def trial_rng(seed: int, trial: int = 0) -> np.random.Generator:
    seed = int(seed)
    if not 0 <= seed <= SEED_MASK:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    if trial < 0:
        raise ValueError("trial index must be nonnegative")
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, 0, int(trial)]))


def as_rng(rng_or_seed) -> np.random.Generator:
    if isinstance(rng_or_seed, np.random.Generator):
        return rng_or_seed
    return trial_rng(rng_or_seed)
