"""Counter-based random streams.

Every stream is a Philox generator keyed by ``(master_seed, *keys)``, so a
trial's draws depend only on the master seed and the trial index, never on
scheduling or on how many other trials ran.
"""

from __future__ import annotations

import numpy as np

TRIAL = 0
CALIBRATION = 1
FOLDS = 2


def substream(master_seed: int, *keys: int) -> np.random.Generator:
    seq = np.random.SeedSequence([int(master_seed), *(int(k) for k in keys)])
    return np.random.Generator(np.random.Philox(seq))


def trial_rng(master_seed: int, index: int) -> np.random.Generator:
    return substream(master_seed, TRIAL, index)


def derived_seed(master_seed: int, *keys: int) -> list[int]:
    """Integer key list usable wherever a seed is accepted."""
    return [int(master_seed), *(int(k) for k in keys)]
