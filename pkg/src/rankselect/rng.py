"""Seeded, splittable random streams.

Every stream is a Philox (counter-based) generator keyed by an integer path
``(seed, *keys)``, so a replication's draws depend only on its own key and
never on execution order or worker count.
"""

from __future__ import annotations

import numpy as np

# stream tags
DESIGN = 0
COEF = 1
NOISE = 2
SNR = 3
MOMENTS = 4
KF = 5
INSTANCE = 6
PAIRS = 7


def stream(seed: int, *keys: int) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed), *(int(k) for k in keys)])
    return np.random.Generator(np.random.Philox(ss))
