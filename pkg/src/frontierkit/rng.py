"""Counter-based random streams.

Every stochastic stage draws from ``stream(seed, stage, index)``, a Philox
generator keyed on the full tuple. Streams for different indices are
independent of each other and of the order in which they are consumed,
which is what makes parallel and serial runs bit-identical.
"""

from __future__ import annotations

import numpy as np


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, key)])))
