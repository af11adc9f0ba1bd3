"""Counter-based random streams.

Every stochastic routine in the package draws from a Philox substream keyed by
(seed, index...). Streams with distinct keys are independent, so replicas can be
computed in any order or split across any number of workers without changing a
single draw.
"""

import numpy as np

_KEY_SALT = 0x9E3779B97F4A7C15  # fixed second key word; distinguishes this package's streams


def substream(seed: int, *indices: int) -> np.random.Generator:
    """Return the generator for stream (seed, *indices).

    Up to three indices are supported (replica, purpose, chunk). The same
    arguments always yield a generator positioned at the start of the same
    stream, on every platform.
    """
    if len(indices) > 3:
        raise ValueError("at most three stream indices are supported")
    counter = [0, 0, 0, 0]
    for k, ix in enumerate(indices):
        if ix < 0:
            raise ValueError("stream indices must be non-negative")
        counter[k + 1] = int(ix)
    bitgen = np.random.Philox(key=[int(seed) & (2**64 - 1), _KEY_SALT],
                              counter=counter)
    return np.random.Generator(bitgen)
