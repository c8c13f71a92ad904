import zlib

import numpy as np


def rng_stream(seed: int, name: str) -> np.random.Generator:
    """Independent PCG64 generator for one named sampling stage.

    The stream depends only on (seed, name), so adding a new stage never
    shifts the draws of an existing one.
    """
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed) & (2**64 - 1), key])))
