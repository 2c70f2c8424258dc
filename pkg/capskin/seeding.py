import hashlib

import numpy as np

from capskin.errors import ValidationError


def derive_seed(global_seed, component):
    """Independent 64-bit sub-seed for a named component of a run."""
    if global_seed < 0:
        raise ValidationError("seeds must be non-negative, got %d" % global_seed)
    key = int.from_bytes(hashlib.sha3_256(component.encode("utf-8")).digest()[:8], "little")
    state = np.random.SeedSequence([int(global_seed), key]).generate_state(1, dtype=np.uint64)
    return int(state[0])


def derive_rng(global_seed, component):
    return np.random.default_rng(derive_seed(global_seed, component))
