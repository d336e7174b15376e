"""
Seed derivation for reproducible simulation.

A replication seed is derived from (master_seed, table_id, H, h, rep) by hashing,
so any single cell of a table can be re-run in isolation. Independent streams
(design, error, limit-law, bootstrap) are spawned from one seed through numpy's
SeedSequence, which keeps them independent regardless of worker scheduling.
"""

import hashlib
import logging
from typing import Any, Optional

import numpy as np

logger = logging.getLogger(__name__)

DESIGN_STREAM = 0
ERROR_STREAM = 1
LIMIT_STREAM = 2
BOOTSTRAP_STREAM = 3
QQ_STREAM = 4

_SEED_MASK = (1 << 64) - 1


def derive_seed(master_seed: int, *labels: Any) -> int:
    """
    Hash a master seed and a tuple of labels into a 64-bit seed.

    Floats are formatted with repr so 0.6 and 0.60 map to the same seed.
    """
    payload = "|".join([str(int(master_seed))] + [repr(float(v)) if isinstance(v, float) else str(v) for v in labels])
    digest = hashlib.sha256(payload.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") & _SEED_MASK


def stream_generator(seed: Optional[int], stream: int = 0) -> np.random.Generator:
    """
    Return the generator for one stream of a seed.

    A None seed draws fresh OS entropy; every other call is deterministic.
    """
    if seed is None:
        logger.debug("No seed supplied, drawing from OS entropy")
        return np.random.default_rng()
    sequence = np.random.SeedSequence(entropy=int(seed) & _SEED_MASK, spawn_key=(int(stream),))
    return np.random.Generator(np.random.Philox(sequence))


def fresh_seed() -> int:
    """Draw a 64-bit seed from OS entropy so an unseeded run can still be reported."""
    return int(np.random.SeedSequence().generate_state(1, dtype=np.uint64)[0])
