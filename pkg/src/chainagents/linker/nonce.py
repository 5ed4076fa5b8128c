from __future__ import annotations

import numpy as np

COUNTER = "counter"
UNIFORM = "uniform"
RESTRICTED = "restricted-range"

# high byte below this reads as a counter that rarely runs far
COUNTER_CEILING = 16
COUNTER_SHARE = 0.9
RESTRICTED_WIDTH = 64


def high_bytes(nonces) -> np.ndarray:
    arr = np.asarray(list(nonces), dtype=np.uint64)
    return (arr >> np.uint64(24)).astype(np.int64)


def classify_nonces(nonces) -> tuple[str, tuple[int, int]]:
    """Classify a nonce sample by its high-byte histogram.

    Returns the class and the observed ``(min, max)`` high byte.
    """
    hb = high_bytes(nonces)
    if hb.size == 0:
        raise ValueError("need at least one nonce")
    span = (int(hb.min()), int(hb.max()))
    if np.mean(hb < COUNTER_CEILING) >= COUNTER_SHARE:
        return COUNTER, span
    if span[1] - span[0] <= RESTRICTED_WIDTH:
        return RESTRICTED, span
    return UNIFORM, span


def nonce_profile_compatible(nonces_a, nonces_b) -> bool:
    """Same class, and for restricted ranges the high-byte ranges intersect."""
    ca, ra = classify_nonces(nonces_a)
    cb, rb = classify_nonces(nonces_b)
    if ca != cb:
        return False
    if ca == RESTRICTED:
        return ra[0] <= rb[1] and rb[0] <= ra[1]
    return True
