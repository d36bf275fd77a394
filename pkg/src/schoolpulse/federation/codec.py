"""Fixed-point encoding so pairwise masks cancel in exact integer arithmetic.

Floating-point masking would leak through rounding and break the secure-sum
property; encoding at scale 10^6 first makes cancellation exact. Values up
to |9e12| are representable inside signed 64-bit headroom.
"""

from __future__ import annotations

import numpy as np

SCALE = 10**6
MAX_ABS_VALUE = 9e12


class EncodingOverflow(Exception):
    pass


def encode_value(x: float) -> int:
    if not np.isfinite(x) or abs(x) > MAX_ABS_VALUE:
        raise EncodingOverflow(f"value {x!r} outside fixed-point range ±{MAX_ABS_VALUE:g}")
    return int(np.rint(x * SCALE))


def decode_value(i: int) -> float:
    return i / SCALE


def encode_array(values: np.ndarray) -> list[int]:
    if not np.all(np.isfinite(values)) or np.any(np.abs(values) > MAX_ABS_VALUE):
        raise EncodingOverflow("array contains values outside the fixed-point range")
    return [int(v) for v in np.rint(np.asarray(values, dtype=float) * SCALE).astype(np.int64)]


def decode_array(ints: list[int]) -> np.ndarray:
    return np.asarray(ints, dtype=float) / SCALE
