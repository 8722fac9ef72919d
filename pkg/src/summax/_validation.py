"""Input validation helpers shared across the package."""

from __future__ import annotations

import os
from collections.abc import Iterable
from numbers import Integral

import numpy as np

DEFAULT_TABLE_LIMIT = 12
MAX_TABLE_LIMIT = 20


def table_limit() -> int:
    """Largest ground-set size allowed for dense tabulation.

    Reads ``SUMMAX_TABLE_LIMIT`` so the bound can be raised without code changes.
    """
    raw = os.environ.get("SUMMAX_TABLE_LIMIT")
    if raw is None:
        return DEFAULT_TABLE_LIMIT
    try:
        limit = int(raw)
    except ValueError as exc:
        raise ValueError(f"SUMMAX_TABLE_LIMIT must be an integer, got {raw!r}") from exc
    if not 1 <= limit <= MAX_TABLE_LIMIT:
        raise ValueError(f"SUMMAX_TABLE_LIMIT must lie in [1, {MAX_TABLE_LIMIT}], got {limit}")
    return limit


def check_table_size(n_arms: int, limit: int | None = None) -> None:
    limit = table_limit() if limit is None else limit
    if n_arms > limit:
        raise ValueError(
            f"ground set of size {n_arms} exceeds the tabulation limit {limit} "
            "(raise it with SUMMAX_TABLE_LIMIT)"
        )


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, Integral):
        raise TypeError(f"{name} must be an integer, got {type(value).__name__}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_finite_array(values, name: str, ndim: int | None = None) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def as_mask(subset, n_arms: int) -> int:
    """Convert a subset (bitmask or iterable of 0-based arms) to a bitmask."""
    if isinstance(subset, (Integral, np.integer)) and not isinstance(subset, bool):
        mask = int(subset)
        if mask < 0 or mask >= 1 << n_arms:
            raise ValueError(f"bitmask {mask} out of range for {n_arms} arms")
        return mask
    if isinstance(subset, Iterable):
        mask = 0
        for arm in subset:
            arm = int(arm)
            if not 0 <= arm < n_arms:
                raise ValueError(f"arm {arm} out of range for {n_arms} arms")
            mask |= 1 << arm
        return mask
    raise TypeError(f"cannot interpret {subset!r} as a subset")


def mask_to_arms(mask: int) -> list[int]:
    arms = []
    i = 0
    while mask:
        if mask & 1:
            arms.append(i)
        mask >>= 1
        i += 1
    return arms


def subset_indicator(n_arms: int) -> np.ndarray:
    """Boolean matrix of shape (2**n_arms, n_arms); row ``mask`` marks its members."""
    masks = np.arange(1 << n_arms)
    return ((masks[:, None] >> np.arange(n_arms)) & 1).astype(bool)


def popcount(masks: np.ndarray) -> np.ndarray:
    masks = np.asarray(masks, dtype=np.int64)
    counts = np.zeros(masks.shape, dtype=np.int64)
    work = masks.copy()
    while np.any(work):
        counts += work & 1
        work >>= 1
    return counts


def check_seeds(seeds) -> list[int]:
    if seeds is None:
        return [0]
    if isinstance(seeds, (Integral, np.integer)):
        return [int(seeds)]
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ValueError("at least one seed is required")
    return seeds
