"""Input validation helpers shared across the package."""

from __future__ import annotations

import numpy as np


class ValidationError(ValueError):
    """Raised when an input violates a documented contract."""


def as_float_array(x, name: str, ndim: int | None = None) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if ndim is not None and arr.ndim != ndim:
        raise ValidationError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    return arr


def check_finite_scalar(x, name: str) -> float:
    x = float(x)
    if not np.isfinite(x):
        raise ValidationError(f"{name} must be finite, got {x}")
    return x


def check_non_negative(x, name: str) -> float:
    x = check_finite_scalar(x, name)
    if x < 0:
        raise ValidationError(f"{name} must be >= 0, got {x}")
    return x


def check_positive(x, name: str) -> float:
    x = check_finite_scalar(x, name)
    if x <= 0:
        raise ValidationError(f"{name} must be > 0, got {x}")
    return x


def check_count(x, name: str, minimum: int = 0) -> int:
    if int(x) != x:
        raise ValidationError(f"{name} must be an integer, got {x!r}")
    x = int(x)
    if x < minimum:
        raise ValidationError(f"{name} must be >= {minimum}, got {x}")
    return x


def check_fraction(x, name: str) -> float:
    x = check_finite_scalar(x, name)
    if not 0.0 < x < 1.0:
        raise ValidationError(f"{name} must lie in (0, 1), got {x}")
    return x


def check_node_ids(ids, n_nodes: int, name: str) -> frozenset[int]:
    """Validate a collection of node ids against a graph size."""
    out = set()
    for i in ids:
        if int(i) != i:
            raise ValidationError(f"{name} contains a non-integer id {i!r}")
        i = int(i)
        if not 0 <= i < n_nodes:
            raise ValidationError(f"{name} contains node {i}, valid range is [0, {n_nodes})")
        out.add(i)
    return frozenset(out)
