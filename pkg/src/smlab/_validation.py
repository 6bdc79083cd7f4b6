"""Input validation helpers shared by the public functions and estimators."""

from __future__ import annotations

import numbers

import numpy as np


class ValidationError(ValueError):
    """Raised when an argument violates a documented precondition."""


def check_field(f, n: int, *, name: str = "field") -> np.ndarray:
    """Return ``f`` as a 2-D ``(n, m)`` array.

    One-dimensional input of length ``n`` is promoted to a single column.
    Real input stays real; complex input stays complex.
    """
    arr = np.asarray(f)
    if arr.dtype == object:
        raise ValidationError(f"{name} must be numeric")
    if not np.issubdtype(arr.dtype, np.number):
        raise ValidationError(f"{name} must be numeric, got dtype {arr.dtype}")
    if np.issubdtype(arr.dtype, np.integer) or arr.dtype == np.bool_:
        arr = arr.astype(float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] != n:
        raise ValidationError(f"{name} must have shape ({n}, m), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} has non-finite entries")
    return arr


def check_fields(fields, n: int, *, name: str = "fields") -> np.ndarray:
    """Return a stack of fields as a ``(K, n, m)`` array."""
    if isinstance(fields, np.ndarray) and fields.ndim == 3:
        arr = fields
    else:
        arr = np.stack([check_field(f, n, name=name) for f in fields])
    if arr.ndim != 3 or arr.shape[1] != n:
        raise ValidationError(f"{name} must have shape (K, {n}, m), got {arr.shape}")
    if np.issubdtype(arr.dtype, np.integer):
        arr = arr.astype(float)
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} has non-finite entries")
    return arr


def check_square(matrix, n: int | None = None, *, name: str = "matrix") -> np.ndarray:
    arr = np.asarray(matrix, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {arr.shape}")
    if n is not None and arr.shape[0] != n:
        raise ValidationError(f"{name} must be {n}x{n}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} has non-finite entries")
    return arr


def check_exponent(p, *, name: str = "p", low: float = 1.0, high: float = np.inf,
                   low_open: bool = False, high_open: bool = False) -> float:
    """Validate a scalar exponent lying in an interval."""
    if not isinstance(p, numbers.Real):
        raise ValidationError(f"{name} must be a real number")
    p = float(p)
    too_low = p <= low if low_open else p < low
    too_high = p >= high if high_open else p > high
    if np.isnan(p) or too_low or too_high:
        lb = "(" if low_open else "["
        rb = ")" if high_open else "]"
        raise ValidationError(f"{name}={p} outside {lb}{low}, {high}{rb}")
    return p


def check_positive(x, *, name: str, strict: bool = True) -> float:
    if not isinstance(x, numbers.Real) or np.isnan(x):
        raise ValidationError(f"{name} must be a real number")
    x = float(x)
    if (strict and x <= 0) or (not strict and x < 0):
        raise ValidationError(f"{name} must be {'> 0' if strict else '>= 0'}, got {x}")
    return x


def as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def spawn_seeds(seed, count: int) -> list[np.random.SeedSequence]:
    """Independent child seeds; identical for a fixed ``seed`` regardless of threading."""
    if isinstance(seed, np.random.SeedSequence):
        # spawn from a copy: SeedSequence.spawn advances the parent's child counter
        seed = np.random.SeedSequence(seed.entropy, spawn_key=seed.spawn_key)
        return seed.spawn(count)
    return np.random.SeedSequence(seed).spawn(count)
