"""Small input-validation helpers used by the estimator-style classes."""

from __future__ import annotations

from typing import Iterable, Sequence


def check_non_empty(value: Sequence, name: str):
    if len(value) == 0:
        raise ValueError(f"{name} must be non-empty")
    return value


def check_positive(value, name: str):
    if value <= 0:
        raise ValueError(f"{name} must be positive, got {value!r}")
    return value


def check_in_unit_interval(value: float, name: str, *, open_low: bool = False):
    low_ok = value > 0 if open_low else value >= 0
    if not (low_ok and value <= 1):
        raise ValueError(f"{name} must lie in {'(' if open_low else '['}0, 1], got {value!r}")
    return value


def check_choice(value, name: str, choices: Iterable):
    allowed = tuple(choices)
    if value not in allowed:
        raise ValueError(f"{name} must be one of {allowed}, got {value!r}")
    return value
