"""Input-validation helpers shared by the public entry points."""

from __future__ import annotations

import numbers

import numpy as np

from .exceptions import ConfigError


def check_probability(value: float, name: str) -> float:
    if not isinstance(value, numbers.Real) or not 0.0 <= float(value) <= 1.0:
        raise ConfigError(f"{name} must be a probability in [0, 1], got {value!r}")
    return float(value)


def check_fraction_range(lo: float, hi: float, name: str) -> tuple[float, float]:
    lo, hi = float(lo), float(hi)
    if not 0.0 < lo <= hi <= 1.0:
        raise ConfigError(f"{name} must satisfy 0 < lo <= hi <= 1, got ({lo}, {hi})")
    return lo, hi


def check_positive_int(value: int, name: str) -> int:
    if not isinstance(value, numbers.Integral) or int(value) < 1:
        raise ConfigError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_non_negative_int(value: int, name: str) -> int:
    if not isinstance(value, numbers.Integral) or int(value) < 0:
        raise ConfigError(f"{name} must be a non-negative integer, got {value!r}")
    return int(value)


def check_positive(value: float, name: str) -> float:
    if not isinstance(value, numbers.Real) or not float(value) > 0.0:
        raise ConfigError(f"{name} must be > 0, got {value!r}")
    return float(value)


def check_unit_interval(value: float, name: str, *, open_right: bool = False) -> float:
    value = float(value)
    hi_ok = value < 1.0 if open_right else value <= 1.0
    if not (0.0 <= value and hi_ok):
        bracket = "[0, 1)" if open_right else "[0, 1]"
        raise ConfigError(f"{name} must lie in {bracket}, got {value!r}")
    return value


def check_choice(value: str, choices: tuple[str, ...], name: str) -> str:
    if value not in choices:
        raise ConfigError(f"{name} must be one of {choices}, got {value!r}")
    return value


def check_finite_array(arr: np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(arr)
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name} contains non-finite values")
    return arr
