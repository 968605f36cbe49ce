"""Input checks and the package exception hierarchy."""

import numbers

import numpy as np


class ByzfuseError(Exception):
    pass


class ParameterError(ByzfuseError, ValueError):
    """A parameter is outside its admissible range."""


class DomainError(ByzfuseError, ValueError):
    """A probability sits where a log or ratio would diverge."""


class UnsupportedInputError(ByzfuseError, ValueError):
    pass


class CapacityError(ByzfuseError, RuntimeError):
    """Exhaustive enumeration would exceed the configured guard."""


class ConfigError(ByzfuseError, ValueError):
    pass


def check_probability(value, name, low_open=False, high_open=False):
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise ParameterError(f"{name} must be a real number, got {value!r}")
    lo_ok = v > 0.0 if low_open else v >= 0.0
    hi_ok = v < 1.0 if high_open else v <= 1.0
    if not (np.isfinite(v) and lo_ok and hi_ok):
        lo = "(" if low_open else "["
        hi = ")" if high_open else "]"
        raise ParameterError(f"{name}={v} outside {lo}0, 1{hi}")
    return v


def check_count(value, name, low=0, high=None):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        else:
            raise ParameterError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if value < low or (high is not None and value > high):
        rng = f"[{low}, {high}]" if high is not None else f">= {low}"
        raise ParameterError(f"{name}={value} outside {rng}")
    return value


def check_bits(x, name="reports", ndim=None):
    """Return `x` as an int8 array of 0/1 values."""
    a = np.asarray(x)
    if a.dtype == bool:
        a = a.astype(np.int8)
    if ndim is not None and a.ndim not in np.atleast_1d(ndim):
        raise ParameterError(f"{name} must have ndim in {ndim}, got shape {a.shape}")
    if a.size == 0:
        raise ParameterError(f"{name} is empty")
    if not np.issubdtype(a.dtype, np.integer):
        if not np.all(np.isin(a, (0, 1))):
            raise ParameterError(f"{name} must be binary")
    elif a.min() < 0 or a.max() > 1:
        raise ParameterError(f"{name} must be binary")
    return a.astype(np.int8, copy=False)


def check_reports(R):
    """Reports as an (n, m) or batched (..., n, m) int8 array."""
    R = check_bits(R, "reports")
    if R.ndim < 2:
        raise ParameterError(f"reports must be at least 2-D (n, m), got shape {R.shape}")
    return R


def clamp_prob(p, tiny=1e-12):
    return np.clip(p, tiny, 1.0 - tiny)
