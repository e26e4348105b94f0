"""Exceptions and input-checking helpers shared by the estimators."""
from __future__ import annotations

import numpy as np


class ScmError(Exception):
    """Base class for errors raised by this package."""


class ParameterError(ScmError, ValueError):
    """A parameter or input is outside its documented domain."""


class ChannelUnusableError(ScmError):
    """Band planning found no usable spectrum."""


class SyncError(ScmError):
    """The training sequence could not be located."""


class EqualizerDivergedError(ScmError):
    """LMS adaptation blew up. ``taps`` holds the last stable coefficients."""

    def __init__(self, message, taps=None):
        super().__init__(message)
        self.taps = taps


def check_symbols(x, name="x", min_length=1):
    """Return ``x`` as a 1-D complex128 array, rejecting NaN/inf.

    sklearn's ``check_array`` refuses complex input, hence this helper.
    """
    arr = np.asarray(x)
    if arr.ndim == 2 and 1 in arr.shape:
        arr = arr.ravel()
    if arr.ndim != 1:
        raise ParameterError(f"{name} must be one-dimensional, got shape {arr.shape}")
    arr = arr.astype(np.complex128, copy=False)
    if arr.size < min_length:
        raise ParameterError(f"{name} needs at least {min_length} samples, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name} contains NaN or infinite values")
    return arr


def check_bits(bits, name="bits"):
    arr = np.asarray(bits).ravel()
    if arr.size and not np.all((arr == 0) | (arr == 1)):
        raise ParameterError(f"{name} must contain only 0/1")
    return arr.astype(np.uint8)


def check_positive(value, name):
    value = float(value)
    if not value > 0 or not np.isfinite(value):
        raise ParameterError(f"{name} must be positive and finite, got {value}")
    return value
