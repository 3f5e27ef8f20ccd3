"""Small numerical helpers shared across modules (slope fits, envelopes)."""

from __future__ import annotations

import numpy as np


def loglog_slope(x, y) -> float:
    """Least-squares slope of log(y) against log(x).

    Both inputs must be positive.  Used for power-law decay-rate checks.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("loglog_slope requires strictly positive data")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def exp_rate(x, y) -> float:
    """Least-squares slope of log(y) against x (exponential decay rate)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise ValueError("exp_rate requires strictly positive values")
    return float(np.polyfit(x, np.log(y), 1)[0])


def fitted_constant(x, y, exponent: float) -> float:
    """max of y * x**(-exponent): the smallest C with y <= C * x**exponent."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return float(np.max(y * x ** (-exponent)))


def split_halves(x, y):
    """Split series at the midpoint of the x-range (not the index midpoint)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    mid = 0.5 * (x[0] + x[-1])
    first = x <= mid
    return (x[first], y[first]), (x[~first], y[~first])
