"""Helpers for sampled piecewise-linear functions on an interval."""

from __future__ import annotations

import numpy as np


def unit_grid(points: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    return np.linspace(lo, hi, int(points))


def sup_error(values, reference) -> float:
    return float(np.max(np.abs(np.asarray(values, float) - np.asarray(reference, float))))


def slopes(x, y) -> np.ndarray:
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    return np.diff(y) / np.diff(x)


def count_breakpoints(x, y, rtol: float = 1e-9) -> int:
    """Number of slope changes of the sampled function.

    A kink that falls strictly inside a grid cell shows up as two
    consecutive slope changes; runs of adjacent changes count once.
    """
    s = slopes(x, y)
    if s.size < 2:
        return 0
    scale = max(1.0, float(np.max(np.abs(s))))
    change = np.abs(np.diff(s)) > rtol * scale
    if not np.any(change):
        return 0
    starts = change & ~np.concatenate([[False], change[:-1]])
    return int(np.count_nonzero(starts))


def count_teeth(x, y) -> int:
    """Number of local maxima, read off from sign changes of the slope."""
    s = np.sign(slopes(x, y))
    s = s[s != 0]
    return int(np.count_nonzero((s[:-1] > 0) & (s[1:] < 0)))
