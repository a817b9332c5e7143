"""Right-continuous step survival curves on a single time window.

A curve starts at value 1 at the window start and drops at a finite set of
jump times.  Kaplan-Meier and Breslow-baseline fits are natively of this
form, and parametric curves are discretised onto an observed-time grid
before use, so every integral against a curve reduces to an exact finite
sum over its jumps -- no quadrature error enters downstream estimators.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


@dataclass(frozen=True)
class StepSurvival:
    """Nonincreasing cadlag step function with value 1 at ``window_start``.

    Parameters
    ----------
    window_start : float
        Left end of the window; the curve equals 1 here.
    jump_times : array-like
        Strictly increasing times, all greater than ``window_start``.
    post_jump_values : array-like
        Value of the curve at (i.e. just after) each jump time.  Must be
        nonincreasing and lie in [0, 1].
    """

    window_start: float
    jump_times: np.ndarray
    post_jump_values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.jump_times, dtype=float)
        values = np.asarray(self.post_jump_values, dtype=float)
        if times.ndim != 1 or values.shape != times.shape:
            raise ValueError("jump_times and post_jump_values must be 1-d and equal length")
        if times.size:
            if times[0] <= self.window_start:
                raise ValueError("jump times must exceed the window start")
            if np.any(np.diff(times) <= 0):
                raise ValueError("jump times must be strictly increasing")
            if np.any(values < 0) or np.any(values > 1):
                raise ValueError("values must lie in [0, 1]")
            if np.any(np.diff(values) > 0):
                raise ValueError("values must be nonincreasing")
        object.__setattr__(self, "jump_times", times)
        object.__setattr__(self, "post_jump_values", values)

    def eval(self, t) -> float | np.ndarray:
        """Value of the curve at ``t`` (right-continuous)."""
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < self.window_start):
            raise ValueError(f"t < window start {self.window_start}")
        idx = np.searchsorted(self.jump_times, t_arr, side="right") - 1
        padded = np.concatenate(([1.0], self.post_jump_values))
        out = padded[idx + 1]
        return float(out) if np.isscalar(t) or t_arr.ndim == 0 else out

    def left_limit(self, t) -> float | np.ndarray:
        """Limit of the curve from the left at ``t``."""
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr <= self.window_start):
            raise ValueError(f"t <= window start {self.window_start}")
        idx = np.searchsorted(self.jump_times, t_arr, side="left") - 1
        padded = np.concatenate(([1.0], self.post_jump_values))
        out = padded[idx + 1]
        return float(out) if np.isscalar(t) or t_arr.ndim == 0 else out

    def stieltjes_sum(
        self,
        a: float,
        b: float,
        f: Callable[[float, float, float], float],
    ) -> float:
        """Exact sum of ``f(s, pre, post) * (post - pre)`` over jumps in (a, b].

        ``pre`` and ``post`` are the curve values just before and at the
        jump time ``s``.  This is the Riemann-Stieltjes integral of ``f``
        against the curve, exact because the curve is a step function.
        """
        if a < self.window_start:
            raise ValueError("a < window start")
        if b < a:
            raise ValueError("b < a")
        lo = np.searchsorted(self.jump_times, a, side="right")
        hi = np.searchsorted(self.jump_times, b, side="right")
        total = 0.0
        padded = np.concatenate(([1.0], self.post_jump_values))
        for j in range(lo, hi):
            s = self.jump_times[j]
            pre = padded[j]
            post = padded[j + 1]
            if post != pre:
                total += f(s, pre, post) * (post - pre)
        return total

    def values_at(self, grid: Sequence[float]) -> np.ndarray:
        """Curve values at each grid point (vectorised ``eval``)."""
        return np.atleast_1d(self.eval(np.asarray(grid, dtype=float)))

    def to_csv(self) -> str:
        """Debug serialisation as ``time,value`` pairs, starting at the window start."""
        buf = io.StringIO()
        buf.write("time,value\n")
        buf.write(f"{float(self.window_start)!r},1.0\n")
        for t, v in zip(self.jump_times, self.post_jump_values):
            buf.write(f"{float(t)!r},{float(v)!r}\n")
        return buf.getvalue()


def from_grid(window_start: float, grid: np.ndarray, values: np.ndarray) -> StepSurvival:
    """Build a curve from values on a strictly increasing grid, dropping flat points."""
    grid = np.asarray(grid, dtype=float)
    values = np.asarray(values, dtype=float)
    prev = np.concatenate(([1.0], values[:-1]))
    keep = values != prev
    return StepSurvival(window_start, grid[keep], values[keep])


def constant_one(window_start: float) -> StepSurvival:
    """The curve that is identically 1 (no censoring / no events)."""
    return StepSurvival(window_start, np.empty(0), np.empty(0))
