"""Paths: step or piecewise-linear functions of time started at t0."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KINDS = ("step", "interpolated")


@dataclass(frozen=True, eq=False)
class Path:
    """A path with breakpoints (times[i], values[i]); times strictly increasing.

    Outside [t0, last breakpoint] the path is extended by its first value
    (below t0, the usual convention for comparing paths with different
    start times) and by its last value (beyond the simulated horizon).
    Values may be +-inf.
    """

    times: np.ndarray
    values: np.ndarray
    kind: str = "step"

    def __post_init__(self):
        t = np.array(self.times, dtype=float).reshape(-1)
        v = np.array(self.values, dtype=float).reshape(-1)
        if t.size == 0 or t.size != v.size:
            raise ValueError("a path needs matching, nonempty times and values")
        if np.any(np.diff(t) <= 0):
            raise ValueError("breakpoint times must be strictly increasing")
        if self.kind not in KINDS:
            raise ValueError(f"unknown path kind {self.kind!r}")
        t.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def t0(self):
        return float(self.times[0])

    @property
    def breakpoints(self):
        return list(zip(self.times.tolist(), self.values.tolist()))

    def __len__(self):
        return self.times.size

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        tt, vv = self.times, self.values
        if self.kind == "step" or tt.size == 1:
            i = np.clip(np.searchsorted(tt, t, side="right") - 1, 0, tt.size - 1)
            return vv[i]
        i = np.clip(np.searchsorted(tt, t, side="right") - 1, 0, tt.size - 2)
        a, b = vv[i], vv[i + 1]
        w = np.clip((t - tt[i]) / (tt[i + 1] - tt[i]), 0.0, 1.0)
        with np.errstate(invalid="ignore"):
            out = a + w * (b - a)
        out = np.where(w == 0.0, a, np.where(w == 1.0, b, out))
        return np.where(a == b, a, out)

    def left_limit(self, t):
        """Value just before t (equals the value itself for interpolated paths)."""
        if self.kind == "interpolated":
            return self(t)
        t = np.asarray(t, dtype=float)
        i = np.clip(np.searchsorted(self.times, t, side="left") - 1, 0, self.times.size - 1)
        return self.values[i]

    def slopes(self):
        """Per-segment slopes (zeros for step paths)."""
        if self.kind == "step" or self.times.size == 1:
            return np.zeros(max(self.times.size - 1, 0))
        dv = np.diff(self.values)
        with np.errstate(invalid="ignore"):
            s = dv / np.diff(self.times)
        return np.where(dv == 0, 0.0, s)

    def scaled(self, time_factor, space_factor):
        return Path(self.times * time_factor, self.values * space_factor, self.kind)

    def shifted(self, dt=0.0, dx=0.0):
        return Path(self.times + dt, self.values + dx, self.kind)

    def same_as(self, other):
        return (
            self.kind == other.kind
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.values, other.values)
        )

    def __repr__(self):
        return f"Path(kind={self.kind}, t0={self.t0}, n={len(self)})"


def constant(x, t0, kind="step", t1=None):
    if t1 is None:
        return Path([t0], [x], kind)
    return Path([t0, t1], [x, x], kind)
