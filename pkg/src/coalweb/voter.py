"""Voter model on a window, its coupling with backward coalescing walks, and the interface.

Sites outside the window never update: everything left of it holds opinion 1
and everything right of it holds 0 (the heaviside convention).
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

import numpy as np

from . import _kernels as K
from .errors import GuardError
from .increments import as_law
from .paths import Path
from .rng import stream
from .walks import SpaceTimeWindow, field_source, ring_times, simulate_discrete


@dataclass(frozen=True, eq=False)
class VoterState:
    x_lo: int
    x_hi: int
    values: np.ndarray  # int8, values[x - x_lo]
    time: float = 0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.int8)
        if v.shape != (self.x_hi - self.x_lo,):
            raise GuardError("values must cover every window site")
        if np.any((v != 0) & (v != 1)):
            raise GuardError("opinions are 0 or 1")
        object.__setattr__(self, "values", v)

    def at(self, x):
        x = np.asarray(x)
        inside = (x >= self.x_lo) & (x < self.x_hi)
        idx = np.clip(x - self.x_lo, 0, self.values.size - 1)
        return np.where(inside, self.values[idx], np.where(x < self.x_lo, 1, 0)).astype(np.int8)

    @property
    def leftmost_zero(self):
        z = np.flatnonzero(self.values == 0)
        return int(self.x_lo + z[0]) if z.size else self.x_hi

    @property
    def rightmost_one(self):
        o = np.flatnonzero(self.values == 1)
        return int(self.x_lo + o[-1]) if o.size else self.x_lo - 1


def heaviside(x_lo, x_hi) -> VoterState:
    """1 on sites <= 0, 0 on sites > 0."""
    xs = np.arange(x_lo, x_hi)
    return VoterState(x_lo, x_hi, (xs <= 0).astype(np.int8), 0)


def step_voter(state: VoterState, increments) -> VoterState:
    """One update.

    Discrete time: `increments` has one offset per window site and every site
    adopts the previous opinion at x + Y simultaneously. Continuous time: pass
    `(site, y, time)` for the single ringing site.
    """
    if isinstance(increments, tuple):
        x, y, t = increments
        if not state.x_lo <= x < state.x_hi:
            raise GuardError(f"site {x} is outside the window")
        v = state.values.copy()
        v[x - state.x_lo] = state.at(x + int(y))
        return VoterState(state.x_lo, state.x_hi, v, t)
    ys = np.asarray(increments)
    if ys.shape != state.values.shape:
        raise GuardError("every site needs an increment in a synchronous round")
    xs = np.arange(state.x_lo, state.x_hi)
    return VoterState(state.x_lo, state.x_hi, state.at(xs + ys.astype(np.int64)), state.time + 1)


# ---------------------------------------------------------------------------
# coupling


@dataclass(frozen=True, eq=False)
class CoupledRealization:
    """One increment field on a window driving both the voter model and its dual.

    Discrete time: field[n - 1, x - x_lo] is Y_{x,n}, used at time n = 1..horizon.
    Continuous time: rings[x] lists (time, y) of the clock at x in (0, horizon],
    drawn from the same per-site streams as the continuous walk simulator.
    """

    time_kind: str
    law: object
    x_lo: int
    x_hi: int
    horizon: float
    initial: VoterState
    field: np.ndarray | None = None
    rings: dict | None = None
    seed: int = 0

    def _events(self):
        ev = [(t, x, y) for x, rs in self.rings.items() for t, y in rs]
        ev.sort()
        return ev

    def voter_at(self, points: Iterable) -> dict:
        """Opinions at space-time points (x, n), evolved forward from the initial state."""
        pts = sorted(set((float(t), int(x)) for x, t in points))
        out = {}
        state = self.initial
        if self.time_kind == "discrete":
            n = 0
            for t, x in pts:
                while n < t:
                    state = step_voter(state, self.field[n])
                    n += 1
                out[(x, t)] = int(state.at(x))
            return out
        ev = self._events()
        k = 0
        for t, x in pts:
            while k < len(ev) and ev[k][0] <= t:
                s, z, y = ev[k]
                state = step_voter(state, (z, y, s))
                k += 1
            out[(x, t)] = int(state.at(x))
        return out

    def ancestors(self, points: Iterable) -> dict:
        """Position at time 0 of the backward walk from each point (the dual system).

        Walkers that leave the window stop where they land, since those sites
        never update.
        """
        points = [(int(x), float(t)) for x, t in points]
        if self.time_kind == "discrete":
            N = int(self.horizon)
            window = SpaceTimeWindow(self.x_lo, self.x_hi, 0, N, "buffered_open", 0)
            reversed_field = self.field[::-1]
            origins = [(x, N - int(t)) for x, t in points]
            sys = simulate_discrete(window, self.law, origins, 0, field_source(reversed_field, self.x_lo, 0))
            return {p: sys.trajectory(i)[1][-1].item() for i, p in enumerate(points)}
        out = {}
        times = {x: np.array([s for s, _ in rs]) for x, rs in self.rings.items()}
        for x0, t0 in points:
            x, t = x0, t0
            while self.x_lo <= x < self.x_hi:
                ts = times[x]
                k = np.searchsorted(ts, t, side="right") - 1
                if k < 0:
                    break
                t = ts[k]
                x = x + self.rings[x][k][1]
                # the ring at time t reads the opinion just before it
                t = np.nextafter(t, -np.inf)
            out[(x0, t0)] = x
        return out


def coupled_realization(law, x_lo, x_hi, horizon, seed, time_kind="discrete", initial=None):
    """Sample an increment field (and a uniform random initial state unless given)."""
    law = as_law(law)
    rng = stream(seed)
    if initial is None:
        initial = VoterState(x_lo, x_hi, rng.integers(0, 2, x_hi - x_lo).astype(np.int8), 0)
    if time_kind == "discrete":
        law.require()
        field = law.sample(rng, (int(horizon), x_hi - x_lo))
        return CoupledRealization("discrete", law, x_lo, x_hi, int(horizon), initial, field=field, seed=seed)
    law.require(continuous=True)
    rings = {x: ring_times(seed, law, x, 0.0, float(horizon)) for x in range(x_lo, x_hi)}
    return CoupledRealization("continuous", law, x_lo, x_hi, float(horizon), initial, rings=rings, seed=seed)


def dual_check(coupled: CoupledRealization, A) -> bool:
    """[some (x, n) in A has opinion 1] == [some ancestor of A has opinion 1 at time 0]."""
    A = [(int(x), float(t)) for x, t in A]
    for x, t in A:
        if not (coupled.x_lo <= x < coupled.x_hi and 0 < t <= coupled.horizon):
            raise GuardError(f"point {(x, t)} is outside the coupled window")
    if not A:
        return True
    forward = coupled.voter_at(A)
    lhs = any(v == 1 for v in forward.values())
    anc = set(coupled.ancestors(A).values())
    rhs = bool(np.any(coupled.initial.at(np.array(sorted(anc)))))
    return lhs == rhs


def exact_marginals(law, x_lo, x_hi, steps, initial: VoterState | None = None) -> dict:
    """P(opinion 1 at (x, steps)) for each window site, exactly, in discrete time.

    Follows the law of the single backward walk from (x, steps) with stopping
    outside the window.
    """
    law = as_law(law)
    initial = initial or heaviside(x_lo, x_hi)
    out = {}
    for x in range(x_lo, x_hi):
        dist = {x: Fraction(1)}
        for _ in range(steps):
            nxt = {}
            for z, p in dist.items():
                if not x_lo <= z < x_hi:
                    nxt[z] = nxt.get(z, 0) + p
                    continue
                for o, q in zip(law.offsets, law.exact):
                    nxt[z + o] = nxt.get(z + o, 0) + p * q
            dist = nxt
        out[x] = sum((p for z, p in dist.items() if initial.at(z) == 1), Fraction(0))
    return out


# ---------------------------------------------------------------------------
# interface


@dataclass(frozen=True, eq=False)
class InterfaceTrace:
    times: np.ndarray
    l: np.ndarray
    r: np.ndarray
    alpha: np.ndarray  # final word on [l, r]
    sigma: float
    time_kind: str
    half: int
    reruns: int = 0

    @property
    def width(self):
        return self.r - self.l

    def csv(self) -> str:
        buf = io.StringIO()
        buf.write("t,l,r,width\n")
        for t, a, b in zip(self.times.tolist(), self.l.tolist(), self.r.tolist()):
            buf.write(f"{t:.17g},{a},{b},{b - a}\n")
        return buf.getvalue()


def window_half(law, horizon, margin=None):
    """Half-width of the simulated band, 6 sigma sqrt(horizon) plus a step margin."""
    law = as_law(law)
    margin = 4 * law.max_abs if margin is None else margin
    return int(math.ceil(6.0 * law.sigma * math.sqrt(horizon))) + margin


def interface_trace(law, horizon, sample_times, seed, time_kind="continuous", key=(), max_reruns=8) -> InterfaceTrace:
    """l_t (leftmost 0) and r_t (rightmost 1) of the heaviside voter model.

    The band has 12 sigma sqrt(horizon) sites; if the active region reaches its
    edge the run is repeated with a doubled band (same stream).
    """
    law = as_law(law)
    if time_kind == "continuous":
        law.require(continuous=True)
        kernel = K.interface_continuous
        ts = np.asarray(sample_times, dtype=float)
    else:
        law.require()
        kernel = K.interface_discrete
        ts = np.asarray(sample_times, dtype=np.int64)
        if np.any(ts != np.asarray(sample_times)):
            raise GuardError("discrete-time sample times must be integers")
    if ts.size == 0 or np.any(np.diff(ts) < 0) or ts[0] < 0 or ts[-1] > horizon:
        raise GuardError("sample times must be sorted within [0, horizon]")
    half = window_half(law, max(horizon, 1))
    for rerun in range(max_reruns + 1):
        ls, rs, word, bad = kernel(stream(seed, *key), law.offsets_array, law.cdf, half, ts)
        if not bad:
            return InterfaceTrace(ts.astype(float), ls, rs, word, law.sigma, time_kind, half, rerun)
        half *= 2
    raise GuardError("interface kept reaching the band edge")


def boundary_paths(trace: InterfaceTrace, delta):
    """Rescaled interpolated boundaries l-bar, r-bar and their sup distance.

    Both are linear between the same sample times, so the sup of their gap is
    attained at a sample time.
    """
    if not 0 < delta <= 1:
        raise GuardError("delta must lie in (0, 1]")
    ts = trace.times * delta * delta
    c = delta / trace.sigma
    lb = Path(ts, trace.l * c, "interpolated")
    rb = Path(ts, trace.r * c, "interpolated")
    gap = float(np.max(np.abs(trace.l - trace.r))) * c
    return lb, rb, gap
