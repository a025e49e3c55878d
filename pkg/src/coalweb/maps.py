"""Coalescence maps on finite families of independent paths.

`apply_g` merges two classes at the first time their paths cross (meet or
swap order); `apply_f` merges at the first time they coincide. In both cases
the class with the larger representative follows the smaller one from the
merge time on.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels as K
from .errors import GuardError
from .increments import as_law
from .pathspace import path_distance
from .paths import Path
from .rng import key64, stream

FAMILY_KINDS = ("lattice-step", "lattice-interpolated", "gaussian-grid")


@dataclass(frozen=True, eq=False)
class IndependentFamily:
    """m paths on a shared grid; values[i, k] is path i at times[k] (NaN before its start)."""

    times: np.ndarray
    values: np.ndarray
    start: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in FAMILY_KINDS:
            raise ValueError(f"unknown family kind {self.kind!r}")
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[1] != len(self.times):
            raise ValueError("values must have shape (m, len(times))")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        object.__setattr__(self, "start", np.asarray(self.start, dtype=np.int64))

    @property
    def m(self):
        return self.values.shape[0]

    @property
    def path_kind(self):
        return "step" if self.kind == "lattice-step" else "interpolated"

    def path(self, i) -> Path:
        s = self.start[i]
        return Path(self.times[s:], self.values[i, s:], self.path_kind)

    def paths(self):
        return [self.path(i) for i in range(self.m)]

    def rescaled(self, delta, sigma):
        return replace(self, times=self.times * delta * delta, values=self.values * (delta / sigma))


@dataclass(frozen=True)
class EquivalenceState:
    representative: tuple
    merge_log: tuple  # (time, absorbed representative, new representative)

    def classes(self):
        out = {}
        for i, r in enumerate(self.representative):
            out.setdefault(r, []).append(i)
        return sorted(out.values())


# ---------------------------------------------------------------------------
# family constructors


def lattice_family(law, starts, horizon, seed=None, increments=None, kind="lattice-step"):
    """Independent lattice walks from (site, integer start time), on times 0..horizon.

    increments[i][n] is the jump of walker i from time n to n+1 (drawn from the
    seeded stream, walker by walker, if not given).
    """
    law = as_law(law)
    m = len(starts)
    horizon = int(horizon)
    if increments is None:
        rng = stream(seed if seed is not None else 0)
        increments = np.stack([law.sample(rng, horizon) for _ in range(m)]) if m else np.zeros((0, horizon))
    increments = np.asarray(increments, dtype=np.int64).reshape(m, horizon)
    times = np.arange(horizon + 1, dtype=float)
    values = np.full((m, horizon + 1), np.nan)
    start = np.empty(m, dtype=np.int64)
    for i, (x, s) in enumerate(starts):
        s = int(s)
        start[i] = s
        values[i, s] = x
        values[i, s + 1:] = x + np.cumsum(increments[i, s:])
    return IndependentFamily(times, values, start, kind), increments


def gaussian_family(starts, horizon, dt, seed, level=0):
    """Unit-diffusion Gaussian grid paths; node spacing dt / 2**level, increments
    from the counter source keyed by (seed, path index, node)."""
    starts = list(starts)
    fine = dt / 2 ** level
    t_min = min(t for _, t in starts)
    n_nodes = int(round((horizon - t_min) / fine)) + 1
    start = np.array([int(round((t - t_min) / fine)) for _, t in starts], dtype=np.int64)
    x0 = np.array([x for x, _ in starts], dtype=float)
    vals = K.bm_family_values(key64(seed), x0, start, n_nodes, level, math.sqrt(dt))
    times = t_min + fine * np.arange(n_nodes)
    return IndependentFamily(times, vals, start, "gaussian-grid")


# ---------------------------------------------------------------------------
# the maps


def _first_event(d, coincide_only):
    """Index of the first node where d hits 0 or (unless coincide_only) changes sign."""
    if coincide_only:
        hit = np.flatnonzero(d == 0)
        return int(hit[0]) if hit.size else -1
    s0 = np.sign(d[0])
    if s0 == 0:
        return 0
    hit = np.flatnonzero(np.sign(d) != s0)
    return int(hit[0]) if hit.size else -1


def _coalesce(family: IndependentFamily, coincide_only: bool):
    times = family.times.copy()
    V = family.values.copy()
    start = family.start.copy()
    m = family.m
    rep = list(range(m))
    log = []
    interpolate = family.kind == "lattice-interpolated" and not coincide_only
    while True:
        best = None
        for i in range(m):
            for j in range(i + 1, m):
                if rep[i] == rep[j]:
                    continue
                s = max(start[i], start[j])
                d = V[i, s:] - V[j, s:]
                k = _first_event(d, coincide_only)
                if k < 0:
                    continue
                k += s
                tau = times[k]
                if interpolate and k > s and d[k - s] != 0:
                    a, b = d[k - s - 1], d[k - s]
                    tau = times[k - 1] + (times[k] - times[k - 1]) * a / (a - b)
                    # a crossing within round-off of a node (e.g. one inserted for an
                    # earlier merge at the same time) happens at that node
                    eps = 1e-12 * max(1.0, abs(times[k]))
                    if tau - times[k - 1] <= eps:
                        tau, k = times[k - 1], k - 1
                    elif times[k] - tau <= eps:
                        tau = times[k]
                key = (tau, i, j, k)
                if best is None or key < best:
                    best = key
        if best is None:
            break
        tau, i, j, k = best
        if interpolate and tau < times[k]:
            # refine the shared grid at the crossing so the paths stay exact
            w = (tau - times[k - 1]) / (times[k] - times[k - 1])
            col = V[:, k - 1] + w * (V[:, k] - V[:, k - 1])
            times = np.insert(times, k, tau)
            V = np.insert(V, k, col, axis=1)
            start = np.where(start >= k, start + 1, start)
        ri, rj = rep[i], rep[j]
        star, other = min(ri, rj), max(ri, rj)
        for q in range(m):
            if rep[q] == other:
                V[q, k:] = V[star, k:]
                rep[q] = star
        log.append((float(tau), other, star))
    out = IndependentFamily(times, V, start, family.kind)
    return out, EquivalenceState(tuple(rep), tuple(log))


def apply_g(family: IndependentFamily):
    """Merge classes at first crossing (coincidence or change of order).

    Ties at the same time are processed in lexicographic (i, j) order.
    Lattice-interpolated crossings are located exactly between nodes (the grid
    is refined there); step and Gaussian grid paths cross at nodes.
    """
    if family.m < 1:
        raise GuardError("a family needs at least one path")
    return _coalesce(family, coincide_only=False)


def apply_f(family: IndependentFamily):
    """Merge classes at first coincidence on the grid (lattice families only)."""
    if family.m < 1:
        raise GuardError("a family needs at least one path")
    if family.kind == "gaussian-grid":
        raise GuardError("coincidence has probability zero for Gaussian paths")
    return _coalesce(family, coincide_only=True)


def dbar(p: Path, q: Path) -> float:
    """sup_t |p(t) - q(t)| joined with |t_p - t_q|, paths extended below their start."""
    ts = np.union1d(p.times, q.times)
    gap = float(np.max(np.abs(p(ts) - q(ts))))
    for a, b in ((p, q), (q, p)):
        if a.kind == "step":
            gap = max(gap, float(np.max(np.abs(a.left_limit(a.times) - b.left_limit(a.times)))))
    return max(gap, abs(p.t0 - q.t0))


def fg_distance(family: IndependentFamily, metric="dbar", grid=1000):
    """max over i of the distance between the i-th f-path and the i-th g-path.

    metric "dbar" is the uncompactified sup distance; "d" uses the
    compactified path distance.
    """
    if family.kind == "gaussian-grid":
        raise GuardError("fg_distance needs a lattice family")
    F, _ = apply_f(family)
    G, _ = apply_g(family)
    best = 0.0
    for i in range(family.m):
        p, q = F.path(i), G.path(i)
        if metric == "dbar":
            v = dbar(p, q)
        elif metric == "d":
            v = path_distance(p, q, grid)
        else:
            raise ValueError(f"unknown metric {metric!r}")
        best = max(best, v)
    return best


# ---------------------------------------------------------------------------
# coalescing Brownian motions


def _prepare_bm(starts, horizon, dt, level):
    starts = list(starts)
    if dt <= 0:
        raise GuardError("grid step must be positive")
    fine = dt / 2 ** level
    t_min = min(t for _, t in starts)
    n_nodes = int(round((horizon - t_min) / fine)) + 1
    node = np.array([int(round((t - t_min) / fine)) for _, t in starts], dtype=np.int64)
    order = np.lexsort((np.arange(len(starts)), node))
    x0 = np.array([x for x, _ in starts], dtype=float)
    return t_min, fine, n_nodes, node, order, x0


def coalescing_bm_classes(starts, horizon, dt, seed, level=0, log_merges=False):
    """Class representatives and their positions at the horizon (lazy sampler)."""
    t_min, fine, n_nodes, node, order, x0 = _prepare_bm(starts, horizon, dt, level)
    reps, pos, log = K.bm_coalesce(
        key64(seed) if not isinstance(seed, np.uint64) else seed,
        order.astype(np.int64), x0[order], node[order], n_nodes, level, math.sqrt(dt), log_merges,
    )
    merges = [(t_min + fine * k, int(a), int(b)) for k, a, b in log]
    return reps, pos, merges


def sample_coalescing_bm(starts, horizon, dt, seed, level=0) -> list:
    """Gaussian grid paths from the starts, coalesced by apply_g.

    Path i has increments keyed by (seed, i), so the result is the same as
    `apply_g(gaussian_family(...))`; this routine builds the paths from the
    lazy per-class sampler and is fast for many starts.
    """
    starts = list(starts)
    if not starts:
        return []
    t_min, fine, n_nodes, node, order, x0 = _prepare_bm(starts, horizon, dt, level)
    fam = gaussian_family(starts, horizon, dt, seed, level)
    _, _, merges = coalescing_bm_classes(starts, horizon, dt, seed, level, log_merges=True)
    rep = list(range(len(starts)))
    V = fam.values.copy()
    for tau, absorbed, star in merges:
        k = int(round((tau - t_min) / fine))
        for q in range(len(starts)):
            if rep[q] == absorbed:
                rep[q] = star
                V[q, k:] = V[star, k:]
    out = IndependentFamily(fam.times, V, fam.start, "gaussian-grid")
    return out.paths()


def bm_point_count(starts, horizon, dt, seed, a, b, level=0):
    """Distinct class positions in (a, b) at the horizon."""
    _, pos, _ = coalescing_bm_classes(starts, horizon, dt, seed, level)
    return int(np.count_nonzero((pos > a) & (pos < b)))
