"""Coalescing random walks on finite windows of the integer lattice.

Two simulators keep full event logs (`simulate_discrete`, `simulate_continuous`)
for path-level work; `density` and `enumerate_exact` cover the occupancy
statistics of the system started from every site.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from . import _kernels as K
from .errors import BudgetError, GuardError
from .increments import IncrementDistribution, as_law, parse_law
from .paths import Path
from .rng import stream, zigzag

BOUNDARIES = ("torus", "buffered_open")
TIME_KINDS = ("discrete", "continuous")


@dataclass(frozen=True)
class SpaceTimeWindow:
    """Sites x_lo <= x < x_hi, times t_lo <= t <= t_hi."""

    x_lo: int
    x_hi: int
    t_lo: float
    t_hi: float
    boundary: str = "buffered_open"
    buffer: int = 0

    def __post_init__(self):
        if not self.x_lo < self.x_hi:
            raise GuardError("window needs x_lo < x_hi")
        if not self.t_lo < self.t_hi:
            raise GuardError("window needs t_lo < t_hi")
        if self.boundary not in BOUNDARIES:
            raise GuardError(f"unknown boundary {self.boundary!r}")
        if self.boundary == "torus" and self.width < 3:
            raise GuardError("torus width must be at least 3")
        if self.buffer < 0:
            raise GuardError("buffer must be nonnegative")

    @property
    def width(self):
        return self.x_hi - self.x_lo

    @property
    def band(self):
        """Simulated sites [lo, hi)."""
        if self.boundary == "torus":
            return self.x_lo, self.x_hi
        return self.x_lo - self.buffer, self.x_hi + self.buffer

    def wrap(self, x):
        if self.boundary == "torus":
            return self.x_lo + (x - self.x_lo) % self.width
        return x

    def contains(self, x, t):
        return self.x_lo <= x < self.x_hi and self.t_lo <= t <= self.t_hi


def buffer_for(law, duration):
    """Buffer of 6 sigma sqrt(duration) sites for buffered_open windows."""
    law = as_law(law)
    return int(math.ceil(6.0 * law.sigma * math.sqrt(max(duration, 0.0))))


@dataclass(frozen=True, eq=False)
class CoalescingSystem:
    window: SpaceTimeWindow
    time_kind: str
    law: IncrementDistribution
    origins: tuple  # (site, birth, immediate)
    events: tuple  # per walker: (times array, sites array); first entry is the birth
    merges: dict  # walker -> (merge time, absorbing walker)
    seed: int
    frozen: frozenset = frozenset()
    tails: dict = field(default_factory=dict)  # continuous time: next jump point after the log

    @property
    def n_walkers(self):
        return len(self.origins)

    @property
    def contaminated(self):
        return bool(self.frozen)

    def birth(self, i):
        return self.origins[i][1]

    def absorber_at(self, i, t):
        """The walker whose own log gives walker i's position at time t."""
        while i in self.merges and self.merges[i][0] <= t:
            i = self.merges[i][1]
        return i

    def position(self, i, t):
        if t < self.birth(i):
            raise ValueError(f"walker {i} is not born by time {t}")
        j = self.absorber_at(i, t)
        ts, xs = self.events[j]
        k = np.searchsorted(ts, t, side="right") - 1
        return int(xs[k])

    def alive(self, t):
        """Walkers born by t and not yet absorbed (or frozen)."""
        return [
            i for i in range(self.n_walkers)
            if self.birth(i) <= t and self.absorber_at(i, t) == i
        ]

    def occupied(self, t, cohort=None):
        ids = range(self.n_walkers) if cohort is None else cohort
        return sorted({self.position(i, t) for i in ids if self.birth(i) <= t})

    def trajectory(self, i):
        """Full (times, sites) of walker i, continuing along its absorbers."""
        ts, xs = self.events[i]
        parts_t, parts_x = [ts], [xs]
        while i in self.merges:
            tau, j = self.merges[i]
            tj, xj = self.events[j]
            keep = tj >= tau
            parts_t.append(tj[keep])
            parts_x.append(xj[keep])
            i = j
        return np.concatenate(parts_t), np.concatenate(parts_x), i

    def check_permanence(self, times=None):
        """Positions of absorbed walkers agree with their absorbers after merging."""
        for i, (tau, j) in self.merges.items():
            qs = [tau, self.window.t_hi] if times is None else [s for s in times if s >= tau]
            for s in qs:
                if self.position(i, s) != self.position(j, s):
                    return False
        return True


# ---------------------------------------------------------------------------
# discrete time


def _check_origins(window, origins, integer_times):
    out = []
    for o in origins:
        site, birth = int(o[0]), o[1]
        imm = bool(o[2]) if len(o) > 2 else False
        if integer_times:
            if int(birth) != birth:
                raise GuardError(f"discrete-time birth {birth} is not an integer")
            birth = int(birth)
        else:
            birth = float(birth)
        if not window.contains(site, birth):
            raise GuardError(f"origin {(site, birth)} outside the window")
        out.append((site, birth, imm))
    return tuple(out)


def _default_source(law, rng):
    def source(n, walkers, sites):
        return law.sample(rng, len(sites))
    return source


def field_source(field_array, x_lo, t_lo=0):
    """Increments read from field_array[n - t_lo, x - x_lo] (an explicit increment field)."""
    def source(n, walkers, sites):
        return np.asarray([field_array[n - t_lo, s - x_lo] for s in sites], dtype=np.int64)
    return source


def walker_source(increments):
    """Increments attached to walkers: increments[walker][n] (used for map cross-checks)."""
    def source(n, walkers, sites):
        return np.asarray([increments[w][n] for w in walkers], dtype=np.int64)
    return source


def simulate_discrete(window, law, origins, seed, source: Callable | None = None) -> CoalescingSystem:
    """Walkers jump at every integer time, including their birth time.

    After each synchronous round the walkers sharing a site merge and the
    smallest index absorbs the rest. `source(n, walkers, sites)` supplies the
    increments of the occupied sites (ascending) for the jump from n to n+1;
    by default they are drawn from the seeded stream in that order.
    """
    law = as_law(law).require()
    origins = _check_origins(window, origins, integer_times=True)
    if int(window.t_lo) != window.t_lo or int(window.t_hi) != window.t_hi:
        raise GuardError("discrete-time windows need integer times")
    t_lo, t_hi = int(window.t_lo), int(window.t_hi)
    band_lo, band_hi = window.band
    rng = stream(seed)
    source = source or _default_source(law, rng)

    births = {}
    for i, (_, b, _) in enumerate(origins):
        births.setdefault(b, []).append(i)
    ev_t = [[] for _ in origins]
    ev_x = [[] for _ in origins]
    merges = {}
    frozen = set()
    alive = {}
    for n in range(t_lo, t_hi + 1):
        for i in births.get(n, ()):
            site = origins[i][0]
            ev_t[i].append(n)
            ev_x[i].append(site)
            if site in alive:
                j = alive[site]
                a, b = min(i, j), max(i, j)
                merges[b] = (n, a)
                alive[site] = a
            else:
                alive[site] = i
        if n == t_hi or not alive:
            continue
        sites = sorted(alive)
        walkers = [alive[s] for s in sites]
        ys = source(n, walkers, sites)
        nxt = {}
        for s, i, y in zip(sites, walkers, ys):
            z = window.wrap(s + int(y))
            ev_t[i].append(n + 1)
            ev_x[i].append(z)
            if not band_lo <= z < band_hi:
                frozen.add(i)
                continue
            if z in nxt:
                j = nxt[z]
                a, b = min(i, j), max(i, j)
                merges[b] = (n + 1, a)
                nxt[z] = a
            else:
                nxt[z] = i
        alive = nxt
    events = tuple(
        (np.asarray(t, dtype=float), np.asarray(x, dtype=np.int64)) for t, x in zip(ev_t, ev_x)
    )
    return CoalescingSystem(window, "discrete", law, origins, events, merges, int(seed), frozenset(frozen))


# ---------------------------------------------------------------------------
# continuous time


class _SiteClock:
    """Rate-1 Poisson clock of one site with its increments, from a per-site stream."""

    __slots__ = ("rng", "law", "time", "y")

    def __init__(self, seed, site, law, t_lo):
        self.rng = stream(seed, zigzag(site))
        self.law = law
        self.time = t_lo
        self.y = 0
        self.advance()

    def advance(self):
        self.time += float(self.rng.standard_exponential())
        self.y = int(self.law.sample(self.rng))

    def next_after(self, t, strict=True):
        while self.time < t or (strict and self.time == t):
            self.advance()
        return self.time


def ring_times(seed, law, site, t_lo, t_hi):
    """(time, increment) of the clock rings at `site` in (t_lo, t_hi]."""
    c = _SiteClock(seed, site, law, t_lo)
    out = []
    while c.time <= t_hi:
        out.append((c.time, c.y))
        c.advance()
    return out


def full_band_origins(window, law, seed):
    """Origins realising 'a walker from every space-time point' of the window.

    One walker per site at t_lo, and for each clock ring (x, s) inside the
    window two walkers: one that jumps at s and one that waits for the next ring.
    """
    law = as_law(law)
    out = [(x, float(window.t_lo), False) for x in range(window.x_lo, window.x_hi)]
    for x in range(window.x_lo, window.x_hi):
        for s, _ in ring_times(seed, law, x, window.t_lo, window.t_hi):
            out.append((x, s, True))
            out.append((x, s, False))
    return out


def simulate_continuous(window, law, origins, seed, full_band=False) -> CoalescingSystem:
    """Each site carries a rate-1 clock; a walker jumps by the ring's increment.

    Rings and increments of site x come from the stream (seed, site), so the
    voter model and this system can share them. A walker landing on an occupied
    site merges at once (smallest index absorbs).
    """
    law = as_law(law).require(continuous=True)
    if full_band:
        origins = full_band_origins(window, law, seed)
    origins = _check_origins(window, origins, integer_times=False)
    t_lo, t_hi = float(window.t_lo), float(window.t_hi)
    band_lo, band_hi = window.band
    clocks = {}

    def clock(x):
        if x not in clocks:
            clocks[x] = _SiteClock(seed, x, law, t_lo)
        return clocks[x]

    order = sorted(range(len(origins)), key=lambda i: (origins[i][1], i))
    ev_t = [[] for _ in origins]
    ev_x = [[] for _ in origins]
    merges = {}
    frozen = set()
    alive = {}  # site -> walker
    heap = []  # (ring time, site)

    def land(i, z, t):
        ev_t[i].append(t)
        ev_x[i].append(z)
        if not band_lo <= z < band_hi:
            frozen.add(i)
            return
        if z in alive:
            j = alive[z]
            a, b = min(i, j), max(i, j)
            merges[b] = (t, a)
            alive[z] = a
            return
        alive[z] = i
        heapq.heappush(heap, (clock(z).next_after(t), z))

    def jump(x, t):
        i = alive.pop(x)
        c = clocks[x]
        z = window.wrap(x + c.y)
        land(i, z, t)

    bi = 0
    while True:
        tb = origins[order[bi]][1] if bi < len(order) else math.inf
        tr = heap[0][0] if heap else math.inf
        if min(tb, tr) > t_hi:
            break
        # a walker born at a ring without jumping must not meet the resident that jumps away
        if tb < tr or (tb == tr and origins[order[bi]][2]):
            i = order[bi]
            bi += 1
            x, b, imm = origins[i]
            if imm:
                c = clock(x)
                if c.next_after(b, strict=False) != b:
                    raise GuardError("immediate-jump origin is not at a clock ring")
                if x in alive:
                    # the resident walker jumps at this ring too: same path from here
                    ev_t[i].append(b)
                    ev_x[i].append(x)
                    j = alive[x]
                    merges[max(i, j)] = (b, min(i, j))
                    if i < j:
                        alive[x] = i
                    continue
                ev_t[i].append(b)
                ev_x[i].append(x)
                z = window.wrap(x + c.y)
                land(i, z, b)
                continue
            ev_t[i].append(b)
            ev_x[i].append(x)
            if x in alive:
                j = alive[x]
                merges[max(i, j)] = (b, min(i, j))
                alive[x] = min(i, j)
            else:
                alive[x] = i
                heapq.heappush(heap, (clock(x).next_after(b), x))
            continue
        t, x = heapq.heappop(heap)
        if x not in alive or clocks[x].time != t:
            continue
        jump(x, t)
    tails = {}
    for x, i in alive.items():
        tails[i] = clocks[x].time
    events = tuple(
        (np.asarray(t, dtype=float), np.asarray(x, dtype=np.int64)) for t, x in zip(ev_t, ev_x)
    )
    return CoalescingSystem(
        window, "continuous", law, origins, events, merges, int(seed), frozenset(frozen), tails
    )


# ---------------------------------------------------------------------------
# path views


def _dedupe_last(ts, xs):
    """Keep the last value at each repeated time (right-continuity)."""
    keep = np.ones(ts.size, dtype=bool)
    keep[:-1] = ts[1:] != ts[:-1]
    return ts[keep], xs[keep]


def _dedupe_first(ts, xs):
    keep = np.ones(ts.size, dtype=bool)
    keep[1:] = ts[1:] != ts[:-1]
    return ts[keep], xs[keep]


def paths_of(system: CoalescingSystem, view="interpolated") -> list:
    """Step (right-continuous) or interpolated path of every walker.

    Discrete time: both views have breakpoints at the integer-time positions.
    Continuous time: the interpolated path is constant from the birth to the
    first jump point, then linear between consecutive jump points (the
    position just before each jump), so it matches the step path's left limits.
    """
    out = []
    for i in range(system.n_walkers):
        ts, xs, last = system.trajectory(i)
        xs = xs.astype(float)
        if view == "step" or system.time_kind == "discrete":
            st, sx = _dedupe_last(ts, xs)
            out.append(Path(st, sx, "step" if view == "step" else "interpolated"))
            continue
        # continuous-time jump points: (birth, x0), (t_k, x_{k-1}) ..., then the pending ring
        jt = ts.copy()
        jx = np.concatenate([xs[:1], xs[:-1]])
        if last in system.tails:
            jt = np.append(jt, system.tails[last])
            jx = np.append(jx, xs[-1])
        jt, jx = _dedupe_first(jt, jx)
        out.append(Path(jt, jx, "interpolated"))
    return out


@dataclass(frozen=True, eq=False)
class ScaledPathSet:
    delta: float
    sigma: float
    paths: tuple
    kind: str

    def __len__(self):
        return len(self.paths)

    def __iter__(self):
        return iter(self.paths)


def rescale(system: CoalescingSystem, delta, view="interpolated") -> ScaledPathSet:
    """Diffusive scaling: lattice (t, x) -> (delta^2 t, delta x / sigma)."""
    if not 0 < delta <= 1:
        raise GuardError("delta must lie in (0, 1]")
    sigma = system.law.sigma
    paths = tuple(p.scaled(delta * delta, delta / sigma) for p in paths_of(system, view))
    return ScaledPathSet(float(delta), sigma, paths, view)


def rescale_paths(paths: Sequence[Path], delta, sigma) -> ScaledPathSet:
    kind = paths[0].kind if paths else "interpolated"
    return ScaledPathSet(float(delta), float(sigma), tuple(p.scaled(delta * delta, delta / sigma) for p in paths), kind)


# ---------------------------------------------------------------------------
# occupancy of the system started from every site


def density_guard(law, t, width, time_kind="discrete"):
    """Width must be >= 10 sigma sqrt(t); in discrete time a width of at least
    4 t max|Y| + 1 also suffices since the torus then reproduces Z exactly."""
    law = as_law(law)
    if width >= 10.0 * law.sigma * math.sqrt(t):
        return
    if time_kind == "discrete" and width >= 4 * int(t) * law.max_abs + 1:
        return
    raise GuardError(
        f"torus width {width} is below 10 sigma sqrt(t) = {10.0 * law.sigma * math.sqrt(t):.1f}"
    )


def occupancy_trials(law, times, width, trials, seed, time_kind="discrete",
                     query_sites=(), key=(), first_trial=0):
    """Per-trial |xi_t| / width at each requested time, plus site indicators.

    Trial k uses stream(seed, *key, k). Returns (fractions (n, len(times)),
    indicators (n, len(times), len(query_sites))).
    """
    law = as_law(law)
    if time_kind == "continuous":
        law.require(continuous=True)
    times = list(times)
    qsites = np.asarray(query_sites, dtype=np.int64) % width
    nt, ns = len(times), qsites.size
    qt = np.repeat(np.asarray(times, dtype=float), ns)
    qs = np.tile(qsites, nt)
    order = np.argsort(qt, kind="stable")
    init = np.arange(width, dtype=np.int64)
    frac = np.empty((trials, nt))
    ind = np.empty((trials, nt, ns), dtype=bool)
    for k in range(trials):
        rng = stream(seed, *key, first_trial + k)
        if time_kind == "discrete":
            steps = int(max(times)) if times else 0
            sizes, ans = K.occupancy_discrete(
                rng, init, width, steps, law.offsets_array, law.cdf,
                qt[order].astype(np.int64), qs[order])
            frac[k] = sizes[np.asarray(times, dtype=np.int64)] / width
        else:
            tq = np.asarray(times, dtype=float)
            allt = np.concatenate([tq, qt[order]])
            alls = np.concatenate([np.zeros(nt, np.int64), qs[order]])
            o2 = np.argsort(allt, kind="stable")
            sizes, ans_all = K.occupancy_continuous(rng, init, width, law.offsets_array, law.cdf, allt[o2], alls[o2])
            back = np.empty_like(o2)
            back[o2] = np.arange(o2.size)
            frac[k] = sizes[back[:nt]] / width
            ans = ans_all[back[nt:]]
        a = np.empty(qt.size, dtype=bool)
        a[order] = ans
        ind[k] = a.reshape(nt, ns)
    return frac, ind


def density(law, t, torus_width, trials, seed, time_kind="discrete"):
    """Estimate p_t = P(0 in xi_t) from the fraction of occupied torus sites."""
    law = as_law(law).require()
    if t == 0:
        return 1.0, 0.0
    density_guard(law, t, torus_width, time_kind)
    frac, _ = occupancy_trials(law, [t], torus_width, trials, seed, time_kind)
    x = frac[:, 0]
    se = float(x.std(ddof=1) / math.sqrt(trials)) if trials > 1 else float("nan")
    return math.fsum(x) / trials, se


@dataclass(frozen=True)
class ExactOccupancy:
    width: int
    steps: int
    single: tuple  # P(x in xi), Fractions
    pair: tuple  # pair[x][y] = P(x, y in xi)

    def covariance(self, x, y):
        return self.pair[x][y] - self.single[x] * self.single[y]


def enumerate_exact(law, torus_width, steps, budget=10 ** 8, chunk=1 << 18) -> ExactOccupancy:
    """Exact occupancy laws of xi_steps on Z/width started from every site.

    Sums over every assignment of increments to (site, round) with its exact
    rational weight. Assignments are grouped by how often each offset occurs,
    so only one rational weight per group is formed.
    """
    law = as_law(law)
    w = int(torus_width)
    if w < 1 or w > 60:
        raise GuardError("enumeration supports widths 1..60")
    s = len(law.offsets)
    nvar = w * steps
    total = s ** nvar
    if total > budget:
        raise BudgetError(total, budget)
    if steps == 0:
        one = Fraction(1)
        return ExactOccupancy(w, 0, (one,) * w, tuple((one,) * w for _ in range(w)))
    offs = np.asarray(law.offsets, dtype=np.int64)
    base = nvar + 1
    groups = {}  # count-vector key -> (single counts, pair counts)
    pair_idx = [(x, y) for x in range(w) for y in range(w)]
    full = (1 << w) - 1
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total), dtype=np.int64)
        digits = np.empty((idx.size, nvar), dtype=np.int64)
        rem = idx.copy()
        for v in range(nvar):
            digits[:, v] = rem % s
            rem //= s
        occ = np.full(idx.size, full, dtype=np.int64)
        for r in range(steps):
            new = np.zeros(idx.size, dtype=np.int64)
            for x in range(w):
                dest = (x + offs[digits[:, r * w + x]]) % w
                new |= ((occ >> x) & 1) << dest
            occ = new
        counts = np.zeros(idx.size, dtype=np.int64)
        for k in range(s):
            counts += (digits == k).sum(axis=1) * base ** k
        keys, inv = np.unique(counts, return_inverse=True)
        bits = ((occ[:, None] >> np.arange(w)) & 1).astype(np.int64)
        for g, key in enumerate(keys):
            sel = inv == g
            b = bits[sel]
            single = b.sum(axis=0)
            pair = b.T @ b
            if key in groups:
                s0, p0 = groups[key]
                groups[key] = (s0 + single, p0 + pair)
            else:
                groups[key] = (single, pair)
    single = [Fraction(0)] * w
    pair = [[Fraction(0)] * w for _ in range(w)]
    for key, (sc, pc) in groups.items():
        weight = Fraction(1)
        kk = int(key)
        for k in range(s):
            c = kk % base
            kk //= base
            weight *= law.exact[k] ** c
        for x in range(w):
            single[x] += weight * int(sc[x])
        for x, y in pair_idx:
            pair[x][y] += weight * int(pc[x, y])
    return ExactOccupancy(w, steps, tuple(single), tuple(tuple(r) for r in pair))


# ---------------------------------------------------------------------------
# event-log text format

_MAGIC = "# coalweb event-log 1"


def dump_system(system: CoalescingSystem) -> str:
    w = system.window
    lines = [
        _MAGIC,
        f"window {w.x_lo} {w.x_hi} {float(w.t_lo)!r} {float(w.t_hi)!r} {w.boundary} {w.buffer}",
        f"law {system.law.text()}",
        f"seed {system.seed}",
        f"time_kind {system.time_kind}",
        f"origins {system.n_walkers}",
    ]
    for i, (x, b, imm) in enumerate(system.origins):
        lines.append(f"{i} {x} {float(b)!r} {int(imm)}")
    lines.append("events")
    for i, (ts, xs) in enumerate(system.events):
        for t, x in zip(ts.tolist(), xs.tolist()):
            lines.append(f"{i} {t!r} {x}")
    lines.append("merges")
    for i in sorted(system.merges):
        tau, j = system.merges[i]
        lines.append(f"{i} {float(tau)!r} {j}")
    lines.append("frozen " + " ".join(str(i) for i in sorted(system.frozen)))
    lines.append("tails")
    for i in sorted(system.tails):
        lines.append(f"{i} {float(system.tails[i])!r}")
    return "\n".join(lines) + "\n"


def load_system(text: str) -> CoalescingSystem:
    lines = text.splitlines()
    if not lines or lines[0] != _MAGIC:
        raise ValueError("not a coalweb event log")
    it = iter(lines[1:])
    _, xl, xh, tl, th, bd, buf = next(it).split()
    window = SpaceTimeWindow(int(xl), int(xh), float(tl), float(th), bd, int(buf))
    law = parse_law(next(it).split(" ", 1)[1])
    seed = int(next(it).split()[1])
    kind = next(it).split()[1]
    n = int(next(it).split()[1])
    discrete = kind == "discrete"
    origins = []
    for _ in range(n):
        _, x, b, imm = next(it).split()
        b = float(b)
        origins.append((int(x), int(b) if discrete else b, bool(int(imm))))
    assert next(it) == "events"
    ev_t = [[] for _ in range(n)]
    ev_x = [[] for _ in range(n)]
    line = next(it)
    while line != "merges":
        i, t, x = line.split()
        ev_t[int(i)].append(float(t))
        ev_x[int(i)].append(int(x))
        line = next(it)
    merges = {}
    line = next(it)
    while not line.startswith("frozen"):
        i, tau, j = line.split()
        tau = float(tau)
        merges[int(i)] = (int(tau) if discrete else tau, int(j))
        line = next(it)
    frozen = frozenset(int(v) for v in line.split()[1:])
    assert next(it) == "tails"
    tails = {}
    for line in it:
        i, t = line.split()
        tails[int(i)] = float(t)
    events = tuple(
        (np.asarray(t, dtype=float), np.asarray(x, dtype=np.int64)) for t, x in zip(ev_t, ev_x)
    )
    return CoalescingSystem(window, kind, law, tuple(origins), events, merges, seed, frozen, tails)


def same_system(a: CoalescingSystem, b: CoalescingSystem) -> bool:
    return (
        a.window == b.window
        and a.time_kind == b.time_kind
        and a.law.text() == b.law.text()
        and a.seed == b.seed
        and a.origins == b.origins
        and a.merges == b.merges
        and a.frozen == b.frozen
        and a.tails == b.tails
        and len(a.events) == len(b.events)
        and all(np.array_equal(x[0], y[0]) and np.array_equal(x[1], y[1]) for x, y in zip(a.events, b.events))
    )
