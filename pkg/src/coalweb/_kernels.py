"""Compiled inner loops for the large Monte Carlo runs.

Each kernel takes a numpy Generator (numba reproduces its stream exactly) or a
64-bit key for the counter-based Gaussian source, so results are functions of
the trial seed alone.
"""
import math

import numpy as np
from numba import njit

# ---------------------------------------------------------------------------
# increments


@njit(cache=True, inline="always")
def _draw(rng, offsets, cdf):
    u = rng.random()
    k = 0
    while cdf[k] <= u:
        k += 1
    return offsets[k]


@njit(cache=True)
def draw_many(rng, offsets, cdf, n):
    out = np.empty(n, np.int64)
    for i in range(n):
        out[i] = _draw(rng, offsets, cdf)
    return out


# ---------------------------------------------------------------------------
# occupancy of coalescing walks on a torus


@njit(cache=True)
def occupancy_discrete(rng, init, width, steps, offsets, cdf, qt, qs):
    """Discrete-time coalescing walks on Z/width from the sites in `init`.

    Returns |xi_t| for t = 0..steps and, for each query (qt[i], qs[i]) with qt
    sorted, whether site qs[i] is occupied at time qt[i].
    """
    stamp = np.full(width, -1, np.int64)
    cur = init.copy()
    nxt = np.empty_like(cur)
    n = cur.shape[0]
    for i in range(n):
        stamp[cur[i]] = 0
    sizes = np.zeros(steps + 1, np.int64)
    sizes[0] = n
    ans = np.zeros(qt.shape[0], np.bool_)
    qi = 0
    while qi < qt.shape[0] and qt[qi] == 0:
        ans[qi] = stamp[qs[qi]] == 0
        qi += 1
    for t in range(1, steps + 1):
        m = 0
        for i in range(n):
            s = (cur[i] + _draw(rng, offsets, cdf)) % width
            if stamp[s] != t:
                stamp[s] = t
                nxt[m] = s
                m += 1
        cur, nxt = nxt, cur
        n = m
        sizes[t] = n
        while qi < qt.shape[0] and qt[qi] == t:
            ans[qi] = stamp[qs[qi]] == t
            qi += 1
    return sizes, ans


@njit(cache=True)
def occupancy_continuous(rng, init, width, offsets, cdf, qt, qs):
    """Continuous-time (rate-1 per walker) coalescing walks on Z/width.

    Queries are answered at the sorted times qt; returns (|xi| at each query, answers).
    """
    where = np.full(width, -1, np.int64)
    pos = init.copy()
    n = pos.shape[0]
    for i in range(n):
        where[pos[i]] = i
    nq = qt.shape[0]
    ans = np.zeros(nq, np.bool_)
    sizes = np.zeros(nq, np.int64)
    t = 0.0
    t_next = rng.standard_exponential() / n if n > 0 else np.inf
    qi = 0
    while qi < nq:
        if t_next <= qt[qi]:
            t = t_next
            k = int(rng.random() * n)
            p = pos[k]
            s = (p + _draw(rng, offsets, cdf)) % width
            where[p] = -1
            if where[s] >= 0:
                last = n - 1
                if k != last:
                    pos[k] = pos[last]
                    where[pos[k]] = k
                n -= 1
            else:
                pos[k] = s
                where[s] = k
            t_next = t + rng.standard_exponential() / n if n > 0 else np.inf
        else:
            ans[qi] = where[qs[qi]] >= 0
            sizes[qi] = n
            qi += 1
    return sizes, ans


# ---------------------------------------------------------------------------
# two-walker meeting times and first passage


@njit(cache=True)
def meet_discrete(rng, gap, tmax, offsets, cdf):
    """First n with X_n = X'_n for two independent discrete walks at distance gap; tmax+1 if none."""
    d = gap
    for n in range(1, tmax + 1):
        d += _draw(rng, offsets, cdf) - _draw(rng, offsets, cdf)
        if d == 0:
            return n
    return tmax + 1


@njit(cache=True)
def meet_continuous(rng, gap, tmax, offsets, cdf):
    """Meeting time of two rate-1 continuous walks; inf if beyond tmax."""
    d = gap
    t = 0.0
    while True:
        t += rng.standard_exponential() / 2.0
        if t > tmax:
            return np.inf
        y = _draw(rng, offsets, cdf)
        if rng.random() < 0.5:
            d += y
        else:
            d -= y
        if d == 0:
            return t


@njit(cache=True)
def first_passage(rng, start, cap, offsets, cdf):
    """Landing site of a walk from start < 0 at its first visit to [0, inf); -1 if cap steps pass."""
    x = start
    for _ in range(cap):
        x += _draw(rng, offsets, cdf)
        if x >= 0:
            return x
    return -1


# ---------------------------------------------------------------------------
# counter-based Gaussian source for the Brownian sampler

_GOLD = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TWO53 = 1.0 / 9007199254740992.0


@njit(cache=True, inline="always")
def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def counter_gauss(key, i, k, tag):
    """Standard normal determined by (key, path i, node k, tag)."""
    h = _mix(np.uint64(key) ^ _mix(np.uint64(i) * _GOLD + np.uint64(tag)))
    h = _mix(h ^ _mix(np.uint64(k) + _GOLD))
    h2 = _mix(h + _GOLD)
    u1 = (float(h >> np.uint64(11)) + 1.0) * _TWO53
    u2 = float(h2 >> np.uint64(11)) * _TWO53
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


@njit(cache=True)
def bm_increment(key, i, j, level, sqrt_base):
    """Increment of path i over fine step j at refinement `level`.

    Level 0 steps have variance base_dt; each finer level splits a parent step
    by an exact Brownian-bridge midpoint, so refined paths agree with coarser
    ones at the coarse nodes.
    """
    c = sqrt_base * counter_gauss(key, i, j >> level, 0)
    for lv in range(1, level + 1):
        parent = j >> (level - lv + 1)
        sd = sqrt_base * 2.0 ** (-(lv - 1) / 2.0) / 2.0
        dev = sd * counter_gauss(key, i, parent, lv)
        child = j >> (level - lv)
        if child & 1:
            c = c / 2.0 - dev
        else:
            c = c / 2.0 + dev
    return c


@njit(cache=True)
def bm_family_values(key, x0, start_node, n_nodes, level, sqrt_base):
    """Materialised independent Gaussian grid paths (NaN before each start)."""
    m = x0.shape[0]
    out = np.full((m, n_nodes), np.nan)
    for i in range(m):
        s = start_node[i]
        out[i, s] = x0[i]
        for j in range(s, n_nodes - 1):
            out[i, j + 1] = out[i, j] + bm_increment(key, i, j, level, sqrt_base)
    return out


@njit(cache=True)
def _resolve(lo, hi, u_old, u_new, u_id, u_born, cls, out_rep, out_pos, n_out, k, log, nlog, log_merges):
    """Literal lexicographic merging among units lo..hi-1 at one node.

    A unit is a class as it stood before the node (or a newborn). The pair key
    of two units is (smaller id, larger id), which is the smallest pair of
    member paths; the class with the smaller leader absorbs the other.
    """
    for a in range(lo, hi):
        cls[a] = a
    while True:
        ba = -1
        bb = -1
        k1 = 1 << 62
        k2 = 1 << 62
        for a in range(lo, hi):
            for b in range(a + 1, hi):
                ca = cls[a]
                cb = cls[b]
                if ca == cb:
                    continue
                d_new = u_new[ca] - u_new[cb]
                if u_born[a] or u_born[b]:
                    hit = d_new == 0.0
                else:
                    d_old = u_old[a] - u_old[b]
                    hit = d_new == 0.0 or (d_new > 0.0) != (d_old > 0.0)
                if not hit:
                    continue
                i1 = min(u_id[a], u_id[b])
                i2 = max(u_id[a], u_id[b])
                if i1 < k1 or (i1 == k1 and i2 < k2):
                    k1 = i1
                    k2 = i2
                    ba = a
                    bb = b
        if ba < 0:
            break
        ca = cls[ba]
        cb = cls[bb]
        if u_id[ca] < u_id[cb]:
            star = ca
            other = cb
        else:
            star = cb
            other = ca
        if log_merges:
            log[nlog, 0] = k
            log[nlog, 1] = u_id[other]
            log[nlog, 2] = u_id[star]
            nlog += 1
        for e in range(lo, hi):
            if cls[e] == other:
                cls[e] = star
    for a in range(lo, hi):
        if cls[a] == a:
            out_rep[n_out] = u_id[a]
            out_pos[n_out] = u_new[a]
            n_out += 1
    return n_out, nlog


@njit(cache=True)
def bm_coalesce(key, ids, x0, start_node, n_nodes, level, sqrt_base, log_merges):
    """Crossing-coalescence of Gaussian grid paths, evaluated lazily per class.

    Paths must be sorted by start node; ids[i] is the index of the i-th path
    (it keys the path's increments and breaks ties). Classes are kept in
    spatial order. At each node the classes are cut into intervals wherever
    the running max of new positions is below the running min of the rest;
    merges cannot cross a cut, so the literal pairwise rule is run inside each
    interval (newborns join the interval holding their start value).
    Returns (class reps, class positions at the last node, merge log rows).
    """
    m = x0.shape[0]
    rep = np.empty(m, np.int64)
    pos = np.empty(m, np.float64)
    new = np.empty(m, np.float64)
    cmax = np.empty(m, np.float64)
    cmin = np.empty(m, np.float64)
    # unit buffers (a component's old classes followed by its newborns)
    u_old = np.empty(m, np.float64)
    u_new = np.empty(m, np.float64)
    u_id = np.empty(m, np.int64)
    u_born = np.zeros(m, np.bool_)
    cls = np.empty(m, np.int64)
    o_rep = np.empty(m, np.int64)
    o_pos = np.empty(m, np.float64)
    comp = np.empty(m, np.int64)
    b_comp = np.empty(m, np.int64)
    log = np.empty((m if log_merges else 1, 3), np.float64)
    nlog = 0
    n = 0
    nxt = 0
    for k in range(n_nodes):
        if k > 0:
            for c in range(n):
                new[c] = pos[c] + bm_increment(key, rep[c], k - 1, level, sqrt_base)
        else:
            for c in range(n):
                new[c] = pos[c]
        # interval components of the old classes
        ncomp = 0
        if n > 0:
            cmax[0] = new[0]
            for c in range(1, n):
                cmax[c] = max(cmax[c - 1], new[c])
            cmin[n - 1] = new[n - 1]
            for c in range(n - 2, -1, -1):
                cmin[c] = min(cmin[c + 1], new[c])
            for c in range(n):
                comp[c] = ncomp
                if c == n - 1 or cmax[c] < cmin[c + 1]:
                    ncomp += 1
        b0 = nxt
        while nxt < m and start_node[nxt] == k:
            nxt += 1
        nb = nxt - b0
        trivial = ncomp == n and nb == 0
        if trivial:
            for c in range(n):
                pos[c] = new[c]
            continue
        # newborns: join the component holding their value, or a group of equal newborns
        n_old = ncomp
        for b in range(nb):
            x = x0[b0 + b]
            b_comp[b] = -1
            for c in range(n):
                if new[c] == x:
                    b_comp[b] = comp[c]
                    break
            if b_comp[b] < 0:
                for e in range(b):
                    if b_comp[e] >= n_old and x0[b0 + e] == x:
                        b_comp[b] = b_comp[e]
                        break
            if b_comp[b] < 0:
                b_comp[b] = ncomp
                ncomp += 1
        n_out = 0
        c = 0
        for q in range(ncomp):
            lo = 0
            while c < n and comp[c] == q:
                u_old[lo] = pos[c]
                u_new[lo] = new[c]
                u_id[lo] = rep[c]
                u_born[lo] = False
                lo += 1
                c += 1
            for b in range(nb):
                if b_comp[b] == q:
                    u_old[lo] = np.nan
                    u_new[lo] = x0[b0 + b]
                    u_id[lo] = ids[b0 + b]
                    u_born[lo] = True
                    lo += 1
            if lo == 1:
                o_rep[n_out] = u_id[0]
                o_pos[n_out] = u_new[0]
                n_out += 1
            else:
                n_out, nlog = _resolve(0, lo, u_old, u_new, u_id, u_born, cls, o_rep, o_pos,
                                       n_out, k, log, nlog, log_merges)
        order = np.argsort(o_pos[:n_out], kind="mergesort")
        n = n_out
        for c in range(n):
            rep[c] = o_rep[order[c]]
            pos[c] = o_pos[order[c]]
    return rep[:n].copy(), pos[:n].copy(), log[:nlog].copy()


# ---------------------------------------------------------------------------
# voter interface with heaviside start (1 on x <= 0)


@njit(cache=True)
def interface_continuous(rng, offsets, cdf, half, sample_times):
    """Rate-1 voter model; only sites within max|Y| of [min(l,r), max(l,r)] can change.

    Returns l, r at the sample times, the final word on [l, r], and a
    contamination flag (active band reached the storage edge).
    """
    mstep = 0
    for o in offsets:
        mstep = max(mstep, abs(o))
    w = 2 * half + 1
    s = np.zeros(w, np.int8)
    s[: half + 1] = 1
    l = 1
    r = 0
    ns = sample_times.shape[0]
    ls = np.empty(ns, np.int64)
    rs = np.empty(ns, np.int64)
    t = 0.0
    qi = 0
    bad = False
    while qi < ns:
        lo = min(l, r) - mstep
        hi = max(l, r) + mstep
        if lo - mstep < -half or hi + mstep > half:
            bad = True
            break
        nb = hi - lo + 1
        t_next = t + rng.standard_exponential() / nb
        while qi < ns and sample_times[qi] < t_next:
            ls[qi] = l
            rs[qi] = r
            qi += 1
        if qi == ns:
            break
        t = t_next
        x = lo + int(rng.random() * nb)
        v = s[x + _draw(rng, offsets, cdf) + half]
        if s[x + half] == v:
            continue
        s[x + half] = v
        if v == 0:
            if x < l:
                l = x
            if x == r:
                while s[r + half] == 0:
                    r -= 1
        else:
            if x > r:
                r = x
            if x == l:
                while s[l + half] == 1:
                    l += 1
    word = s[l + half: r + half + 1].copy() if r >= l else np.zeros(0, np.int8)
    return ls, rs, word, bad


@njit(cache=True)
def interface_discrete(rng, offsets, cdf, half, sample_times):
    """Synchronous discrete-time voter model; sample_times sorted integers."""
    mstep = 0
    for o in offsets:
        mstep = max(mstep, abs(o))
    w = 2 * half + 1
    s = np.zeros(w, np.int8)
    s[: half + 1] = 1
    old = s.copy()
    l = 1
    r = 0
    ns = sample_times.shape[0]
    ls = np.empty(ns, np.int64)
    rs = np.empty(ns, np.int64)
    qi = 0
    bad = False
    while qi < ns and sample_times[qi] == 0:
        ls[qi] = l
        rs[qi] = r
        qi += 1
    n = 0
    while qi < ns:
        lo = min(l, r) - mstep
        hi = max(l, r) + mstep
        if lo - mstep < -half or hi + mstep > half:
            bad = True
            break
        old[lo + half - mstep: hi + half + mstep + 1] = s[lo + half - mstep: hi + half + mstep + 1]
        for x in range(lo, hi + 1):
            s[x + half] = old[x + _draw(rng, offsets, cdf) + half]
        l = lo
        while s[l + half] == 1:
            l += 1
        r = hi
        while s[r + half] == 0:
            r -= 1
        n += 1
        while qi < ns and sample_times[qi] == n:
            ls[qi] = l
            rs[qi] = r
            qi += 1
    word = s[l + half: r + half + 1].copy() if r >= l else np.zeros(0, np.int8)
    return ls, rs, word, bad


# ---------------------------------------------------------------------------
# tightness event on the full discrete-time lattice web


@njit(cache=True)
def tightness_lattice(field, band_lo, u, T, wide):
    """A^+/A^- for interpolated lattice paths and the probe centred at (0, 0).

    field[n, x - band_lo] is the increment used at (x, n). The small rectangle
    is [-u, u] x [0, T], the side boundaries are x = +-wide up to time 2T.
    Returns (plus, minus, contaminated).
    """
    nb = field.shape[1]
    flag = np.zeros(nb, np.bool_)
    newf = np.zeros(nb, np.bool_)
    plus = False
    minus = False
    bad = False
    for n in range(2 * T):
        newf[:] = False
        for b in range(nb):
            x = band_lo + b
            f = flag[b]
            if n <= T and abs(x) <= u:
                f = True
            y = field[n, b]
            z = x + y
            if n < T and min(x, z) <= u and max(x, z) >= -u:
                f = True
            if not f:
                continue
            if max(x, z) >= wide:
                plus = True
            if min(x, z) <= -wide:
                minus = True
            zb = z - band_lo
            if zb < 0 or zb >= nb:
                bad = True
                continue
            newf[zb] = True
        flag, newf = newf, flag
        if plus and minus:
            break
    return plus, minus, bad
