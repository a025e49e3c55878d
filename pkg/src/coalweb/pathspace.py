"""Compactified space-time, distances between paths and path sets, counting functionals.

Points (x, t) of the extended plane are mapped to (tanh(x)/(1+|t|), tanh(t));
paths are compared through the sup distance of their images.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .paths import Path

DEFAULT_GRID = 10_000


class CompactPoint(NamedTuple):
    phi: float
    psi: float


def _phi(x, t):
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    return np.tanh(x) / (1.0 + np.abs(t))


def compactify(x, t) -> CompactPoint:
    return CompactPoint(float(_phi(x, t)), float(np.tanh(float(t))))


def rho(p1, p2) -> float:
    """Distance between extended space-time points p = (x, t)."""
    (x1, t1), (x2, t2) = p1, p2
    a = abs(float(_phi(x1, t1)) - float(_phi(x2, t2)))
    b = abs(math.tanh(t1) - math.tanh(t2))
    return max(a, b)


def _eval_times(p1: Path, p2: Path, grid):
    psi = np.linspace(-1.0, 1.0, grid + 2)[1:-1]
    with np.errstate(over="ignore"):
        g = np.arctanh(psi)
    pts = np.concatenate([p1.times, p2.times, g, [0.0]])
    return np.unique(pts[np.isfinite(pts)])


def path_distance(p1: Path, p2: Path, grid=DEFAULT_GRID, with_bound=False):
    """Sup over t of |Phi(f1(t), t) - Phi(f2(t), t)|, joined with |tanh t1 - tanh t2|.

    Each path is extended below its start by its first value. The sup is taken
    over both paths' breakpoints (both one-sided values for step paths), t = 0
    and a grid uniform in tanh(t). Between evaluation points where both paths
    are constant the difference is monotone in |t| and the sup is exact;
    elsewhere the error is at most L * gap / 2, with L a Lipschitz bound of the
    difference on that gap. With with_bound=True returns (value, bound).
    """
    ts = _eval_times(p1, p2, grid)
    f1, f2 = p1(ts), p2(ts)
    h = np.abs(np.tanh(f1) - np.tanh(f2)) / (1.0 + np.abs(ts))
    best = float(h.max())
    for p, q in ((p1, p2), (p2, p1)):
        if p.kind == "step":
            bt = p.times
            hl = np.abs(np.tanh(p.left_limit(bt)) - np.tanh(q.left_limit(bt))) / (1.0 + np.abs(bt))
            best = max(best, float(hl.max()))
    psi = abs(math.tanh(p1.t0) - math.tanh(p2.t0))
    value = max(best, psi)
    if not with_bound:
        return value
    # Lipschitz bound per evaluation gap
    a, b = ts[:-1], ts[1:]
    mid = 0.5 * (a + b)
    s1 = _slope_at(p1, mid)
    s2 = _slope_at(p2, mid)
    tmin = np.where((a < 0) & (b > 0), 0.0, np.minimum(np.abs(a), np.abs(b)))
    lip = (np.abs(s1) + np.abs(s2)) / (1.0 + tmin) + 2.0 / (1.0 + tmin) ** 2
    moving = (s1 != 0) | (s2 != 0)
    bound = float(np.max(np.where(moving, lip * (b - a) / 2.0, 0.0))) if a.size else 0.0
    return value, bound


def _slope_at(p: Path, t):
    if p.kind == "step" or len(p) == 1:
        return np.zeros_like(t)
    i = np.searchsorted(p.times, t, side="right") - 1
    inside = (i >= 0) & (i < len(p) - 1)
    s = p.slopes()
    out = np.zeros_like(t)
    out[inside] = s[i[inside]]
    return out


def _check_nonempty(*sets):
    for k in sets:
        if len(k) == 0:
            raise ValueError("Hausdorff distance needs nonempty sets")


def distance_matrix(K1: Sequence[Path], K2: Sequence[Path], grid=DEFAULT_GRID):
    D = np.empty((len(K1), len(K2)))
    B = np.empty_like(D)
    for i, p in enumerate(K1):
        for j, q in enumerate(K2):
            D[i, j], B[i, j] = path_distance(p, q, grid, with_bound=True)
    return D, B


def directed(D):
    """sup over rows of the inf over columns."""
    return float(D.min(axis=1).max())


def hausdorff(K1: Sequence[Path], K2: Sequence[Path], grid=DEFAULT_GRID, with_bound=False):
    _check_nonempty(K1, K2)
    K1, K2 = list(K1), list(K2)
    D, B = distance_matrix(K1, K2, grid)
    value = max(directed(D), directed(D.T))
    if with_bound:
        return value, float(B.max())
    return value


def pointset_distance(A1: Iterable, A2: Iterable) -> float:
    """Hausdorff distance under rho between finite sets of (x, t) points."""
    A1, A2 = np.asarray(list(A1), dtype=float), np.asarray(list(A2), dtype=float)
    _check_nonempty(A1, A2)
    P1 = np.stack([_phi(A1[:, 0], A1[:, 1]), np.tanh(A1[:, 1])], axis=1)
    P2 = np.stack([_phi(A2[:, 0], A2[:, 1]), np.tanh(A2[:, 1])], axis=1)
    D = np.max(np.abs(P1[:, None, :] - P2[None, :, :]), axis=2)
    return max(directed(D), directed(D.T))


# ---------------------------------------------------------------------------
# counting functionals


@dataclass(frozen=True)
class CountingQuery:
    t0: float
    t: float
    a: float
    b: float

    def __post_init__(self):
        if not self.t > 0:
            raise ValueError("counting window needs t > 0")
        if self.a > self.b:
            raise ValueError("counting interval needs a <= b")


class CountResult(NamedTuple):
    N_set: frozenset
    eta: int
    eta_hat: int


def count_paths(K: Sequence[Path], q: CountingQuery) -> CountResult:
    """Positions at t0+t of paths through [a,b] x {t0}, and the number of
    distinct positions in (a, b) at t0+t among paths started by t0."""
    end = q.t0 + q.t
    N = set()
    hat = set()
    for p in K:
        if p.t0 > q.t0:
            continue
        x0 = float(p(q.t0))
        y = float(p(end))
        if q.a <= x0 <= q.b:
            N.add(y)
        if q.a < y < q.b:
            hat.add(y)
    return CountResult(frozenset(N), len(N), len(hat))


# ---------------------------------------------------------------------------
# tightness event


@dataclass(frozen=True)
class TightnessProbe:
    x0: float
    t0: float
    u: float
    t: float
    widen: int = 17
    heighten: int = 2

    def __post_init__(self):
        if not (self.u > 0 and self.t > 0):
            raise ValueError("probe needs u > 0 and t > 0")
        if self.widen != 17 or self.heighten != 2:
            raise ValueError("probe proportions are fixed at 17 and 2")


def _segments(p: Path):
    """(s0, s1, x0, x1) pieces covering [t0, inf); last piece is constant."""
    t, v = p.times, p.values
    n = len(t)
    if p.kind == "step":
        s0 = t
        s1 = np.append(t[1:], np.inf)
        return s0, s1, v, v.copy()
    s0 = np.append(t, t[-1])[:n]
    s1 = np.append(t[1:], np.inf)
    x0 = v
    x1 = np.append(v[1:], v[-1])
    return s0, s1, x0, x1


def _first_time_in(s0, s1, x0, x1, lo_t, hi_t, lo_x, hi_x):
    """Earliest s in [lo_t, hi_t] with x(s) in [lo_x, hi_x] over linear pieces."""
    best = math.inf
    for a, b, xa, xb in zip(s0, s1, x0, x1):
        a2, b2 = max(a, lo_t), min(b, hi_t)
        if a2 > b2:
            continue
        if xa == xb or not math.isfinite(b):
            xa2 = xb2 = xa
        else:
            xa2 = xa + (xb - xa) * (a2 - a) / (b - a)
            xb2 = xa + (xb - xa) * (b2 - a) / (b - a)
        if lo_x <= xa2 <= hi_x:
            return a2
        if xa2 == xb2:
            continue
        target = lo_x if xa2 < lo_x else hi_x
        if min(xa2, xb2) <= target <= max(xa2, xb2):
            s = a2 + (b2 - a2) * (target - xa2) / (xb2 - xa2)
            best = min(best, s)
            return best
    return best


def detect_tightness_event(K: Sequence[Path], probe: TightnessProbe):
    """Does a path touch R(x0,t0;u,t) and later the side x0 +- 17u of
    R(x0,t0;17u,2t)? Returns (occurred, 'plus'|'minus'|'both'|'none')."""
    x0, t0, u, t = probe.x0, probe.t0, probe.u, probe.t
    W = probe.widen * u
    end = t0 + probe.heighten * t
    plus = minus = False
    for p in K:
        seg = _segments(p)
        s = _first_time_in(*seg, max(t0, p.t0), t0 + t, x0 - u, x0 + u)
        if not math.isfinite(s):
            continue
        if not plus and math.isfinite(_first_time_in(*seg, s, end, x0 + W, math.inf)):
            plus = True
        if not minus and math.isfinite(_first_time_in(*seg, s, end, -math.inf, x0 - W)):
            minus = True
        if plus and minus:
            break
    side = "both" if plus and minus else "plus" if plus else "minus" if minus else "none"
    return plus or minus, side


# ---------------------------------------------------------------------------
# text formats


def dump_paths(paths: Sequence[Path]) -> str:
    kinds = {p.kind for p in paths}
    if len(kinds) > 1:
        raise ValueError("a path set has a single kind")
    kind = kinds.pop() if kinds else "step"
    out = ["# coalweb path-set 1", f"kind {kind}", f"paths {len(paths)}"]
    for i, p in enumerate(paths):
        for t, x in zip(p.times.tolist(), p.values.tolist()):
            out.append(f"{i} {t!r} {x!r}")
    return "\n".join(out) + "\n"


def load_paths(text: str) -> list:
    lines = text.splitlines()
    if not lines or lines[0] != "# coalweb path-set 1":
        raise ValueError("not a coalweb path set")
    kind = lines[1].split()[1]
    n = int(lines[2].split()[1])
    ts = [[] for _ in range(n)]
    xs = [[] for _ in range(n)]
    for line in lines[3:]:
        i, t, x = line.split()
        ts[int(i)].append(float(t))
        xs[int(i)].append(float(x))
    return [Path(t, x, kind) for t, x in zip(ts, xs)]


def distance_rows(rows) -> str:
    """CSV of (query_id, value, error_bound) rows."""
    buf = io.StringIO()
    buf.write("query_id,value,error_bound\n")
    for qid, v, e in rows:
        buf.write(f"{qid},{v:.17g},{e:.17g}\n")
    return buf.getvalue()
