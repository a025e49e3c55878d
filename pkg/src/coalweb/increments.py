"""Increment laws on the integer lattice and their ladder/overshoot oracles."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
import warnings
from typing import Mapping

import numpy as np

from .errors import GuardError, LawError

MAX_OFFSET = 20
PERIOD_HORIZON = 40
SUM_TOL = 1e-12

LAZY_UNIFORM = "-1:1/3,0:1/3,1:1/3"
UNIFORM_2 = "-2:1/4,-1:1/4,1:1/4,2:1/4"


@dataclass(frozen=True)
class IncrementDistribution:
    offsets: tuple
    probs: tuple
    exact: tuple = field(repr=False)
    mean: float
    variance: float
    abs_moments: tuple  # ((1, E|Y|), (2, E|Y|^2), (3, ...), (5, ...))
    zero_allowed: bool
    period: int
    irreducible: bool

    @property
    def support(self):
        return tuple(zip(self.offsets, self.probs))

    @property
    def sigma(self):
        return math.sqrt(self.variance)

    @property
    def mean_zero(self):
        return abs(self.mean) < SUM_TOL

    @property
    def max_up(self):
        return max(max(self.offsets), 0)

    @property
    def max_down(self):
        return max(-min(self.offsets), 0)

    @property
    def max_abs(self):
        return max(abs(o) for o in self.offsets)

    @cached_property
    def offsets_array(self):
        return np.asarray(self.offsets, dtype=np.int64)

    @cached_property
    def cdf(self):
        c = np.cumsum(np.asarray(self.probs, dtype=float))
        c[-1] = 1.0
        return c

    def abs_moment(self, r):
        return dict(self.abs_moments)[r]

    def sample(self, rng, size=None):
        idx = np.searchsorted(self.cdf, rng.random(size), side="right")
        return self.offsets_array[idx]

    def text(self):
        return format_law(self)

    def require(self, *, mean_zero=True, aperiodic=True, irreducible=True, continuous=False):
        """Raise LawError unless the law has the requested properties."""
        if mean_zero and not self.mean_zero:
            raise LawError(f"law has nonzero mean {self.mean}")
        if aperiodic and self.period != 1:
            raise LawError(f"law has period {self.period}")
        if irreducible and not self.irreducible:
            raise LawError("law is not irreducible on Z")
        if continuous and self.zero_allowed:
            raise LawError("continuous-time walks need P(Y=0) = 0")
        return self

    def __str__(self):
        return format_law(self)


def _as_fraction(p):
    if isinstance(p, Fraction):
        return p
    if isinstance(p, str):
        return Fraction(p.strip())
    if isinstance(p, (int, np.integer)):
        return Fraction(int(p))
    return Fraction(float(p))


def _return_period(offsets):
    """gcd of the n <= PERIOD_HORIZON with P(S_n = 0) > 0 (0 if none)."""
    lo, hi = min(offsets), max(offsets)
    reach = {0}
    g = 0
    for n in range(1, PERIOD_HORIZON + 1):
        reach = {x + o for x in reach for o in offsets}
        # positions too far away can never come back within the horizon
        left = PERIOD_HORIZON - n
        reach = {x for x in reach if -hi * left <= x <= -lo * left}
        if 0 in reach:
            g = math.gcd(g, n)
    return g


def make_increment(support) -> IncrementDistribution:
    """Build and validate a law from (offset, prob) pairs or an {offset: prob} mapping.

    Probabilities may be floats, Fractions or strings such as "1/3" or "0.25";
    string and Fraction inputs are kept exactly for the enumeration oracles.
    """
    items = list(support.items()) if isinstance(support, Mapping) else list(support)
    if not items:
        raise GuardError("empty support")
    merged = {}
    for off, p in items:
        off = int(off)
        q = _as_fraction(p)
        if q < 0 or q > 1:
            raise GuardError(f"probability {p} outside [0, 1]")
        if off in merged:
            raise GuardError(f"offset {off} listed twice")
        merged[off] = q
    total = sum(merged.values())
    if abs(float(total) - 1.0) > SUM_TOL:
        raise GuardError(f"probabilities sum to {float(total)!r}, not 1")
    merged = {o: q / total for o, q in sorted(merged.items()) if q > 0}
    if len(merged) < 2:
        raise GuardError("single-point support gives a degenerate walk")
    if max(abs(o) for o in merged) > MAX_OFFSET:
        raise GuardError(f"support must lie in [-{MAX_OFFSET}, {MAX_OFFSET}]")

    offsets = tuple(merged)
    exact = tuple(merged.values())
    probs = tuple(float(q) for q in exact)
    mean = float(sum(o * q for o, q in merged.items()))
    second = float(sum(o * o * q for o, q in merged.items()))
    variance = float(sum(o * o * q for o, q in merged.items()) - sum(o * q for o, q in merged.items()) ** 2)
    abs_moments = tuple((r, float(sum(abs(o) ** r * q for o, q in merged.items()))) for r in (1, 2, 3, 5))
    assert abs(variance - (second - mean * mean)) < 1e-12

    g = _return_period(offsets)
    if g == 0:
        # no return to 0 (drifting law): fall back to the span of the steps
        g = 0
        for o in offsets:
            g = math.gcd(g, o - offsets[0])
        g = max(g, 1)
    span = 0
    for o in offsets:
        span = math.gcd(span, o)
    irreducible = span == 1 and offsets[0] < 0 < offsets[-1]

    return IncrementDistribution(
        offsets=offsets,
        probs=probs,
        exact=exact,
        mean=mean,
        variance=variance,
        abs_moments=abs_moments,
        zero_allowed=0 in merged,
        period=g,
        irreducible=irreducible,
    )


def parse_law(text: str) -> IncrementDistribution:
    """Parse "offset:prob,offset:prob,..." (probabilities decimal or a/b)."""
    pairs = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        try:
            off, p = chunk.split(":")
            pairs.append((int(off), Fraction(p.strip())))
        except (ValueError, ZeroDivisionError) as exc:
            raise GuardError(f"malformed law entry {chunk!r}") from exc
    return make_increment(pairs)


def format_law(law: IncrementDistribution) -> str:
    return ",".join(f"{o}:{q}" for o, q in zip(law.offsets, law.exact))


def as_law(law) -> IncrementDistribution:
    if isinstance(law, IncrementDistribution):
        return law
    if isinstance(law, str):
        return parse_law(law)
    return make_increment(law)


# ---------------------------------------------------------------------------
# ladder variable Z = value of the walk at its first strict ascent above 0


@dataclass(frozen=True)
class LadderVariable:
    pmf: tuple  # pmf[k-1] = P(Z = k), k = 1..max_up
    tail_mass: float
    method: str = "dp"

    @property
    def mean_Z(self):
        return float(sum((k + 1) * p for k, p in enumerate(self.pmf)))

    def as_dict(self):
        return {k + 1: p for k, p in enumerate(self.pmf)}

    def survival(self, k):
        """P(Z >= k) from the truncated pmf."""
        return float(sum(self.pmf[max(k - 1, 0):]))


def ladder_distribution(law, horizon=10_000, band=1_000, tail_bound=None) -> LadderVariable:
    """Dynamic programme over walk positions in [-band, 0] for up to `horizon` steps.

    Mass that first lands above 0 is booked to the ladder pmf; mass still in the
    band or lost below it is the tail. The tail decays only like 1/sqrt(horizon)
    (the ascending ladder epoch has infinite mean), so for a tight ladder use
    `ladder_exact`.
    """
    law = as_law(law)
    law.require(irreducible=False)
    up = law.max_up
    pmf = np.zeros(up)
    if horizon <= 0:
        return LadderVariable(pmf=(), tail_mass=1.0, method="dp")
    lo, hi = min(law.offsets), max(law.offsets)
    kernel = np.zeros(hi - lo + 1)
    for o, p in zip(law.offsets, law.probs):
        kernel[o - lo] = p
    mass = np.zeros(band + 1)  # index i <-> position i - band
    mass[band] = 1.0
    for _ in range(horizon):
        new = np.convolve(mass, kernel)  # index j <-> position j - band + lo
        zero = band - lo
        if hi > 0:
            pmf += new[zero + 1: zero + 1 + up]
        start = -lo  # position -band
        mass = new[start: zero + 1].copy()
        if mass.sum() < 1e-300:
            break
    tail = max(0.0, 1.0 - pmf.sum())
    if tail_bound is not None and tail > tail_bound:
        warnings.warn(f"ladder tail mass {tail:.3g} above requested {tail_bound:g}; raise the horizon")
    return LadderVariable(pmf=tuple(float(p) for p in pmf), tail_mass=float(tail), method="dp")


def _polydiv_exact(num, den):
    """Exact polynomial division, coefficients highest degree first."""
    num = list(num)
    out = []
    while len(num) >= len(den):
        c = num[0] / den[0]
        out.append(c)
        for i, d in enumerate(den):
            num[i] -= c * d
        num.pop(0)
    return out, num


def ladder_exact(law) -> LadderVariable:
    """Ladder pmf from the Wiener-Hopf factorisation of 1 - E[z^Y].

    For an aperiodic mean-zero law, z^{m-}(1 - phi(z)) has a double root at 1;
    the strict ascending ladder generating function satisfies
    1 - E[z^Z] = prod (1 - z/r) over r = 1 and the roots outside the unit disc.
    """
    law = as_law(law).require(irreducible=False)
    up, down = law.max_up, law.max_down
    if up == 1:
        return LadderVariable(pmf=(1.0,), tail_mass=0.0, method="wiener-hopf")
    deg = up + down
    coef = [Fraction(0)] * (deg + 1)  # lowest degree first
    coef[down] += 1
    for o, q in zip(law.offsets, law.exact):
        coef[o + down] -= q
    hi_first = coef[::-1]
    quot, rem = _polydiv_exact(hi_first, [Fraction(1), Fraction(-2), Fraction(1)])
    if any(r != 0 for r in rem):
        raise LawError("law is not mean-zero")
    while quot and quot[0] == 0:
        quot.pop(0)
    roots = np.roots(np.array([float(c) for c in quot])) if len(quot) > 1 else np.array([])
    outside = roots[np.abs(roots) > 1.0]
    if len(outside) != up - 1 or np.any(np.abs(np.abs(roots) - 1.0) < 1e-9):
        raise LawError("ladder factorisation failed (periodic or ill-conditioned law)")
    poly = np.array([1.0 + 0j])  # lowest degree first
    for r in np.concatenate([[1.0], outside]):
        poly = np.convolve(poly, np.array([1.0, -1.0 / r]))
    pmf = -poly[1:].real
    resid = abs(1.0 - pmf.sum())
    if np.any(pmf < -1e-12):
        raise LawError("ladder factorisation produced negative mass")
    pmf = np.clip(pmf, 0.0, None)
    return LadderVariable(pmf=tuple(float(p) for p in pmf), tail_mass=float(resid), method="wiener-hopf")


def overshoot_limit(law, ladder: LadderVariable | None = None, max_tail=1e-6) -> dict:
    """Limit law of the landing site in [0, inf) for a walk started far below 0.

    P(overshoot = k) = P(Z >= k+1) / E[Z], k = 0 .. max_up - 1.
    """
    law = as_law(law)
    if ladder is None:
        ladder = ladder_exact(law)
    if ladder.tail_mass > max_tail:
        raise GuardError(f"ladder tail mass {ladder.tail_mass:.3g} exceeds {max_tail:g}")
    ez = ladder.mean_Z
    if not np.isfinite(ez) or ez <= 0:
        raise GuardError("ladder mean is not finite and positive")
    return {k: ladder.survival(k + 1) / ez for k in range(len(ladder.pmf))}


def overshoot_from(law, x0: int, ladder: LadderVariable | None = None) -> dict:
    """Exact landing law in [0, inf) for a walk started at -x0 (x0 >= 1).

    Successive strict maxima form a renewal sequence with steps Z, so the first
    record at or above 0 is computed by a renewal recursion over [-x0, -1].
    """
    law = as_law(law)
    if x0 < 1:
        raise GuardError("start must be strictly below 0")
    if ladder is None:
        ladder = ladder_exact(law)
    pz = np.asarray(ladder.pmf)
    up = len(pz)
    u = np.zeros(x0)  # u[i] = P(some record equals -x0 + i)
    u[0] = 1.0
    for i in range(1, x0):
        lo = max(0, i - up)
        u[i] = sum(u[j] * pz[i - j - 1] for j in range(lo, i))
    out = {k: 0.0 for k in range(up)}
    for i in range(x0):
        pos = -x0 + i
        for k in range(1, up + 1):
            land = pos + k
            if land >= 0:
                out[land] += u[i] * pz[k - 1]
    return out


def overshoot_moment_sum(law, r, ladder: LadderVariable | None = None) -> float:
    """sum_k k^r P(Z >= k+1): the moment bound for the overshoot (no constant asserted)."""
    if ladder is None:
        ladder = ladder_exact(law)
    return float(sum(k ** r * ladder.survival(k + 1) for k in range(len(ladder.pmf))))


def total_variation(p: Mapping, q: Mapping) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


