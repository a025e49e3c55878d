import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coalweb import _kernels as K
from coalweb.errors import GuardError, LawError
from coalweb.increments import (
    LAZY_UNIFORM, UNIFORM_2, format_law, ladder_distribution, ladder_exact, make_increment, overshoot_from,
    overshoot_limit, overshoot_moment_sum, parse_law, total_variation,
)
from coalweb.rng import stream

GOLDEN = (1 + math.sqrt(5)) / 2


def test_lazy_uniform_moments():
    law = parse_law(LAZY_UNIFORM)
    assert law.mean == 0
    assert law.variance == pytest.approx(2 / 3, abs=1e-12)
    assert law.period == 1
    assert law.irreducible
    assert law.zero_allowed


def test_uniform_2_moments():
    law = parse_law(UNIFORM_2)
    assert law.variance == pytest.approx(2.5, abs=1e-12)
    assert law.period == 1
    assert not law.zero_allowed
    assert law.abs_moment(1) == pytest.approx(1.5)
    assert law.abs_moment(3) == pytest.approx(4.5)


def test_simple_walk_has_period_2():
    law = make_increment([(-1, 0.5), (1, 0.5)])
    assert law.period == 2
    with pytest.raises(LawError):
        law.require()


def test_rejections():
    with pytest.raises(GuardError):
        make_increment([])
    with pytest.raises(GuardError):
        make_increment([(0, 1.0)])
    with pytest.raises(GuardError):
        make_increment([(-1, 0.5), (1, 0.4)])
    with pytest.raises(GuardError):
        make_increment([(-1, 1.5), (1, -0.5)])
    with pytest.raises(GuardError):
        make_increment([(-21, 0.5), (21, 0.5)])
    with pytest.raises(GuardError):
        parse_law("-1:1/2,1")


def test_nonzero_mean_is_flagged_not_rejected():
    law = make_increment([(-1, 0.25), (1, 0.75)])
    assert not law.mean_zero
    with pytest.raises(LawError):
        law.require()
    law.require(mean_zero=False, aperiodic=False)


def test_continuous_time_needs_no_zero_step():
    with pytest.raises(LawError):
        parse_law(LAZY_UNIFORM).require(continuous=True)
    parse_law(UNIFORM_2).require(continuous=True)


def test_decimal_law_string_from_the_cli():
    law = parse_law("-1:0.3333333333,0:0.3333333334,1:0.3333333333")
    assert law.variance == pytest.approx(2 / 3, abs=1e-9)


def test_format_round_trip():
    law = parse_law(UNIFORM_2)
    assert format_law(law) == "-2:1/4,-1:1/4,1:1/4,2:1/4"
    assert parse_law(format_law(law)) == law


def test_ladder_unit_step():
    lad = ladder_exact(LAZY_UNIFORM)
    assert lad.pmf == (1.0,)
    assert lad.tail_mass == 0.0
    assert ladder_distribution(LAZY_UNIFORM, horizon=2000).pmf[0] > 0.97


def test_ladder_uniform_2_golden_ratio():
    # roots of the Wiener-Hopf factor are the golden-ratio conjugates
    lad = ladder_exact(UNIFORM_2)
    assert lad.pmf[0] == pytest.approx(1 / GOLDEN, abs=1e-12)
    assert lad.pmf[1] == pytest.approx(1 / GOLDEN ** 2, abs=1e-12)
    assert lad.tail_mass < 1e-12


def test_ladder_dp_accounts_for_its_mass():
    lad = ladder_distribution(UNIFORM_2, horizon=10_000, band=1_000)
    assert sum(lad.pmf) + lad.tail_mass == pytest.approx(1.0, abs=1e-10)
    assert 0 < lad.tail_mass < 0.01
    # the truncated DP approaches the exact factorisation from below
    ex = ladder_exact(UNIFORM_2)
    assert all(d <= e + 1e-12 for d, e in zip(lad.pmf, ex.pmf))
    assert lad.pmf[0] / sum(lad.pmf) == pytest.approx(ex.pmf[0], abs=2e-3)


def test_ladder_horizon_zero():
    lad = ladder_distribution(UNIFORM_2, horizon=0)
    assert lad.pmf == ()
    assert lad.tail_mass == 1.0


def test_overshoot_limit_uniform_2():
    lim = overshoot_limit(UNIFORM_2)
    assert lim[0] == pytest.approx((5 + math.sqrt(5)) / 10, abs=1e-12)
    assert lim[1] == pytest.approx((5 - math.sqrt(5)) / 10, abs=1e-12)


def test_ladder_refuses_sublattice_law():
    law = make_increment([(-2, Fraction(1, 3)), (0, Fraction(1, 3)), (2, Fraction(1, 3))])
    assert not law.irreducible
    with pytest.raises(LawError):
        ladder_exact(law)


def test_overshoot_limit_unit_step_is_zero():
    assert overshoot_limit(LAZY_UNIFORM) == {0: 1.0}


def test_overshoot_limit_uniform_3_monotone():
    law = make_increment([(k, Fraction(1, 6)) for k in (-3, -2, -1, 1, 2, 3)])
    lim = overshoot_limit(law)
    assert sorted(lim) == [0, 1, 2]
    assert lim[0] >= lim[1] >= lim[2] > 0
    assert sum(lim.values()) == pytest.approx(1.0, abs=1e-8)


def test_overshoot_refuses_heavy_dp_tail():
    lad = ladder_distribution(UNIFORM_2, horizon=50)
    with pytest.raises(GuardError):
        overshoot_limit(UNIFORM_2, lad)


def test_overshoot_from_converges_to_limit():
    lim = overshoot_limit(UNIFORM_2)
    near = total_variation(overshoot_from(UNIFORM_2, 1), lim)
    far = total_variation(overshoot_from(UNIFORM_2, 10), lim)
    assert far < near
    assert far < 1e-4
    with pytest.raises(GuardError):
        overshoot_from(UNIFORM_2, 0)


def test_overshoot_from_one_step_below():
    # from -1 the first record at or above 0 comes from one ladder step Z
    lad = ladder_exact(UNIFORM_2)
    out = overshoot_from(UNIFORM_2, 1)
    assert out[0] == pytest.approx(lad.pmf[0], abs=1e-12)
    assert out[1] == pytest.approx(lad.pmf[1], abs=1e-12)


def test_overshoot_moment_sum():
    lad = ladder_exact(UNIFORM_2)
    assert overshoot_moment_sum(UNIFORM_2, 2) == pytest.approx(lad.pmf[1], abs=1e-12)


def test_ladder_matches_simulation():
    law = parse_law(UNIFORM_2)
    rng = stream(11)
    n = 20_000
    first = np.empty(n, dtype=np.int64)
    for k in range(n):
        first[k] = K.first_passage(rng, -1, 10 ** 6, law.offsets_array, law.cdf)
    # from -1, landing at 0 means Z = 1 and landing at 1 means Z = 2
    ok = first[first >= 0]
    p1 = np.mean(ok == 0)
    se = math.sqrt(p1 * (1 - p1) / ok.size)
    assert abs(p1 - ladder_exact(law).pmf[0]) < 3 * se + 0.005


small_laws = st.lists(
    st.tuples(st.integers(-4, 4), st.integers(1, 6)), min_size=2, max_size=6, unique_by=lambda t: t[0]
).filter(lambda s: any(o > 0 for o, _ in s) and any(o < 0 for o, _ in s))


def _mean_zero(pairs):
    # tilt the weights so the mean vanishes: keep the support, solve for balance
    pos = [(o, w) for o, w in pairs if o > 0]
    neg = [(o, w) for o, w in pairs if o < 0]
    zero = [(o, w) for o, w in pairs if o == 0]
    up = sum(o * w for o, w in pos)
    down = -sum(o * w for o, w in neg)
    pos = [(o, Fraction(w) * down) for o, w in pos]
    neg = [(o, Fraction(w) * up) for o, w in neg]
    zero = [(o, Fraction(w) * up * down / 4) for o, w in zero]
    allp = pos + neg + zero
    total = sum(w for _, w in allp)
    return [(o, w / total) for o, w in allp]


@settings(max_examples=60, deadline=None)
@given(small_laws)
def test_overshoot_limit_properties(pairs):
    law = make_increment(_mean_zero(pairs))
    assert law.mean_zero
    if law.period != 1 or not law.irreducible:
        return
    lim = overshoot_limit(law)
    vals = [lim[k] for k in sorted(lim)]
    assert sum(vals) == pytest.approx(1.0, abs=1e-8)
    assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))
    assert all(k < law.max_up for k in lim)


@settings(max_examples=60, deadline=None)
@given(small_laws)
def test_variance_identity(pairs):
    law = make_increment(_mean_zero(pairs))
    second = sum(p * o * o for o, p in law.support)
    assert law.variance == pytest.approx(second - law.mean ** 2, abs=1e-12)
    assert sum(law.probs) == pytest.approx(1.0, abs=1e-12)
