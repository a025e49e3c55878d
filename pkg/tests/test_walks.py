import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coalweb.errors import BudgetError, GuardError, LawError
from coalweb.increments import LAZY_UNIFORM, UNIFORM_2, make_increment, parse_law
from coalweb.paths import Path
from coalweb.walks import (
    SpaceTimeWindow, density, dump_system, enumerate_exact, load_system, occupancy_trials, paths_of, rescale,
    rescale_paths, same_system, simulate_continuous, simulate_discrete,
)

LAZY = parse_law(LAZY_UNIFORM)
U2 = parse_law(UNIFORM_2)


def test_window_guards():
    with pytest.raises(GuardError):
        SpaceTimeWindow(0, 0, 0, 1)
    with pytest.raises(GuardError):
        SpaceTimeWindow(0, 5, 1, 1)
    with pytest.raises(GuardError):
        SpaceTimeWindow(0, 2, 0, 1, "torus")
    w = SpaceTimeWindow(-3, 4, 0, 10, "buffered_open", 5)
    assert w.band == (-8, 9)
    assert SpaceTimeWindow(0, 5, 0, 1, "torus").wrap(-1) == 4


def test_same_origin_merges_at_birth():
    w = SpaceTimeWindow(-10, 10, 0, 5, "buffered_open", 10)
    sys = simulate_discrete(w, LAZY, [(0, 0), (0, 0)], seed=1)
    assert sys.merges == {1: (0, 0)}
    assert sys.alive(5) == [0]


def test_period_2_law_refused():
    w = SpaceTimeWindow(-10, 10, 0, 5)
    with pytest.raises(LawError):
        simulate_discrete(w, make_increment([(-1, 0.5), (1, 0.5)]), [(0, 0)], seed=1)


def test_origin_outside_window_refused():
    w = SpaceTimeWindow(-10, 10, 0, 5)
    with pytest.raises(GuardError):
        simulate_discrete(w, LAZY, [(20, 0)], seed=1)
    with pytest.raises(GuardError):
        simulate_discrete(w, LAZY, [(0, 0.5)], seed=1)


def test_single_walker_is_mean_zero():
    w = SpaceTimeWindow(-200, 200, 0, 100, "buffered_open", 200)
    x = np.array([simulate_discrete(w, LAZY, [(0, 0)], seed=s).position(0, 100) for s in range(10_000)])
    se = x.std(ddof=1) / math.sqrt(x.size)
    assert abs(x.mean()) < 3 * se
    # variance 100 sigma^2
    assert x.var() == pytest.approx(100 * LAZY.variance, rel=0.05)


def test_discrete_system_invariants():
    w = SpaceTimeWindow(0, 30, 0, 40, "torus")
    sys = simulate_discrete(w, U2, [(x, 0) for x in range(30)], seed=3)
    assert sys.check_permanence(range(41))
    sizes = [len(sys.occupied(t)) for t in range(41)]
    assert all(a >= b for a, b in zip(sizes, sizes[1:]))
    # walkers on one site at one time have merged
    for t in range(41):
        seen = {}
        for i in range(sys.n_walkers):
            seen.setdefault(sys.position(i, t), set()).add(sys.absorber_at(i, t))
        assert all(len(v) == 1 for v in seen.values())


def test_discrete_determinism_and_round_trip():
    w = SpaceTimeWindow(-20, 20, 0, 30, "buffered_open", 10)
    origins = [(x, t) for x in range(-20, 20, 3) for t in (0, 4)]
    a = simulate_discrete(w, U2, origins, seed=9)
    b = simulate_discrete(w, U2, origins, seed=9)
    assert dump_system(a) == dump_system(b)
    back = load_system(dump_system(a))
    assert same_system(a, back)
    assert dump_system(back) == dump_system(a)


def test_continuous_round_trip():
    w = SpaceTimeWindow(-20, 20, 0.0, 15.0, "buffered_open", 20)
    a = simulate_continuous(w, U2, [(x, 0.0) for x in range(-20, 20, 4)], seed=4)
    back = load_system(dump_system(a))
    assert same_system(a, back)


def test_buffered_open_freezes_escapers():
    w = SpaceTimeWindow(0, 3, 0, 200, "buffered_open", 0)
    sys = simulate_discrete(w, U2, [(1, 0)], seed=2)
    assert sys.contaminated


def test_continuous_empty():
    w = SpaceTimeWindow(0, 10, 0.0, 5.0)
    sys = simulate_continuous(w, U2, [], seed=1)
    assert sys.n_walkers == 0


def test_continuous_refuses_lazy_law():
    w = SpaceTimeWindow(0, 10, 0.0, 5.0)
    with pytest.raises(LawError):
        simulate_continuous(w, LAZY, [(0, 0.0)], seed=1)


def test_continuous_clock_is_rate_one():
    T = 10.0
    w = SpaceTimeWindow(-500, 500, 0.0, T, "buffered_open", 100)
    counts = np.array([len(simulate_continuous(w, U2, [(0, 0.0)], seed=s).events[0][0]) - 1
                       for s in range(10_000)])
    se = counts.std(ddof=1) / math.sqrt(counts.size)
    assert abs(counts.mean() - T) < 3 * se


def test_continuous_event_times_increase_and_permanence():
    w = SpaceTimeWindow(0, 25, 0.0, 30.0, "torus")
    sys = simulate_continuous(w, U2, [(x, 0.0) for x in range(25)], seed=5)
    for ts, _ in sys.events:
        assert np.all(np.diff(ts) >= 0)
    assert sys.check_permanence(np.linspace(0, 30, 61))
    sizes = [len(sys.occupied(t)) for t in np.linspace(0, 30, 61)]
    assert all(a >= b for a, b in zip(sizes, sizes[1:]))


def test_continuous_full_band_has_two_paths_per_ring():
    w = SpaceTimeWindow(0, 4, 0.0, 2.0, "buffered_open", 20)
    sys = simulate_continuous(w, U2, [], seed=6, full_band=True)
    imm = [o for o in sys.origins if o[2]]
    lazy = [o for o in sys.origins if not o[2] and o[1] > 0]
    assert len(imm) == len(lazy) > 0


def test_adjacent_survival_scaling():
    # sqrt(t) P(not merged by t) is roughly constant; the ratio has sd about 0.08 here
    out = {}
    for t in (25.0, 100.0):
        w = SpaceTimeWindow(-100, 100, 0.0, t, "buffered_open", 200)
        alive = [len(simulate_continuous(w, U2, [(0, 0.0), (1, 0.0)], seed=s).merges) == 0 for s in range(3000)]
        out[t] = math.sqrt(t) * np.mean(alive)
    assert 0.7 < out[100.0] / out[25.0] < 1.3


def test_step_path_example():
    # a walker at 0 then 2: step value 0 on [0,1), 2 at 1; interpolated 2t
    step = Path([0, 1], [0, 2], "step")
    lin = Path([0, 1], [0, 2], "interpolated")
    assert step(0.5) == 0 and step(1) == 2
    assert lin(0.25) == pytest.approx(0.5)


def test_path_views_agree_at_events():
    w = SpaceTimeWindow(-30, 30, 0.0, 20.0, "buffered_open", 60)
    sys = simulate_continuous(w, U2, [(0, 0.0), (5, 1.5)], seed=8)
    steps = paths_of(sys, "step")
    lins = paths_of(sys, "interpolated")
    for p, q in zip(steps, lins):
        assert np.array_equal(p.left_limit(q.times[1:]), q(q.times[1:]))
        jump = max(np.max(np.abs(np.diff(p.values))), 0) if len(p) > 1 else 0
        ts = np.linspace(p.t0, 20, 2001)
        assert np.max(np.abs(p(ts) - q(ts))) <= jump + 1e-12


def test_continuous_interpolated_starts_flat():
    w = SpaceTimeWindow(-30, 30, 0.0, 20.0, "buffered_open", 60)
    sys = simulate_continuous(w, U2, [(3, 0.5)], seed=8)
    q = paths_of(sys, "interpolated")[0]
    t1 = sys.events[0][0][1]
    assert q(0.5) == 3 and q(t1) == 3


def test_rescale_arithmetic():
    p = Path([0, 100], [0, 50], "interpolated")
    s = rescale_paths([p], 0.1, 2.0)
    assert s.paths[0].breakpoints[-1] == pytest.approx((1.0, 2.5))
    ident = rescale_paths([p], 1.0, 1.0)
    assert ident.paths[0].same_as(p)


def test_rescale_system_is_exact_on_breakpoints():
    w = SpaceTimeWindow(-30, 30, 0, 20, "buffered_open", 30)
    sys = simulate_discrete(w, U2, [(0, 0), (4, 2)], seed=1)
    sc = rescale(sys, 0.1)
    for p, q in zip(paths_of(sys), sc):
        assert np.allclose(q.times, p.times * 0.01)
        assert np.allclose(q.values, p.values * 0.1 / U2.sigma)
    with pytest.raises(GuardError):
        rescale(sys, 1.5)


def test_scaled_variance_is_unit():
    # at delta = 0.05 the walker position at scaled time 1 has variance close to 1
    delta = 0.05
    n = int(round(1 / delta ** 2))
    rng = np.random.default_rng(21)
    x = U2.sample(rng, (10_000, n)).sum(axis=1) * (delta / U2.sigma)
    assert x.var(ddof=1) == pytest.approx(1.0, rel=0.05)


def test_enumerate_exact_width_5():
    ex = enumerate_exact(LAZY, 5, 1)
    assert ex.single[0] == Fraction(19, 27)
    ex0 = enumerate_exact(LAZY, 5, 0)
    assert all(p == 1 for p in ex0.single)
    assert ex0.pair[0][3] == 1


def test_enumerate_exact_negative_correlation():
    ex = enumerate_exact(LAZY, 5, 2)
    for x in range(5):
        for y in range(5):
            if x != y:
                assert ex.pair[x][y] <= ex.single[x] * ex.single[y]


def test_enumerate_budget():
    with pytest.raises(BudgetError):
        enumerate_exact(LAZY, 20, 10)


def test_density_trivial_and_guard():
    assert density(LAZY, 0, 100, 5, seed=1) == (1.0, 0.0)
    with pytest.raises(GuardError):
        density(LAZY, 2500, 300, 5, seed=1)


def test_density_one_step_matches_oracle():
    p, se = density(LAZY, 1, 5, 20_000, seed=3)
    assert abs(p - 19 / 27) < 4 * se


def test_occupancy_deterministic_by_trial_index():
    a, ia = occupancy_trials(U2, [10], 200, 6, seed=5, query_sites=[0, 7])
    b, ib = occupancy_trials(U2, [10], 200, 3, seed=5, query_sites=[0, 7], first_trial=3)
    assert np.array_equal(a[3:], b)
    assert np.array_equal(ia[3:], ib)


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.tuples(st.integers(-8, 8), st.integers(0, 6)), min_size=1, max_size=12),
    st.integers(0, 2 ** 32 - 1),
)
def test_discrete_permanence_property(origins, seed):
    w = SpaceTimeWindow(-10, 10, 0, 15, "buffered_open", 40)
    sys = simulate_discrete(w, U2, origins, seed)
    assert sys.check_permanence(range(16))
    # the min index absorbs
    for b, (_, a) in sys.merges.items():
        assert a < b


@settings(max_examples=25, deadline=None)
@given(
    st.lists(st.tuples(st.integers(-8, 8), st.floats(0, 5)), min_size=1, max_size=10),
    st.integers(0, 2 ** 32 - 1),
)
def test_continuous_permanence_property(origins, seed):
    w = SpaceTimeWindow(-10, 10, 0.0, 8.0, "buffered_open", 40)
    sys = simulate_continuous(w, U2, origins, seed)
    assert sys.check_permanence(np.linspace(0, 8, 33))
