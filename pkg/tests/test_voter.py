import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coalweb.errors import GuardError
from coalweb.increments import LAZY_UNIFORM, UNIFORM_2, parse_law
from coalweb.rng import stream
from coalweb.voter import (
    VoterState, boundary_paths, coupled_realization, dual_check, exact_marginals, heaviside, interface_trace,
    step_voter, window_half,
)

LAZY = parse_law(LAZY_UNIFORM)
U2 = parse_law(UNIFORM_2)


def test_heaviside_and_outside_convention():
    s = heaviside(-3, 3)
    assert s.values.tolist() == [1, 1, 1, 1, 0, 0]
    assert s.at(-100) == 1 and s.at(100) == 0
    assert s.leftmost_zero == 1 and s.rightmost_one == 0


def test_zero_increments_leave_state_unchanged():
    s = VoterState(0, 6, [1, 0, 0, 1, 1, 0])
    t = step_voter(s, np.zeros(6, dtype=int))
    assert np.array_equal(t.values, s.values)
    assert t.time == 1


def test_single_ring_copies_neighbour():
    s = heaviside(-3, 3)
    t = step_voter(s, (1, -1, 0.5))
    assert t.at(1) == 1
    assert t.rightmost_one >= 1
    with pytest.raises(GuardError):
        step_voter(s, (5, -1, 0.5))
    with pytest.raises(GuardError):
        step_voter(s, np.zeros(3, dtype=int))


def test_consensus_inside_the_light_cone():
    # the window is bordered by 1s on the left and 0s on the right, so only sites
    # out of reach of the right border keep an all-1 start
    s = VoterState(0, 40, np.ones(40, dtype=np.int8))
    rng = stream(1)
    n = 5
    for _ in range(n):
        s = step_voter(s, U2.sample(rng, 40))
    assert np.all(s.values[: 40 - n * U2.max_abs] == 1)
    z = VoterState(0, 40, np.zeros(40, dtype=np.int8))
    for _ in range(n):
        z = step_voter(z, U2.sample(rng, 40))
    assert np.all(z.values[n * U2.max_abs:] == 0)


def test_bad_values_rejected():
    with pytest.raises(GuardError):
        VoterState(0, 3, [0, 2, 1])
    with pytest.raises(GuardError):
        VoterState(0, 3, [0, 1])


def test_exact_two_step_heaviside_marginals():
    ex = exact_marginals(LAZY, -4, 4, 2)
    assert ex[-1] == Fraction(8, 9)
    assert ex[0] == Fraction(2, 3)
    assert ex[1] == Fraction(1, 3)
    assert ex[2] == Fraction(1, 9)
    assert ex[-4] == 1 and ex[3] == 0


def test_exact_marginals_match_monte_carlo():
    ex = exact_marginals(LAZY, -4, 4, 2)
    n = 20_000
    hits = np.zeros(8)
    for k in range(n):
        c = coupled_realization(LAZY, -4, 4, 2, seed=k, initial=heaviside(-4, 4))
        v = c.voter_at([(x, 2) for x in range(-4, 4)])
        hits += [v[(x, 2.0)] for x in range(-4, 4)]
    p = hits / n
    for i, x in enumerate(range(-4, 4)):
        q = float(ex[x])
        se = math.sqrt(max(q * (1 - q), 1e-12) / n)
        assert abs(p[i] - q) <= 4 * se + 1e-12


def test_dual_check_empty_and_guards():
    c = coupled_realization(LAZY, -20, 20, 10, seed=1)
    assert dual_check(c, [])
    with pytest.raises(GuardError):
        dual_check(c, [(100, 1)])
    with pytest.raises(GuardError):
        dual_check(c, [(0, 0)])


def test_dual_check_all_zero_region():
    init = VoterState(-20, 20, np.zeros(40, dtype=np.int8))
    c = coupled_realization(LAZY, -20, 20, 3, seed=2, initial=init)
    # sites far from the left border only see 0s in three steps
    assert dual_check(c, [(5, 3), (10, 2)])
    assert not any(c.voter_at([(5, 3), (10, 2)]).values())


@pytest.mark.parametrize("time_kind,law", [("discrete", LAZY), ("discrete", U2), ("continuous", U2)])
def test_dual_check_random(time_kind, law):
    rng = np.random.default_rng(5)
    for k in range(100):
        c = coupled_realization(law, -20, 20, 10, seed=k, time_kind=time_kind)
        size = int(rng.integers(1, 6))
        if time_kind == "discrete":
            A = [(int(rng.integers(-20, 20)), int(rng.integers(1, 11))) for _ in range(size)]
        else:
            A = [(int(rng.integers(-20, 20)), float(rng.uniform(0.01, 10))) for _ in range(size)]
        assert dual_check(c, A)


def test_coupled_realization_is_deterministic():
    a = coupled_realization(U2, -10, 10, 5, seed=4, time_kind="continuous")
    b = coupled_realization(U2, -10, 10, 5, seed=4, time_kind="continuous")
    assert a.rings == b.rings
    assert np.array_equal(a.initial.values, b.initial.values)


def test_interface_starts_sharp():
    tr = interface_trace(U2, 10, [0, 5, 10], seed=1)
    assert (tr.l[0], tr.r[0]) == (1, 0)
    assert tr.csv().splitlines()[0] == "t,l,r,width"
    assert tr.csv().splitlines()[1] == "0,1,0,-1"


@pytest.mark.parametrize("time_kind,law", [("continuous", U2), ("discrete", LAZY), ("discrete", U2)])
def test_interface_word_is_consistent(time_kind, law):
    for s in range(30):
        tr = interface_trace(law, 200, [0, 50, 200], seed=s, time_kind=time_kind)
        l, r = tr.l[-1], tr.r[-1]
        assert np.all(tr.r - tr.l >= -1)
        if r < l:
            assert r == l - 1 and tr.alpha.size == 0
        else:
            assert tr.alpha.size == r - l + 1
            assert tr.alpha[0] == 0 and tr.alpha[-1] == 1


def test_interface_guards():
    with pytest.raises(GuardError):
        interface_trace(U2, 10, [5, 1], seed=1)
    with pytest.raises(GuardError):
        interface_trace(LAZY, 10, [0.5], seed=1, time_kind="discrete")
    assert window_half(U2, 100) == math.ceil(6 * U2.sigma * 10) + 8


def test_boundary_paths_identity_rescaling():
    tr = interface_trace(U2, 4, [0, 1, 2, 3, 4], seed=7)
    lb, rb, gap = boundary_paths(tr, 1.0)
    assert np.allclose(lb.values, tr.l / U2.sigma)
    assert np.allclose(rb.times, tr.times)
    assert gap == pytest.approx(np.max(np.abs(tr.l - tr.r)) / U2.sigma)
    with pytest.raises(GuardError):
        boundary_paths(tr, 0.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from(["discrete", "continuous"]))
def test_dual_check_property(seed, time_kind):
    law = U2
    c = coupled_realization(law, -15, 15, 8, seed=seed, time_kind=time_kind)
    rng = np.random.default_rng(seed)
    A = [(int(rng.integers(-15, 15)), float(rng.integers(1, 9))) for _ in range(int(rng.integers(1, 6)))]
    assert dual_check(c, A)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_separation_of_forward_states(seed):
    # every site left of the leftmost 0 holds 1, every site right of the rightmost 1 holds 0
    c = coupled_realization(U2, -30, 30, 20, seed=seed, initial=heaviside(-30, 30))
    s = c.initial
    for n in range(20):
        s = step_voter(s, c.field[n])
        lz, ro = s.leftmost_zero, s.rightmost_one
        xs = np.arange(-30, 30)
        assert np.all(s.values[xs < lz] == 1)
        assert np.all(s.values[xs > ro] == 0)
