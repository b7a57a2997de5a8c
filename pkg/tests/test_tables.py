import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hke_lab.errors import OutOfRange
from hke_lab.tables import MonotoneTable, gen_inverse, logspace_nodes, solve_decreasing


def power_table(alpha=1.5, coef=0.25, lo=1e-6, hi=1e6, per_decade=64):
    r = logspace_nodes(lo, hi, per_decade)
    return MonotoneTable(r, coef * r ** alpha)


def test_nodes_reproduced_exactly():
    tab = power_table()
    vals = tab(tab.nodes)
    assert np.max(np.abs(vals / tab.values - 1.0)) < 1e-14


def test_interpolation_monotone_between_nodes():
    rng = np.random.default_rng(7)
    r = logspace_nodes(1e-3, 1e3, 16)
    v = np.maximum.accumulate(np.exp(rng.normal(size=r.size)).cumsum())
    tab = MonotoneTable(r, v)
    q = np.sort(np.exp(rng.uniform(math.log(1e-3), math.log(1e3), 4000)))
    f = tab(q)
    assert np.all(np.diff(f) >= -1e-12 * f[:-1])


def test_end_exponent_fit():
    tab = power_table(alpha=1.7)
    assert abs(tab.left_exp - 1.7) < 1e-8
    assert abs(tab.right_exp - 1.7) < 1e-8


def test_extrapolation_power_law_and_trust_window():
    tab = power_table(alpha=2.0, coef=1.0, lo=1e-2, hi=1e2)
    assert abs(tab(1e-4) - 1e-8) < 1e-20
    with pytest.raises(OutOfRange):
        tab(1e-6)
    with pytest.raises(OutOfRange):
        tab(-1.0)


def test_gen_inverse_closed_form():
    # phi(r) = 0.25 r^1.5 so phi^{-1}(2) = 8^{2/3} = 4
    tab = power_table()
    assert abs(gen_inverse(tab, 2.0) - 4.0) < 1e-9


def test_gen_inverse_zero_and_step_plateau():
    tab = power_table()
    assert gen_inverse(tab, 0.0) == 0.0

    nodes = np.array([1.0, 1.5, 2.0, 2.5, 3.0, 4.0])
    vals = np.array([1.0, 1.0, 1.0, 3.0, 3.0, 3.0])
    step = MonotoneTable(nodes, vals)
    # inf{s : f(s) > 1} is the right edge of the level-1 plateau
    assert abs(gen_inverse(step, 1.0) - 2.0) < 1e-9


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=-8.0, max_value=8.0))
def test_gen_inverse_round_trip(log10_t):
    tab = power_table()
    t = 10.0 ** log10_t
    lo, hi = tab.value_range()
    if not (lo <= t <= hi):
        return
    s = gen_inverse(tab, t)
    assert abs(tab(s) - t) <= 1e-6 * t


def test_gen_inverse_vectorized_matches_scalar():
    tab = power_table()
    ts = np.geomspace(1e-3, 1e3, 37)
    vec = gen_inverse(tab, ts)
    sca = np.array([gen_inverse(tab, float(t)) for t in ts])
    assert np.max(np.abs(vec / sca - 1.0)) < 1e-12


def test_gen_inverse_out_of_trust():
    tab = power_table(lo=1e-2, hi=1e2)
    with pytest.raises(OutOfRange):
        gen_inverse(tab, 1e30)


def test_solve_decreasing_round_trip():
    r = logspace_nodes(1e-2, 1e4, 64)
    tab = MonotoneTable(r, 1.0 / r, direction="non_increasing")
    # T(r) = 1/r so the solver inverts exactly
    assert abs(solve_decreasing(tab, 50.0) - 0.02) < 1e-9
    vs = np.geomspace(1e-3, 50.0, 23)
    ss = solve_decreasing(tab, vs)
    assert np.max(np.abs(ss * vs - 1.0)) < 1e-9


def test_direction_validation():
    r = logspace_nodes(1.0, 10.0, 8)
    with pytest.raises(ValueError):
        MonotoneTable(r, np.linspace(2.0, 1.0, r.size))  # decreasing as non_decreasing
