import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from odmp.oracles import (AssignmentStep, AssortmentStep, KnapsackStep, OracleConfigError,
                          assignment_solve, assortment_solve, knapsack_bruteforce, knapsack_solve,
                          oracle_value)


def random_knapsack(rng, n, m):
    w = rng.uniform(1, 100, n)
    U = np.maximum(rng.uniform(w - 20, w + 40, size=(m, n)), 0)
    return KnapsackStep(w, 0.3 * w.sum() + rng.uniform(0, 0.4) * w.sum(), U)


def random_assortment(rng, m, s):
    return AssortmentStep(rng.uniform(1, 10, m), rng.lognormal(0, 1, m), s)


def random_assignment(rng, m, n):
    return AssignmentStep(rng.uniform(0, 10, (m, n)), rng.uniform(0, 10, (m, n)))


# ---------------------------------------------------------------------------
# knapsack


def test_knapsack_all_ones_price_selects_nothing():
    rng = np.random.default_rng(0)
    step = random_knapsack(rng, 8, 3)
    dec = knapsack_solve(step, np.ones(3))
    assert not dec.x.any()
    assert oracle_value(step, np.ones(3)) == 0.0


def test_knapsack_small_example():
    step = KnapsackStep([2, 3, 4], 5, [[3, 4, 5]])
    dec = knapsack_solve(step, [0.0])
    np.testing.assert_array_equal(dec.x, [1, 1, 0])
    assert dec.r == pytest.approx(7)
    # the exhaustive oracle over all 8 subsets agrees
    assert knapsack_bruteforce(step, [0.0]).r == pytest.approx(7)


def test_knapsack_zero_price_is_utilitarian_knapsack():
    rng = np.random.default_rng(1)
    step = random_knapsack(rng, 10, 4)
    best = max(step.U.sum(axis=0) @ np.array(x) for x in itertools.product([0, 1], repeat=10)
               if np.array(x) @ step.w <= step.W_cap)
    assert knapsack_solve(step, np.zeros(4)).r == pytest.approx(best, abs=1e-9)


def test_knapsack_never_selects_nonpositive_adjusted_profit():
    rng = np.random.default_rng(2)
    for _ in range(100):
        step = random_knapsack(rng, 12, 3)
        p = rng.normal(scale=1.5, size=3)
        c = step.profit - p @ step.U
        dec = knapsack_solve(step, p)
        assert not np.any(dec.x[c <= 0])


def test_knapsack_matches_exhaustive():
    rng = np.random.default_rng(3)
    for _ in range(300):
        n = int(rng.integers(1, 16))
        step = random_knapsack(rng, n, int(rng.integers(1, 5)))
        p = rng.normal(scale=0.8, size=step.m)
        a, b = knapsack_solve(step, p), knapsack_bruteforce(step, p)
        assert a.r - p @ a.y == pytest.approx(b.r - p @ b.y, abs=1e-9)


def test_knapsack_rejects_bad_data():
    with pytest.raises(ValueError):
        KnapsackStep([0.0, 1.0], 1.0, [[1, 1]])
    with pytest.raises(ValueError):
        KnapsackStep([1.0], 1.0, [[-1.0]])


# ---------------------------------------------------------------------------
# assortment


def test_assortment_examples():
    step = AssortmentStep([1, 2], [1, 1], 1)
    dec = assortment_solve(step, [0, 0])
    np.testing.assert_array_equal(dec.x, [0, 1])
    assert dec.r == pytest.approx(1.0)
    assert oracle_value(step, [0, 0]) == pytest.approx(1.0)
    dec = assortment_solve(step, [0, 0.8])
    np.testing.assert_array_equal(dec.x, [1, 0])
    assert dec.r - 0 == pytest.approx(0.5)


def test_assortment_nonnegative_value_for_nonnegative_prices():
    rng = np.random.default_rng(4)
    for _ in range(100):
        step = random_assortment(rng, 8, 3)
        assert oracle_value(step, rng.uniform(0, 5, 8)) >= 0


def test_assortment_pruned_matches_table():
    rng = np.random.default_rng(5)
    for _ in range(200):
        m = int(rng.integers(1, 13))
        step = random_assortment(rng, m, int(rng.integers(1, min(4, m) + 1)))
        p = rng.normal(scale=1.5, size=m)
        a = assortment_solve(step, p, method="pruned")
        b = assortment_solve(step, p, method="table")
        assert a.r - p @ a.y == pytest.approx(b.r - p @ b.y, abs=1e-9)


def test_assortment_limit():
    rng = np.random.default_rng(6)
    step = AssortmentStep(rng.uniform(1, 2, 30), rng.uniform(1, 2, 30), 2)
    with pytest.raises(OracleConfigError):
        assortment_solve(step, np.zeros(30))
    big = AssortmentStep(step.revenue, step.pref, 2, allow_large=True)
    assert assortment_solve(big, np.zeros(30)).x.sum() <= 2


# ---------------------------------------------------------------------------
# assignment


def test_assignment_price_tips_task():
    step = AssignmentStep([[5], [4]], [[10], [1]])
    dec = assignment_solve(step, [1, 0])
    np.testing.assert_array_equal(dec.x[:, 0], [0, 1])


def test_assignment_zero_price_takes_max_profit():
    rng = np.random.default_rng(7)
    step = random_assignment(rng, 3, 5)
    assert oracle_value(step, np.zeros(3)) == pytest.approx(step.q.max(axis=0).sum())


def test_assignment_matches_exhaustive():
    rng = np.random.default_rng(8)
    for _ in range(200):
        step = random_assignment(rng, int(rng.integers(1, 5)), int(rng.integers(1, 5)))
        p = rng.normal(size=step.m)
        dec = assignment_solve(step, p)
        D = step.decisions()
        assert dec.r - p @ dec.y == pytest.approx(np.max(D.r - D.y @ p), abs=1e-9)


# ---------------------------------------------------------------------------
# shared properties


families = st.sampled_from(["knapsack", "assortment", "assignment"])


def make_step(family, rng):
    if family == "knapsack":
        return random_knapsack(rng, int(rng.integers(1, 10)), int(rng.integers(1, 4)))
    if family == "assortment":
        m = int(rng.integers(1, 8))
        return random_assortment(rng, m, int(rng.integers(1, m + 1)))
    return random_assignment(rng, int(rng.integers(1, 4)), int(rng.integers(1, 4)))


@settings(max_examples=500, deadline=None)
@given(families, st.integers(0, 2**32 - 1))
def test_oracle_value_midpoint_convex(family, seed):
    rng = np.random.default_rng(seed)
    step = make_step(family, rng)
    p1, p2 = rng.normal(size=(2, step.m))
    mid = oracle_value(step, (p1 + p2) / 2)
    assert mid <= (oracle_value(step, p1) + oracle_value(step, p2)) / 2 + 1e-9


@settings(max_examples=300, deadline=None)
@given(families, st.integers(0, 2**32 - 1))
def test_decision_consistent_and_feasible(family, seed):
    rng = np.random.default_rng(seed)
    step = make_step(family, rng)
    dec = step.solve(rng.normal(size=step.m))
    assert step.is_feasible(dec.x)
    np.testing.assert_allclose(dec.y, step.impact(dec.x), rtol=0, atol=1e-12)
    assert dec.r == pytest.approx(step.reward(dec.x), abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(families, st.integers(0, 2**32 - 1))
def test_solve_is_best_enumerated_decision(family, seed):
    rng = np.random.default_rng(seed)
    step = make_step(family, rng)
    p = rng.normal(size=step.m)
    D = step.decisions()
    assert oracle_value(step, p) == pytest.approx(np.max(D.r - D.y @ p), abs=1e-9)
