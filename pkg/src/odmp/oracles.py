"""Local feasible sets exposed as price-directed oracles.

Each step type answers ``max { r - p.y : (r, x, y) in Omega }`` exactly
through ``solve(p)``, and can enumerate its finite decision set for the
offline brute-force baselines.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from math import comb
from typing import NamedTuple, Optional, Union

import numpy as np

from ._knapsack import branch_and_bound

#: Largest product count the assortment oracle solves exactly by default.
ASSORTMENT_EXACT_LIMIT = 25
#: Largest subset table kept in memory for the vectorized assortment scan.
ASSORTMENT_TABLE_LIMIT = 250_000


class OracleConfigError(ValueError):
    """Raised when a step cannot be solved under the configured exact mode."""


class LocalDecision(NamedTuple):
    r: float
    x: np.ndarray
    y: np.ndarray


class DecisionSet(NamedTuple):
    """All decisions of a step as stacked arrays (one row per decision)."""

    r: np.ndarray
    x: np.ndarray
    y: np.ndarray


# ---------------------------------------------------------------------------
# knapsack


@dataclass(frozen=True, eq=False)
class KnapsackStep:
    """One 0-1 knapsack: weights ``w``, capacity ``W_cap``, utilities ``U`` (m x n).

    The reward of a selection is ``profit . x`` (defaults to the column sums
    of ``U``, the utilitarian welfare) and its impact is ``U x``.
    """

    w: np.ndarray
    W_cap: float
    U: np.ndarray
    profit: Optional[np.ndarray] = None

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float).ravel()
        U = np.atleast_2d(np.asarray(self.U, dtype=float))
        if U.shape[1] != w.size:
            raise ValueError("U must have one column per item")
        if np.any(w <= 0) or self.W_cap < 0 or np.any(U < 0):
            raise ValueError("knapsack step needs w > 0, W_cap >= 0, U >= 0")
        prof = U.sum(axis=0) if self.profit is None else np.asarray(self.profit, float).ravel()
        if prof.size != w.size:
            raise ValueError("profit must have one entry per item")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "W_cap", float(self.W_cap))
        object.__setattr__(self, "profit", prof)

    @property
    def n(self) -> int:
        return self.w.size

    @property
    def m(self) -> int:
        return self.U.shape[0]

    def impact(self, x) -> np.ndarray:
        return self.U @ np.asarray(x, dtype=float)

    def reward(self, x) -> float:
        return float(self.profit @ np.asarray(x, dtype=float))

    def is_feasible(self, x) -> bool:
        x = np.asarray(x)
        return bool(np.all((x == 0) | (x == 1)) and self.w @ x <= self.W_cap * (1 + 1e-12))

    def solve(self, p) -> LocalDecision:
        return knapsack_solve(self, p)

    def decisions(self) -> DecisionSet:
        X = _bit_table(self.n)
        X = X[X @ self.w <= self.W_cap]
        Xf = X.astype(float)
        return DecisionSet(Xf @ self.profit, X, Xf @ self.U.T)


def _adjusted_profit(step: KnapsackStep, p) -> np.ndarray:
    return step.profit - np.asarray(p, dtype=float) @ step.U


def knapsack_solve(step: KnapsackStep, p) -> LocalDecision:
    """Exact maximizer of ``(profit - U^T p) . x`` over the knapsack."""
    c = _adjusted_profit(step, p)
    x = np.zeros(step.n, dtype=np.int8)
    cut = 1e-12 * max(1.0, float(np.abs(step.profit).max(initial=0.0)))
    cand = np.flatnonzero((c > cut) & (step.w <= step.W_cap))
    if cand.size:
        order = cand[np.argsort(-c[cand] / step.w[cand], kind="stable")]
        _, xs = branch_and_bound(c[order], step.w[order], step.W_cap)
        x[order] = xs
    return LocalDecision(step.reward(x), x, step.impact(x))


def knapsack_bruteforce(step: KnapsackStep, p) -> LocalDecision:
    """Exhaustive enumeration over all ``2^n`` selections (tests / small n)."""
    if step.n > 20:
        raise OracleConfigError("exhaustive knapsack limited to n <= 20")
    c = _adjusted_profit(step, p)
    X = _bit_table(step.n)
    vals = np.where(X @ step.w <= step.W_cap, X @ c, -np.inf)
    k = int(np.argmax(vals))
    x = X[k].astype(np.int8)
    return LocalDecision(step.reward(x), x, step.impact(x))


@lru_cache(maxsize=32)
def _bit_table(n: int) -> np.ndarray:
    """All binary vectors of length ``n`` in lexicographic order."""
    codes = np.arange(2 ** n, dtype=np.int64)
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    table = ((codes[:, None] >> shifts[None, :]) & 1).astype(np.int8)
    table.setflags(write=False)
    return table


# ---------------------------------------------------------------------------
# MNL assortment


@dataclass(frozen=True, eq=False)
class AssortmentStep:
    """A customer of type ``type_id`` choosing under MNL with weights ``pref``.

    Showing products ``S`` earns the expected revenue
    ``sum_{i in S} revenue_i pref_i / (1 + sum_{i in S} pref_i)``; the impact
    is the shown-indicator vector itself.
    """

    revenue: np.ndarray
    pref: np.ndarray
    s: int
    type_id: int = 0
    method: str = "auto"
    allow_large: bool = False

    def __post_init__(self):
        rev = np.asarray(self.revenue, dtype=float).ravel()
        pref = np.asarray(self.pref, dtype=float).ravel()
        if rev.shape != pref.shape:
            raise ValueError("revenue and pref must have equal length")
        if np.any(rev <= 0) or np.any(pref <= 0):
            raise ValueError("revenue and pref must be positive")
        if not 1 <= int(self.s) <= rev.size:
            raise ValueError("cardinality cap must satisfy 1 <= s <= m")
        if self.method not in ("auto", "table", "pruned"):
            raise ValueError(f"unknown assortment method {self.method!r}")
        object.__setattr__(self, "revenue", rev)
        object.__setattr__(self, "pref", pref)
        object.__setattr__(self, "s", int(self.s))
        object.__setattr__(self, "type_id", int(self.type_id))

    @property
    def m(self) -> int:
        return self.revenue.size

    def impact(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float)

    def reward(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float((self.revenue * self.pref) @ x / (1.0 + self.pref @ x))

    def is_feasible(self, x) -> bool:
        x = np.asarray(x)
        return bool(np.all((x == 0) | (x == 1)) and x.sum() <= self.s)

    def solve(self, p) -> LocalDecision:
        return assortment_solve(self, p)

    def decisions(self) -> DecisionSet:
        X = subset_table(self.m, self.s)
        Xf = X.astype(float)
        R = Xf @ (self.revenue * self.pref) / (1.0 + Xf @ self.pref)
        return DecisionSet(R, X, Xf)


@lru_cache(maxsize=16)
def subset_table(m: int, s: int) -> np.ndarray:
    """Indicator rows of all subsets of size <= s, lexicographically ascending."""
    rows = [np.zeros(m, dtype=np.int8)]
    for k in range(1, s + 1):
        for comb in itertools.combinations(range(m), k):
            r = np.zeros(m, dtype=np.int8)
            r[list(comb)] = 1
            rows.append(r)
    X = np.array(rows, dtype=np.int8)
    X = X[np.lexsort(X.T[::-1])]
    X.setflags(write=False)
    return X


def _n_subsets(m: int, s: int) -> int:
    return sum(comb(m, k) for k in range(s + 1))


def assortment_solve(step: AssortmentStep, p, method: Optional[str] = None) -> LocalDecision:
    """Exact maximizer of MNL revenue minus ``p . x`` under ``|S| <= s``.

    ``method='table'`` scans every subset at once; ``'pruned'`` runs a
    depth-first enumeration that cuts subtrees by a revenue upper bound.
    Both return the lexicographically smallest optimal indicator vector.
    """
    method = method or step.method
    if step.m > ASSORTMENT_EXACT_LIMIT and not step.allow_large:
        raise OracleConfigError(
            f"assortment with m={step.m} exceeds the exact-mode limit {ASSORTMENT_EXACT_LIMIT}")
    if method == "auto":
        method = "table" if _n_subsets(step.m, step.s) <= ASSORTMENT_TABLE_LIMIT else "pruned"
    p = np.asarray(p, dtype=float)
    if method == "table":
        x = _assortment_table(step, p)
    else:
        x = _assortment_pruned(step, p)
    return LocalDecision(step.reward(x), x, x.astype(float))


def _assortment_table(step, p):
    X = subset_table(step.m, step.s)
    Xf = X.astype(float)
    obj = Xf @ (step.revenue * step.pref) / (1.0 + Xf @ step.pref) - Xf @ p
    best = obj.max()
    k = int(np.flatnonzero(obj >= best - 1e-12 * max(1.0, abs(best)))[0])
    return X[k].astype(np.int8)


def _assortment_pruned(step, p):
    m, s = step.m, step.s
    gv = step.revenue * step.pref
    solo = gv / (1.0 + step.pref)  # revenue of i can never exceed this share
    gain = solo - p
    rev_suffix_max = np.maximum.accumulate(step.revenue[::-1])[::-1]
    state = {"best": 0.0, "x": np.zeros(m, dtype=np.int8)}
    x = np.zeros(m, dtype=np.int8)

    def top_positive(vals, k):
        if k <= 0 or vals.size == 0:
            return 0.0
        pos = vals[vals > 0]
        if pos.size <= k:
            return float(pos.sum())
        return float(np.partition(pos, pos.size - k)[pos.size - k:].sum())

    def visit(k, size, num, den, pen, gain_sum, rev_max):
        obj = num / den - pen
        tol = 1e-12 * max(1.0, abs(state["best"]))
        if obj > state["best"] + tol:
            state["best"] = obj
            state["x"] = x.copy()
        if k == m or size == s:
            return
        slots = s - size
        b1 = gain_sum + top_positive(gain[k:], slots)
        b2 = max(rev_max, rev_suffix_max[k]) - pen + top_positive(-p[k:], slots)
        if min(b1, b2) <= state["best"] + tol:
            return
        # exclude first: explores indicator vectors in lexicographic order
        visit(k + 1, size, num, den, pen, gain_sum, rev_max)
        x[k] = 1
        visit(k + 1, size + 1, num + gv[k], den + step.pref[k], pen + p[k],
              gain_sum + gain[k], max(rev_max, step.revenue[k]))
        x[k] = 0

    visit(0, 0, 0.0, 1.0, 0.0, 0.0, 0.0)
    return state["x"]


# ---------------------------------------------------------------------------
# fair assignment


@dataclass(frozen=True, eq=False)
class AssignmentStep:
    """Tasks ``j = 1..n_t`` each assigned to exactly one of ``m`` agents."""

    q: np.ndarray
    wload: np.ndarray

    def __post_init__(self):
        q = np.atleast_2d(np.asarray(self.q, dtype=float))
        wl = np.atleast_2d(np.asarray(self.wload, dtype=float))
        if q.shape != wl.shape:
            raise ValueError("q and wload must share shape (m, n_t)")
        if np.any(q < 0) or np.any(wl < 0):
            raise ValueError("profits and workloads must be nonnegative")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "wload", wl)

    @property
    def m(self) -> int:
        return self.q.shape[0]

    @property
    def n_t(self) -> int:
        return self.q.shape[1]

    def impact(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) * self.wload).sum(axis=1)

    def reward(self, x) -> float:
        return float((np.asarray(x, dtype=float) * self.q).sum())

    def is_feasible(self, x) -> bool:
        x = np.asarray(x)
        return bool(x.shape == self.q.shape and np.all((x == 0) | (x == 1))
                    and np.all(x.sum(axis=0) == 1))

    def solve(self, p) -> LocalDecision:
        return assignment_solve(self, p)

    def decisions(self) -> DecisionSet:
        m, n = self.q.shape
        agents = np.array(list(itertools.product(range(m), repeat=n)), dtype=np.int64)
        agents = agents.reshape(-1, n)
        X = np.zeros((agents.shape[0], m, n), dtype=np.int8)
        cols = np.arange(n)
        for k, a in enumerate(agents):
            X[k, a, cols] = 1
        Xf = X.astype(float)
        R = (Xf * self.q).sum(axis=(1, 2))
        Y = (Xf * self.wload).sum(axis=2)
        return DecisionSet(R, X, Y)


def assignment_solve(step: AssignmentStep, p) -> LocalDecision:
    """Per-task argmax of ``q_ij - p_i w_ij`` (smallest agent index on ties)."""
    p = np.asarray(p, dtype=float)
    score = step.q - p[:, None] * step.wload
    agent = np.argmax(score, axis=0)
    x = np.zeros(step.q.shape, dtype=np.int8)
    x[agent, np.arange(step.n_t)] = 1
    return LocalDecision(step.reward(x), x, step.impact(x))


# ---------------------------------------------------------------------------

LocalStep = Union[KnapsackStep, AssortmentStep, AssignmentStep]


def oracle_value(step: LocalStep, p) -> float:
    """``max r - p.y`` over the step, i.e. minus the conjugate at ``p``."""
    d = step.solve(p)
    return float(d.r - np.asarray(p, dtype=float) @ d.y)
