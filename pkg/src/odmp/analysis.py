"""Evaluation quantities, unevenness of partitions, and offline baselines."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np

from . import goalset
from .dual_learner import RunTrace, StepSchedule, run_online, step_sizes
from .goalset import Boxed, GoalSpec
from .input_models import Partition
from .instances import example2_offline_optimum, gen_example2

DEFAULT_BRUTEFORCE_LIMIT = 20_000_000


class SizeLimitError(ValueError):
    pass


def metric_goal(goal: GoalSpec) -> GoalSpec:
    """Goal that violation is measured against; a ``Boxed`` run is scored on its inner set."""
    return goal.inner if isinstance(goal, Boxed) else goal


# ---------------------------------------------------------------------------
# metric series


class SeriesView(NamedTuple):
    t: np.ndarray
    reward_avg: np.ndarray
    goalvio_avg: np.ndarray
    p_norm: np.ndarray
    eta: np.ndarray


@dataclass(frozen=True, eq=False)
class MetricSeries:
    """Per-seed trajectories, one row per seed, one column per step ``t = 1..T``."""

    t: np.ndarray
    reward_avg: np.ndarray
    goalvio_avg: np.ndarray
    p_norm: np.ndarray
    eta: np.ndarray
    labels: tuple = ()

    def __post_init__(self):
        T = self.t.size
        for name in ("reward_avg", "goalvio_avg", "p_norm", "eta"):
            arr = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            if arr.shape[1] != T:
                raise ValueError(f"{name} has {arr.shape[1]} columns, expected {T}")
            object.__setattr__(self, name, arr)
        if np.any(self.goalvio_avg < 0):
            raise ValueError("negative goal violation")
        if not self.labels:
            object.__setattr__(self, "labels", tuple(str(i) for i in range(self.n_seeds)))

    @property
    def T(self) -> int:
        return self.t.size

    @property
    def n_seeds(self) -> int:
        return self.reward_avg.shape[0]

    def _view(self, fn) -> SeriesView:
        return SeriesView(self.t, fn(self.reward_avg, axis=0), fn(self.goalvio_avg, axis=0),
                          fn(self.p_norm, axis=0), fn(self.eta, axis=0))

    @property
    def mean(self) -> SeriesView:
        return self._view(np.mean)

    @property
    def min(self) -> SeriesView:
        return self._view(np.min)

    @property
    def max(self) -> SeriesView:
        return self._view(np.max)

    def seed(self, k: int) -> SeriesView:
        return SeriesView(self.t, self.reward_avg[k], self.goalvio_avg[k], self.p_norm[k],
                          self.eta[k])

    def final(self) -> dict:
        """Mean, min and max of the end-of-horizon values across seeds."""
        out = {}
        for name in ("reward_avg", "goalvio_avg", "p_norm"):
            col = getattr(self, name)[:, -1]
            out[name] = {"mean": float(col.mean()), "min": float(col.min()),
                         "max": float(col.max())}
        return out


def compute_metrics(trace: RunTrace, label: str = "0") -> MetricSeries:
    t = np.arange(1, trace.T + 1)
    reward_avg = np.cumsum(trace.rewards) / t
    y_avg = np.cumsum(trace.impacts, axis=0) / t[:, None]
    goalvio = np.atleast_1d(goalset.distance_to_goal(metric_goal(trace.goal), y_avg))
    return MetricSeries(t, reward_avg, goalvio, trace.p_norms, trace.etas, (label,))


def aggregate(series: Sequence[MetricSeries]) -> MetricSeries:
    """Stack single- or multi-seed series over a common horizon."""
    if not series:
        raise ValueError("nothing to aggregate")
    t = series[0].t
    if any(not np.array_equal(s.t, t) for s in series):
        raise ValueError("series have different horizons")
    cat = lambda name: np.vstack([getattr(s, name) for s in series])
    labels = tuple(lab for s in series for lab in s.labels)
    return MetricSeries(t, cat("reward_avg"), cat("goalvio_avg"), cat("p_norm"), cat("eta"), labels)


def loglog_slope(series, window: Optional[tuple] = None) -> float:
    """Least-squares slope of ``log(goalvio_avg)`` against ``log(t)``.

    ``series`` is a ``MetricSeries`` (its seed mean is used), a
    ``SeriesView`` or a ``(t, values)`` pair.  The default window is
    ``[T/10, T]``.  Returns ``-inf`` when any value in the window is
    nonpositive, meaning the series has already reached zero.
    """
    if isinstance(series, MetricSeries):
        series = series.mean
    if isinstance(series, SeriesView):
        t, vals = series.t, series.goalvio_avg
    else:
        t, vals = series
    t = np.asarray(t, dtype=float)
    vals = np.asarray(vals, dtype=float)
    lo, hi = window if window is not None else (t[-1] / 10.0, t[-1])
    mask = (t >= lo) & (t <= hi)
    if mask.sum() < 2:
        raise ValueError("window holds fewer than two points")
    if np.any(vals[mask] <= 0):
        return -math.inf
    return float(np.polyfit(np.log(t[mask]), np.log(vals[mask]), 1)[0])


# ---------------------------------------------------------------------------
# unevenness


@dataclass(frozen=True, eq=False)
class UnevennessReport:
    w: np.ndarray
    W: float
    positions: np.ndarray
    sizes: np.ndarray

    def to_dict(self) -> dict:
        return {"w": self.w.tolist(), "W": self.W, "sizes": self.sizes.tolist()}


def stepsize_positions(etas) -> np.ndarray:
    """``S_t = sum_{tau < t} eta^tau``, so the ground distance is ``|S_j - S_i|``."""
    etas = np.asarray(etas, dtype=float)
    return np.concatenate(([0.0], np.cumsum(etas[:-1])))


def group_transport_cost(positions: np.ndarray, group) -> float:
    """1-Wasserstein distance between uniform mass on ``group`` and on all positions.

    Positions are nondecreasing, so the distance is the integral of the CDF
    gap over consecutive positions.
    """
    T = positions.size
    n = len(group)
    hits = np.zeros(T, dtype=np.int64)
    hits[np.asarray(group)] = 1
    # integer numerator keeps identical CDFs at exactly zero
    gap = (np.cumsum(hits) * T - np.arange(1, T + 1) * n) / (n * T)
    return float(np.sum(np.abs(gap[:-1]) * np.diff(positions)))


def unevenness(partition: Partition, sched: Union[StepSchedule, Sequence[float]],
               m: int) -> UnevennessReport:
    """Per-group transport costs ``w`` and ``W = sum_k m |T^k| w^k``.

    ``sched`` is a stepsize schedule or the explicit stepsizes.
    """
    T = partition.T
    etas = step_sizes(sched, T, m) if isinstance(sched, StepSchedule) else np.asarray(sched, float)
    if etas.size != T:
        raise ValueError("need one stepsize per time step")
    pos = stepsize_positions(etas)
    w = np.array([group_transport_cost(pos, g) for g in partition.groups])
    sizes = np.array([g.size for g in partition.groups])
    return UnevennessReport(w, float(np.sum(m * sizes * w)), pos, sizes)


@lru_cache(maxsize=64)
def _column_subsets(n: int, r: int) -> np.ndarray:
    return np.array(list(combinations(range(n), r)), dtype=np.int64).reshape(-1, r)


def transport_lp_bruteforce(supply, demand, cost, chunk: int = 200_000) -> float:
    """Transportation LP optimum by enumerating every basic solution.

    Balanced problem ``min sum c_ij q_ij`` with row sums ``supply`` and column
    sums ``demand``; one redundant column constraint is dropped and every
    square subsystem is solved.
    """
    supply = np.asarray(supply, dtype=float)
    demand = np.asarray(demand, dtype=float)
    cost = np.asarray(cost, dtype=float)
    a, b = supply.size, demand.size
    nv = a * b
    A = np.zeros((a + b, nv))
    for i in range(a):
        A[i, i * b:(i + 1) * b] = 1.0
    for j in range(b):
        A[a + j, j::b] = 1.0
    rhs = np.concatenate((supply, demand))
    A, rhs = A[:-1], rhs[:-1]
    r = a + b - 1
    c = cost.ravel()
    best = math.inf
    subsets = _column_subsets(nv, r)
    for start in range(0, subsets.shape[0], chunk):
        cols = subsets[start:start + chunk]
        B = np.transpose(A[:, cols], (1, 0, 2))
        ok = np.abs(np.linalg.det(B)) > 1e-9
        if not ok.any():
            continue
        q = np.linalg.solve(B[ok], np.broadcast_to(rhs, (ok.sum(), r))[..., None])[..., 0]
        feas = np.all(q >= -1e-12, axis=1)
        if feas.any():
            vals = np.einsum("ij,ij->i", q[feas], c[cols[ok][feas]])
            best = min(best, float(vals.min()))
    return best


def group_transport_lp(positions, group) -> float:
    """Same quantity as ``group_transport_cost`` solved as a generic LP."""
    positions = np.asarray(positions, dtype=float)
    group = np.asarray(group)
    T = positions.size
    supply = np.full(group.size, 1.0 / group.size)
    demand = np.full(T, 1.0 / T)
    cost = np.abs(positions[group][:, None] - positions[None, :])
    return transport_lp_bruteforce(supply, demand, cost)


# ---------------------------------------------------------------------------
# offline baseline


class OfflineOptimum(NamedTuple):
    z_star: float
    decisions: Optional[list]
    feasible: bool
    combinations: int


def offline_bruteforce(steps: Sequence, goal: GoalSpec, limit: int = DEFAULT_BRUTEFORCE_LIMIT,
                       chunk: int = 1 << 18, tol: float = goalset.MEMBERSHIP_TOL) -> OfflineOptimum:
    """Exact offline optimum over all combinations of per-step decisions.

    A combination counts when the average impact is within ``tol`` of the
    goal.  Ties go to the first combination in lexicographic order (step 1
    most significant).  ``z_star`` is ``-inf`` when nothing is feasible.
    """
    sets = [st.decisions() for st in steps]
    sizes = [len(d.r) for d in sets]
    total = math.prod(sizes)
    if total > limit:
        raise SizeLimitError(f"{total} decision combinations exceed the limit {limit}")
    T = len(steps)
    radix = np.array([math.prod(sizes[k + 1:]) for k in range(T)], dtype=np.int64)
    best, best_idx = -math.inf, -1
    for start in range(0, total, chunk):
        flat = np.arange(start, min(total, start + chunk), dtype=np.int64)
        r = np.zeros(flat.size)
        y = np.zeros((flat.size, goal.m))
        for k, d in enumerate(sets):
            digit = (flat // radix[k]) % sizes[k]
            r += d.r[digit]
            y += d.y[digit]
        ok = np.atleast_1d(goalset.distance_to_goal(goal, y / T)) <= tol
        if ok.any():
            cand = np.where(ok, r, -np.inf)
            i = int(np.argmax(cand))
            if cand[i] > best:
                best, best_idx = float(cand[i]), int(flat[i])
    if best_idx < 0:
        return OfflineOptimum(-math.inf, None, False, total)
    digits = [(best_idx // int(radix[k])) % sizes[k] for k in range(T)]
    return OfflineOptimum(best, [sets[k].x[d] for k, d in enumerate(digits)], True, total)


# ---------------------------------------------------------------------------
# two-phase budget stream


def example2_gap(T: int, sched: StepSchedule = StepSchedule()) -> tuple:
    """``Reward / z*`` of the online algorithm under both phase-2 scenarios."""
    ratios = []
    for scenario in ("A", "B"):
        inst = gen_example2(T, scenario)
        trace = run_online(inst.steps, inst.goal, sched, assert_bound=False)
        ratios.append(float(trace.rewards.sum()) / example2_offline_optimum(T, scenario))
    return tuple(ratios)
