"""Online dual price learning and offline dual benchmarks.

``run_online`` is the primal-dual loop: at every step the local oracle is
solved at the current price, the goal support point is taken over ``Q``,
and the price moves by a projected subgradient step onto the polar cone.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import goalset
from .goalset import Boxed, GoalSpec, InstanceConstants
from .oracles import LocalStep


class ScheduleError(ValueError):
    """Invalid stepsize configuration."""


class NumericalGuardError(RuntimeError):
    """An internal invariant of the learner was violated."""


@dataclass(frozen=True)
class StepSchedule:
    gamma: float = 1.0
    mode: str = "diminishing"
    horizon_T: Optional[int] = None

    def __post_init__(self):
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise ScheduleError("gamma must be a positive finite number")
        if self.mode not in ("diminishing", "constant"):
            raise ScheduleError(f"unknown schedule mode {self.mode!r}")
        if self.horizon_T is not None and self.horizon_T < 1:
            raise ScheduleError("horizon_T must be >= 1")

    def to_dict(self) -> dict:
        return {"gamma": self.gamma, "mode": self.mode, "horizon_T": self.horizon_T}


def step_size(sched: StepSchedule, t: int, m: int) -> float:
    """``min(gamma/m, gamma/sqrt(m t))``, or ``gamma/sqrt(m T)`` in constant mode."""
    if t < 1 or m < 1:
        raise ScheduleError("t and m must be >= 1")
    if sched.mode == "constant":
        if sched.horizon_T is None:
            raise ScheduleError("constant stepsizes need horizon_T")
        return sched.gamma / math.sqrt(m * sched.horizon_T)
    return min(sched.gamma / m, sched.gamma / math.sqrt(m * t))


def step_sizes(sched: StepSchedule, T: int, m: int) -> np.ndarray:
    return np.array([step_size(sched, t, m) for t in range(1, T + 1)])


@dataclass
class DualState:
    p: np.ndarray
    t: int = 1
    cum_y: Optional[np.ndarray] = None
    cum_r: float = 0.0

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        if self.cum_y is None:
            self.cum_y = np.zeros_like(self.p)


@dataclass(frozen=True)
class StepRecord:
    t: int
    p_norm: float
    r_hat: float
    y_hat: np.ndarray
    v_hat: np.ndarray
    eta: float
    oracle_obj: float
    p: np.ndarray


@dataclass
class RunTrace:
    """Everything a run produced, stored column-wise.

    ``prices`` has ``T + 1`` rows (``p^1 .. p^{T+1}``); the remaining arrays
    have one row per step.
    """

    goal: GoalSpec
    prices: np.ndarray
    rewards: np.ndarray
    impacts: np.ndarray
    supports: np.ndarray
    etas: np.ndarray
    oracle_obj: np.ndarray
    decisions: list = field(default_factory=list, repr=False)
    constants: Optional[InstanceConstants] = None
    config: dict = field(default_factory=dict)

    @property
    def T(self) -> int:
        return self.rewards.size

    @property
    def m(self) -> int:
        return self.prices.shape[1]

    @property
    def p_norms(self) -> np.ndarray:
        return np.linalg.norm(self.prices[:-1], axis=1)

    @property
    def records(self) -> list:
        return [StepRecord(t + 1, float(np.linalg.norm(self.prices[t])), float(self.rewards[t]),
                           self.impacts[t], self.supports[t], float(self.etas[t]),
                           float(self.oracle_obj[t]), self.prices[t])
                for t in range(self.T)]

    def final_state(self) -> DualState:
        return DualState(self.prices[-1].copy(), self.T + 1,
                         self.impacts.sum(axis=0), float(self.rewards.sum()))

    def support_values(self) -> np.ndarray:
        """``h_Psi(p^t)`` per step, read off the recorded support points."""
        return np.einsum("ij,ij->i", self.prices[:-1], self.supports)


def run_online(stream: Iterable[LocalStep], goal: GoalSpec, sched: StepSchedule = StepSchedule(),
               constants: Optional[InstanceConstants] = None, config: Optional[dict] = None,
               resume: Optional[RunTrace] = None,
               checkpoint: Optional[Callable[[RunTrace], None]] = None,
               checkpoint_every: int = 10_000,
               on_step: Optional[Callable[[int, np.ndarray], None]] = None,
               assert_bound: bool = True) -> RunTrace:
    """Run the dual-based online algorithm over ``stream``.

    Steps are pulled from ``stream`` one at a time, so a lazy iterator sees
    step ``t`` only after step ``t - 1`` is committed.  With ``resume`` the
    run continues from a prefix trace (skipping that many stream items).
    When ``constants`` is given and every stepsize is at most ``1/m``, the
    dual norm bound is asserted at every step (``assert_bound=False`` leaves
    the check to the caller, see ``price_bound_check``).
    """
    m = goal.m
    prices = [np.zeros(m)]
    rewards, impacts, supports, etas, objs, decisions = [], [], [], [], [], []
    skip = 0
    if resume is not None:
        skip = resume.T
        prices = [row.copy() for row in resume.prices]
        rewards, etas, objs = list(resume.rewards), list(resume.etas), list(resume.oracle_obj)
        impacts, supports = list(resume.impacts), list(resume.supports)
        decisions = list(resume.decisions)
    bound = constants.price_bound() if (constants is not None and assert_bound) else None
    y_box = (goal.y_lower, goal.y_upper) if isinstance(goal, Boxed) else None
    warned = False

    def snapshot():
        return _make_trace(goal, prices, rewards, impacts, supports, etas, objs, decisions,
                           constants, config)

    p = prices[-1]
    for idx, step in enumerate(stream):
        if idx < skip:
            continue
        t = idx + 1
        if step.m != m:
            raise ValueError(f"step {t} has impact dimension {step.m}, goal has {m}")
        if on_step is not None:
            on_step(t, p)
        dec = step.solve(p)
        v = goalset.support_point(goal, p)
        eta = step_size(sched, t, m)
        if eta > (1.0 + 1e-12) / m:
            bound = None  # the norm bound only covers stepsizes <= 1/m
        y = np.asarray(dec.y, dtype=float)
        if y_box is not None and not warned and (np.any(y < y_box[0]) or np.any(y > y_box[1])):
            warnings.warn(f"impact at step {t} leaves the declared y_box", RuntimeWarning)
            warned = True
        new_p = goalset.project_polar(goal, p - eta * (v - y))
        if not goalset.in_polar(goal, new_p, 1e-9 * max(1.0, float(np.abs(new_p).max()))):
            raise NumericalGuardError(f"price left the polar cone at step {t}")
        if bound is not None and np.linalg.norm(new_p) > bound:
            raise NumericalGuardError(f"dual norm bound violated at step {t + 1}")
        rewards.append(float(dec.r))
        impacts.append(y)
        supports.append(v)
        etas.append(eta)
        objs.append(float(dec.r - p @ y))
        decisions.append(dec.x)
        prices.append(new_p)
        p = new_p
        if checkpoint is not None and t % checkpoint_every == 0:
            checkpoint(snapshot())
    if not rewards:
        raise ValueError("empty stream")
    return snapshot()


def _make_trace(goal, prices, rewards, impacts, supports, etas, objs, decisions,
                constants, config) -> RunTrace:
    m = goal.m
    return RunTrace(goal=goal, prices=np.array(prices, dtype=float).reshape(-1, m),
                    rewards=np.array(rewards, dtype=float),
                    impacts=np.array(impacts, dtype=float).reshape(-1, m),
                    supports=np.array(supports, dtype=float).reshape(-1, m),
                    etas=np.array(etas, dtype=float), oracle_obj=np.array(objs, dtype=float),
                    decisions=list(decisions), constants=constants, config=dict(config or {}))


def run_online_boxed(stream: Iterable[LocalStep], inner_goal: GoalSpec, y_box,
                     sched: StepSchedule = StepSchedule(), **kwargs) -> RunTrace:
    """Same loop with the goal replaced by ``inner_goal ∩ Y``.

    ``y_box`` is a pair ``(lower, upper)`` of scalars or m-vectors.  Impacts
    falling outside the box trigger a single ``RuntimeWarning``.
    """
    lo, hi = y_box
    return run_online(stream, Boxed(inner_goal, lo, hi), sched, **kwargs)


# ---------------------------------------------------------------------------
# offline dual


def _dual_value_and_subgradient(steps: Sequence[LocalStep], goal: GoalSpec, p):
    v = goalset.support_point(goal, p)
    h = float(p @ v)
    total = 0.0
    ysum = np.zeros(goal.m)
    for step in steps:
        d = step.solve(p)
        total += h + d.r - float(p @ d.y)
        ysum += d.y
    return total, len(steps) * v - ysum


def dual_objective(stream: Sequence[LocalStep], goal: GoalSpec, p) -> float:
    """``sum_t [h_Psi(p) + max_{Omega^t} (r - p.y)]``; ``inf`` outside the polar cone."""
    p = np.asarray(p, dtype=float)
    if not goalset.in_polar(goal, p, 1e-9 * max(1.0, float(np.abs(p).max(initial=0.0)))):
        return math.inf
    return _dual_value_and_subgradient(list(stream), goal, p)[0]


@dataclass(frozen=True)
class DualEstimate:
    p_star: np.ndarray
    zF_upper: float
    history: np.ndarray  # best-so-far dual value after each iteration


def estimate_dual_optimum(stream: Sequence[LocalStep], goal: GoalSpec, iters: int = 200,
                          seed: int = 0, constants: Optional[InstanceConstants] = None,
                          radius: Optional[float] = None, restarts: int = 0,
                          patience: int = 8) -> DualEstimate:
    """Projected subgradient descent on the offline dual.

    Steps are ``c / sqrt(k)`` along the normalized subgradient.  The scale
    ``c`` starts at the norm bound ``d_r / d_lower`` on an optimal price
    (or ``radius``) and is halved whenever ``patience`` iterations pass
    without improving the incumbent.  Any price in the polar cone gives an
    upper bound on the offline optimum, so the returned value is valid
    whatever the convergence.  ``restarts`` adds seeded random starting
    points; the seed has no other effect.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    steps = list(stream)
    if radius is None:
        radius = constants.optimal_price_bound() if constants is not None else 1.0
    rng = np.random.default_rng(seed)
    starts = [np.zeros(goal.m)]
    for _ in range(restarts):
        starts.append(goalset.project_polar(goal, rng.normal(scale=radius / math.sqrt(goal.m),
                                                             size=goal.m)))
    best_val, best_p = math.inf, starts[0]
    history = []
    per_start = max(1, iters // len(starts))
    for p in starts:
        scale, stall, k = radius, 0, 0
        for _ in range(per_start):
            val, g = _dual_value_and_subgradient(steps, goal, p)
            if not math.isfinite(best_val) or val < best_val - 1e-12 * max(1.0, abs(best_val)):
                best_val, best_p, stall = val, p.copy(), 0
            else:
                stall += 1
                if stall >= patience:
                    scale *= 0.5
                    stall = 0
                    p = best_p.copy()
            history.append(best_val)
            gn = np.linalg.norm(g)
            if gn == 0:
                break
            k += 1
            p = goalset.project_polar(goal, p - scale / math.sqrt(k) * g / gn)
    return DualEstimate(best_p, float(best_val), np.array(history))


def price_bound_check(trace: RunTrace, constants: Optional[InstanceConstants] = None) -> dict:
    """Compare the largest price norm of a trace with the stepsize-<=-1/m bound."""
    constants = constants or trace.constants
    if constants is None:
        return {"applicable": False}
    max_norm = float(np.linalg.norm(trace.prices, axis=1).max())
    bound = constants.price_bound()
    applicable = bool(np.all(trace.etas <= (1.0 + 1e-12) / trace.m))
    return {"applicable": applicable, "max_p_norm": max_norm, "bound": float(bound),
            "violations": int(np.sum(np.linalg.norm(trace.prices, axis=1) > bound)),
            "holds": bool(max_norm <= bound) if applicable else None}


def dual_regret(trace: RunTrace, zR_reference: float) -> float:
    """Sum of per-step dual losses at the played prices minus a reference value."""
    return float(np.sum(trace.support_values() + trace.oracle_obj) - zR_reference)
