"""Goal sets in Motzkin form ``Psi = Q + C`` and their geometric oracles.

Three variants are supported:

``Box``
    ``{y : lower <= y <= upper}``; ``Q = Psi`` and ``C = {0}``.
``MaxMinGap``
    ``{y : max_i y_i - min_i y_i <= rho}`` (optionally also ``y >= 0``);
    ``Q = [0, rho]^m`` and ``C`` is the line ``R * 1`` (signed) or the ray
    ``R_+ * 1`` (nonnegative).
``Boxed``
    ``inner ∩ Y`` for a box ``Y``; treated as compact, so ``Q`` is the whole
    intersection and ``C = {0}``.  Used by the boxed variant of the learner.

All oracles accept either a single point of shape ``(m,)`` or, where noted,
a batch of shape ``(N, m)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

MEMBERSHIP_TOL = 1e-9

CONE_ZERO = "zero"
CONE_LINE = "line"
CONE_RAY = "ray"


class GoalSpecError(ValueError):
    """Raised for malformed goal specifications."""


@dataclass(frozen=True)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).ravel()
        hi = np.asarray(self.upper, dtype=float).ravel()
        if lo.shape != hi.shape or lo.size == 0:
            raise GoalSpecError("lower and upper must be nonempty vectors of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise GoalSpecError("Box bounds must be finite (Q has to be compact)")
        if np.any(lo > hi):
            raise GoalSpecError("Box requires lower <= upper componentwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def m(self) -> int:
        return self.lower.size

    @property
    def full_dimensional(self) -> bool:
        return bool(np.all(self.lower < self.upper))


@dataclass(frozen=True)
class MaxMinGap:
    rho: float
    m: int
    nonneg: bool = True

    def __post_init__(self):
        if not np.isfinite(self.rho) or self.rho < 0:
            raise GoalSpecError("rho must be finite and >= 0")
        if int(self.m) < 1:
            raise GoalSpecError("m must be >= 1")
        object.__setattr__(self, "rho", float(self.rho))
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "nonneg", bool(self.nonneg))

    @property
    def full_dimensional(self) -> bool:
        return self.rho > 0


@dataclass(frozen=True)
class Boxed:
    inner: Union[Box, MaxMinGap]
    y_lower: np.ndarray
    y_upper: np.ndarray

    def __post_init__(self):
        if isinstance(self.inner, Boxed):
            raise GoalSpecError("Boxed goals cannot be nested")
        m = self.inner.m
        lo = np.broadcast_to(np.asarray(self.y_lower, dtype=float), (m,)).copy()
        hi = np.broadcast_to(np.asarray(self.y_upper, dtype=float), (m,)).copy()
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise GoalSpecError("y_box must be a finite box")
        if np.any(lo > hi):
            raise GoalSpecError("y_box must be nonempty")
        object.__setattr__(self, "y_lower", lo)
        object.__setattr__(self, "y_upper", hi)
        if isinstance(self.inner, Box):
            if np.any(np.maximum(lo, self.inner.lower) > np.minimum(hi, self.inner.upper)):
                raise GoalSpecError("goal set and y_box do not intersect")
        else:
            glo, ghi = _gap_bounds(self)
            if glo.max() - self.inner.rho > ghi.min():
                raise GoalSpecError("goal set and y_box do not intersect")

    @property
    def m(self) -> int:
        return self.inner.m

    @property
    def full_dimensional(self) -> bool:
        return self.inner.full_dimensional


GoalSpec = Union[Box, MaxMinGap, Boxed]


@dataclass(frozen=True)
class InstanceConstants:
    """Problem constants ``d_y``, ``d_r`` and the interior radius ``d_lower``."""

    d_y: float
    d_r: float
    d_lower: float
    m: int

    def __post_init__(self):
        if not (self.d_y >= 0 and self.d_r >= 0):
            raise GoalSpecError("d_y and d_r must be nonnegative")
        if not self.d_lower > 0:
            raise GoalSpecError("d_lower must be positive")

    def price_bound(self) -> float:
        """Norm bound on the price iterates when every stepsize is at most 1/m."""
        return (self.d_y ** 2 + 2 * self.d_r) / (2 * self.d_lower) + self.d_y / np.sqrt(self.m)

    def optimal_price_bound(self) -> float:
        return self.d_r / self.d_lower

    def to_dict(self) -> dict:
        return {"d_y": float(self.d_y), "d_r": float(self.d_r),
                "d_lower": float(self.d_lower), "m": int(self.m)}

    @classmethod
    def from_dict(cls, d: dict) -> "InstanceConstants":
        return cls(float(d["d_y"]), float(d["d_r"]), float(d["d_lower"]), int(d["m"]))


# ---------------------------------------------------------------------------
# structural queries


def cone_kind(goal: GoalSpec) -> str:
    if isinstance(goal, MaxMinGap):
        return CONE_RAY if goal.nonneg else CONE_LINE
    return CONE_ZERO


def q_box(goal: GoalSpec):
    """Bounds of ``Q`` when it is a box, else ``None`` (Boxed gap sets)."""
    if isinstance(goal, Box):
        return goal.lower, goal.upper
    if isinstance(goal, MaxMinGap):
        return np.zeros(goal.m), np.full(goal.m, goal.rho)
    if isinstance(goal.inner, Box):
        return (np.maximum(goal.inner.lower, goal.y_lower),
                np.minimum(goal.inner.upper, goal.y_upper))
    return None


def _gap_bounds(goal):
    """Per-coordinate bounds accompanying a gap constraint (may be infinite)."""
    if isinstance(goal, MaxMinGap):
        m = goal.m
        lo = np.zeros(m) if goal.nonneg else np.full(m, -np.inf)
        return lo, np.full(m, np.inf)
    inner = goal.inner
    lo = goal.y_lower.copy()
    if inner.nonneg:
        lo = np.maximum(lo, 0.0)
    return lo, goal.y_upper.copy()


# ---------------------------------------------------------------------------
# support point over Q


def support_point(goal: GoalSpec, p) -> np.ndarray:
    """Maximizer of ``p . v`` over ``Q``.

    Zero coefficients select the lower end of the feasible range, so the
    result is deterministic.
    """
    p = np.asarray(p, dtype=float)
    box = q_box(goal)
    if box is not None:
        lo, hi = box
        return np.where(p > 0, hi, lo)
    lo, hi = _gap_bounds(goal)
    return _gap_support(p, lo, hi, goal.inner.rho)


def support_value(goal: GoalSpec, p) -> float:
    """``h_Q(p)``; equals ``h_Psi(p)`` whenever ``p`` lies in the polar cone."""
    p = np.asarray(p, dtype=float)
    return float(p @ support_point(goal, p))


def _gap_support(p, lo, hi, rho):
    # v_i in [max(lo_i, l), min(hi_i, l + rho)] for a level l; the best value
    # is concave piecewise linear in l with kinks at lo_i and hi_i - rho.
    l_min = lo.max() - rho
    l_max = hi.min()
    cand = np.concatenate([lo, hi - rho, [l_min, l_max]])
    cand = np.unique(np.clip(cand, l_min, l_max))
    low = np.maximum(lo[None, :], cand[:, None])
    high = np.minimum(hi[None, :], cand[:, None] + rho)
    v = np.where(p[None, :] > 0, high, low)
    vals = v @ p
    best = vals.max()
    k = int(np.flatnonzero(vals >= best - 1e-12 * max(1.0, abs(best)))[0])
    return v[k]


# ---------------------------------------------------------------------------
# polar cone


def project_polar(goal: GoalSpec, u) -> np.ndarray:
    """Euclidean projection onto the polar cone of ``C``."""
    u = np.asarray(u, dtype=float)
    kind = cone_kind(goal)
    if kind == CONE_ZERO:
        return u.copy()
    if kind == CONE_LINE:
        return u - u.mean()
    s = u.sum()
    if s <= 0:
        return u.copy()
    return u - s / u.size


def in_polar(goal: GoalSpec, p, tol: float = MEMBERSHIP_TOL) -> bool:
    p = np.asarray(p, dtype=float)
    kind = cone_kind(goal)
    if kind == CONE_ZERO:
        return bool(np.all(np.isfinite(p)))
    s = p.sum()
    if kind == CONE_LINE:
        return abs(s) <= tol
    return s <= tol


def cone_generator(goal: GoalSpec):
    """Direction spanning ``C`` (``None`` for the trivial cone)."""
    if cone_kind(goal) == CONE_ZERO:
        return None
    return np.ones(goal.m)


# ---------------------------------------------------------------------------
# distance / projection onto Psi


def project_goal(goal: GoalSpec, y) -> np.ndarray:
    """Euclidean projection of ``y`` (shape ``(m,)`` or ``(N, m)``) onto the goal set."""
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    Y = np.atleast_2d(y)
    if isinstance(goal, Box):
        P = np.clip(Y, goal.lower, goal.upper)
    elif isinstance(goal, Boxed) and isinstance(goal.inner, Box):
        lo, hi = q_box(goal)
        P = np.clip(Y, lo, hi)
    else:
        lo, hi = _gap_bounds(goal)
        rho = goal.rho if isinstance(goal, MaxMinGap) else goal.inner.rho
        P = _gap_project(Y, lo, hi, rho)
    return P[0] if single else P


def distance_to_goal(goal: GoalSpec, y) -> Union[float, np.ndarray]:
    """Euclidean distance from ``y`` to the goal set (batch aware)."""
    y = np.asarray(y, dtype=float)
    d = np.linalg.norm(np.atleast_2d(y) - np.atleast_2d(project_goal(goal, y)), axis=1)
    return float(d[0]) if y.ndim == 1 else d


def contains(goal: GoalSpec, y, tol: float = MEMBERSHIP_TOL):
    return distance_to_goal(goal, y) <= tol


def _clip_gap(Y, l, lo, hi, rho):
    # Y: (N, m); l: (N, k) levels -> clipped points (N, k, m)
    a = np.maximum(lo[None, None, :], l[:, :, None])
    b = np.minimum(hi[None, None, :], l[:, :, None] + rho)
    return np.minimum(np.maximum(Y[:, None, :], a), b)


def _gap_project(Y, lo, hi, rho):
    """Exact projection onto ``{lo <= v <= hi, max v - min v <= rho}``.

    The squared distance is a convex piecewise quadratic function of the
    level ``l`` (``v_i`` confined to ``[l, l + rho]``).  Every piece is
    minimized in closed form and the best candidate kept.
    """
    N, m = Y.shape
    l_min = lo.max() - rho
    l_max = hi.min()
    fixed = np.concatenate([lo, hi - rho, [l_min, l_max]])
    fixed = fixed[np.isfinite(fixed)]
    bps = np.concatenate([Y, Y - rho, np.broadcast_to(fixed, (N, fixed.size))], axis=1)
    bps = np.sort(np.clip(bps, l_min, l_max), axis=1)

    # sample one interior point per piece, including the two unbounded ends
    left = np.where(np.isfinite(l_min), l_min, bps[:, :1] - 1.0)
    right = np.where(np.isfinite(l_max), l_max, bps[:, -1:] + 1.0)
    edges = np.concatenate([left, bps, right], axis=1)
    mids = 0.5 * (edges[:, :-1] + edges[:, 1:])

    # on each piece, a coordinate is pinned to l (below), l + rho (above),
    # or stays where it is / at a fixed bound
    below = (Y[:, None, :] < mids[:, :, None]) & (mids[:, :, None] >= lo[None, None, :])
    above = (Y[:, None, :] > mids[:, :, None] + rho) & (mids[:, :, None] + rho <= hi[None, None, :])
    cnt = below.sum(axis=2) + above.sum(axis=2)
    num = (np.where(below, Y[:, None, :], 0.0).sum(axis=2)
           + np.where(above, Y[:, None, :] - rho, 0.0).sum(axis=2))
    with np.errstate(invalid="ignore", divide="ignore"):
        stat = np.where(cnt > 0, num / np.maximum(cnt, 1), mids)
    stat = np.clip(stat, edges[:, :-1], edges[:, 1:])
    stat = np.clip(stat, l_min, l_max)

    cands = np.concatenate([bps, stat], axis=1)
    P = _clip_gap(Y, cands, lo, hi, rho)
    err = ((P - Y[:, None, :]) ** 2).sum(axis=2)
    k = err.argmin(axis=1)
    return P[np.arange(N), k]


# ---------------------------------------------------------------------------
# serialization


def goal_to_dict(goal: GoalSpec) -> dict:
    if isinstance(goal, Box):
        return {"kind": "box", "lower": goal.lower.tolist(), "upper": goal.upper.tolist()}
    if isinstance(goal, MaxMinGap):
        return {"kind": "maxmingap", "rho": goal.rho, "m": goal.m, "nonneg": goal.nonneg}
    return {"kind": "boxed", "inner": goal_to_dict(goal.inner),
            "y_lower": goal.y_lower.tolist(), "y_upper": goal.y_upper.tolist()}


def goal_from_dict(d: dict) -> GoalSpec:
    try:
        kind = d["kind"]
        if kind == "box":
            return Box(np.asarray(d["lower"], float), np.asarray(d["upper"], float))
        if kind == "maxmingap":
            return MaxMinGap(float(d["rho"]), int(d["m"]), bool(d.get("nonneg", True)))
        if kind == "boxed":
            return Boxed(goal_from_dict(d["inner"]), np.asarray(d["y_lower"], float),
                         np.asarray(d["y_upper"], float))
    except KeyError as exc:
        raise GoalSpecError(f"missing goal field {exc}") from None
    raise GoalSpecError(f"unknown goal kind {d.get('kind')!r}")
