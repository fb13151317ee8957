"""Seeded instance generators and the instance file format.

Families:

* ``okpfot``: online knapsack with fairness over time.  Per step,
  ``w_j ~ U(1, 1000)``, capacity ``0.3 * sum(w)``,
  ``U_ij ~ U(w_j - 20 i, w_j + 40 i)`` clamped at zero, goal
  ``{y >= 0 : max y - min y <= rho}``.
* ``aovc``: MNL assortment with visibility floors and a cardinality cap,
  using synthetic log-normal preference weights per customer type.
* ``assignment``: fair task assignment with a signed max-min gap goal.
* ``example2``: the two-phase budget stream that defeats any online policy.

Instance files are JSON lines (a header record, then one record per step).
``save_instance(..., binary=True)`` writes the same content into an ``.npz``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import NamedTuple, Optional, Sequence

import numpy as np

from . import goalset
from .goalset import Box, GoalSpec, InstanceConstants, MaxMinGap
from .input_models import Partition
from .oracles import AssignmentStep, AssortmentStep, KnapsackStep, LocalStep

FORMAT_NAME = "odmp-instance"
FORMAT_VERSION = 1


class InstanceError(ValueError):
    pass


class Instance(NamedTuple):
    steps: list
    goal: GoalSpec
    constants: Optional[InstanceConstants]
    header: dict

    @property
    def T(self) -> int:
        return len(self.steps)

    @property
    def family(self) -> str:
        return self.header.get("family", "custom")


def _rng(seed):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


# ---------------------------------------------------------------------------
# OKP-FOT


@dataclass(frozen=True)
class OkpFotConfig:
    n: int = 50
    m: int = 10
    T: int = 10_000
    rho: float = 100.0
    seed: int = 0

    def __post_init__(self):
        if min(self.n, self.m, self.T) < 1:
            raise InstanceError("n, m and T must be >= 1")
        if not self.rho > 0:
            raise InstanceError("rho must be positive")


def gen_okpfot(cfg: OkpFotConfig) -> Instance:
    rng = _rng(cfg.seed)
    rows = np.arange(1, cfg.m + 1, dtype=float)[:, None]
    steps, clamped = [], 0
    for _ in range(cfg.T):
        w = rng.uniform(1.0, 1000.0, size=cfg.n)
        U = rng.uniform(w[None, :] - 20.0 * rows, w[None, :] + 40.0 * rows)
        clamped += int(np.sum(U < 0))
        steps.append(KnapsackStep(w, 0.3 * w.sum(), np.maximum(U, 0.0)))
    goal = MaxMinGap(cfg.rho, cfg.m, nonneg=True)
    constants = okpfot_constants(steps, cfg.rho)
    header = {"family": "okpfot", "config": asdict(cfg), "seed": cfg.seed,
              "dims": {"n": cfg.n, "m": cfg.m, "T": cfg.T},
              "metadata": {"utility_clamped_at_zero": True, "clamped_entries": clamped}}
    return Instance(steps, goal, constants, header)


def okpfot_constants(steps: Sequence[KnapsackStep], rho: float) -> InstanceConstants:
    """``d_y`` from utility row sums, ``d_r`` the best single-step reward, ``d_lower = rho / 2``."""
    m = steps[0].m
    d_y = max(max(float(s.U.sum(axis=1).max()) for s in steps), rho)
    d_r = max(s.solve(np.zeros(m)).r for s in steps)
    return InstanceConstants(d_y, d_r, rho / 2.0, m)


# ---------------------------------------------------------------------------
# AOVC


@dataclass(frozen=True)
class AovcConfig:
    m: int = 40
    K: int = 16
    s: int = 10
    T: int = 10_000
    no_purchase_rate: float = 0.5
    type_weights: Optional[tuple] = None
    floor_share: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.s <= self.m:
            raise InstanceError("need 1 <= s <= m")
        if not 0 < self.no_purchase_rate < 1:
            raise InstanceError("no_purchase_rate must lie in (0, 1)")
        if self.K < 1 or self.T < 1:
            raise InstanceError("K and T must be >= 1")
        if self.type_weights is not None:
            tw = np.asarray(self.type_weights, dtype=float)
            if tw.size != self.K or np.any(tw < 0) or tw.sum() <= 0:
                raise InstanceError("type_weights must be K nonnegative numbers")
            object.__setattr__(self, "type_weights", tuple(float(v) for v in tw))
        if not 0 <= self.floor_share <= 0.5:
            raise InstanceError("floor_share must lie in [0, 0.5] so floors sum to at most s/2")


def _random_subsets(rng, m, s, count):
    keys = rng.random((count, m))
    idx = np.argpartition(keys, s - 1, axis=1)[:, :s]
    X = np.zeros((count, m))
    np.put_along_axis(X, idx, 1.0, axis=1)
    return X


def _no_purchase(X, v, scale):
    return float(np.mean(1.0 / (1.0 + scale * (X @ v))))


def calibrate_preferences(v: np.ndarray, s: int, rate: float, X: np.ndarray) -> float:
    """Scale making the mean no-purchase probability over assortments ``X`` equal ``rate``."""
    lo, hi = -30.0, 30.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _no_purchase(X, v, np.exp(mid)) > rate:
            lo = mid
        else:
            hi = mid
    return float(np.exp(0.5 * (lo + hi)))


def gen_aovc_synthetic(cfg: AovcConfig) -> Instance:
    """Synthetic MMNL assortment instance with per-type no-purchase calibration.

    Steps come in the order the customer types were drawn; apply an
    ``ArrivalOrder`` (uniform or batched by ``type_partition``) on top.
    """
    root = np.random.SeedSequence(cfg.seed)
    s_pref, s_rev, s_types, s_cal, s_check = root.spawn(5)
    rng = np.random.Generator(np.random.PCG64(s_pref))
    raw = rng.lognormal(0.0, 1.0, size=(cfg.K, cfg.m))
    cal_rng = np.random.Generator(np.random.PCG64(s_cal))
    X_cal = _random_subsets(cal_rng, cfg.m, cfg.s, 4000)
    pref = np.empty_like(raw)
    for k in range(cfg.K):
        pref[k] = raw[k] * calibrate_preferences(raw[k], cfg.s, cfg.no_purchase_rate, X_cal)

    revenue = np.random.Generator(np.random.PCG64(s_rev)).uniform(1.0, 10.0, size=cfg.m)

    tw = np.full(cfg.K, 1.0 / cfg.K) if cfg.type_weights is None else np.asarray(cfg.type_weights)
    types = np.random.Generator(np.random.PCG64(s_types)).choice(cfg.K, size=cfg.T, p=tw / tw.sum())
    steps = [AssortmentStep(revenue, pref[k], cfg.s, int(k)) for k in types]

    floors = np.full(cfg.m, cfg.floor_share * cfg.s / cfg.m)
    if floors.sum() > cfg.s:
        raise InstanceError("visibility floors exceed the assortment capacity")
    goal = Box(floors, np.ones(cfg.m))

    # interior point: every product shown with the same frequency theta <= s/m
    theta = min((floors.max() + 1.0) / 2.0, cfg.s / cfg.m)
    d_lower = min(theta - floors.max(), 1.0 - theta)
    if not d_lower > 0:
        raise InstanceError("floors leave no strictly feasible frequency vector")
    d_r = max(float(st.solve(np.zeros(cfg.m)).r) for st in _distinct_types(steps))
    constants = InstanceConstants(1.0, d_r, float(d_lower), cfg.m)

    X_check = _random_subsets(np.random.Generator(np.random.PCG64(s_check)), cfg.m, cfg.s, 10_000)
    mc = [_no_purchase(X_check, pref[k], 1.0) for k in range(cfg.K)]
    header = {"family": "aovc", "config": asdict(cfg), "seed": cfg.seed,
              "dims": {"m": cfg.m, "K": cfg.K, "s": cfg.s, "T": cfg.T},
              "metadata": {"preference_model": "lognormal(0,1) rescaled per type",
                           "no_purchase_mc": mc, "floors": floors.tolist()}}
    return Instance(steps, goal, constants, header)


def _distinct_types(steps):
    seen = {}
    for st in steps:
        seen.setdefault(st.type_id, st)
    return list(seen.values())


def type_partition(steps: Sequence[AssortmentStep]) -> Partition:
    """Partition of step indices by customer type."""
    return Partition.from_labels([st.type_id for st in steps])


# ---------------------------------------------------------------------------
# fair assignment


def gen_assignment(m: int, tasks_range=(1, 3), T: int = 100, rho: float = 5.0,
                   seed: int = 0) -> Instance:
    lo, hi = tasks_range
    if m < 1 or T < 1 or lo < 1 or hi < lo:
        raise InstanceError("invalid assignment dimensions")
    if not rho > 0:
        raise InstanceError("rho must be positive")
    rng = _rng(seed)
    steps = []
    for _ in range(T):
        n_t = int(rng.integers(lo, hi + 1))
        q = rng.uniform(0.0, 10.0, size=(m, n_t))
        wl = rng.uniform(0.0, 10.0, size=(m, n_t))
        steps.append(AssignmentStep(q, wl))
    goal = MaxMinGap(rho, m, nonneg=False)
    header = {"family": "assignment", "seed": seed,
              "config": {"m": m, "tasks_range": [lo, hi], "T": T, "rho": rho, "seed": seed},
              "dims": {"m": m, "T": T}, "metadata": {}}
    return Instance(steps, goal, assignment_constants(steps, rho), header)


def assignment_constants(steps: Sequence[AssignmentStep], rho: float) -> InstanceConstants:
    """``d_y = w_max``, ``d_r = q_max``, ``d_lower = rho / 2``."""
    w_max = max(float(st.wload.sum(axis=1).max()) for st in steps)
    q_max = max(float(st.q.max(axis=0).sum()) for st in steps)
    return InstanceConstants(w_max, q_max, rho / 2.0, steps[0].m)


def fair_mixture(step: AssignmentStep):
    """Weights over the "one agent takes every task" decisions equalizing workloads.

    Returns ``(lam, y_tilde)``; an agent with zero total workload takes
    everything on its own.
    """
    w_hat = step.wload.sum(axis=1)
    lam = np.zeros(step.m)
    zero = np.flatnonzero(w_hat == 0)
    if zero.size:
        lam[zero[0]] = 1.0
    else:
        inv = 1.0 / w_hat
        lam = inv / inv.sum()
    return lam, lam * w_hat


# ---------------------------------------------------------------------------
# two-phase budget stream


def gen_example2(T: int, scenario: str) -> Instance:
    """Phase 1 items: weight 2, reward 1.  Phase 2: (0, 0) under ``A``, (2, 2) under ``B``.

    The goal caps the average accepted weight at 1.
    """
    if T < 2 or T % 2:
        raise InstanceError("T must be a positive even number")
    if scenario not in ("A", "B"):
        raise InstanceError("scenario must be 'A' or 'B'")
    phase1 = KnapsackStep([2.0], 2.0, [[2.0]], [1.0])
    if scenario == "A":
        phase2 = KnapsackStep([1.0], 1.0, [[0.0]], [0.0])
    else:
        phase2 = KnapsackStep([2.0], 2.0, [[2.0]], [2.0])
    steps = [phase1] * (T // 2) + [phase2] * (T // 2)
    goal = Box([0.0], [1.0])
    constants = InstanceConstants(2.0, 2.0, 0.5, 1)
    header = {"family": "example2", "seed": None, "config": {"T": T, "scenario": scenario},
              "dims": {"m": 1, "T": T}, "metadata": {}}
    return Instance(steps, goal, constants, header)


def example2_offline_optimum(T: int, scenario: str) -> float:
    """Best total reward: all weights are 0 or 2, so filling the budget greedily is exact."""
    inst = gen_example2(T, scenario)
    free = sum(st.profit[0] for st in inst.steps if st.U[0, 0] == 0)
    heavy = sorted((st.profit[0] for st in inst.steps if st.U[0, 0] > 0), reverse=True)
    return float(free + sum(heavy[: T // 2]))


# ---------------------------------------------------------------------------
# assumption checks


def q_linf_distance(goal: GoalSpec, Y) -> np.ndarray:
    """``max_{v in Q} ||y - v||_inf`` for box-shaped ``Q`` (rows of ``Y``)."""
    box = goalset.q_box(goal)
    if box is None:
        raise InstanceError("Q is not a box for this goal")
    lo, hi = box
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    return np.maximum(np.abs(Y - lo), np.abs(Y - hi)).max(axis=1)


def check_assumptions(inst: Instance, prices_per_step: int = 3, seed: int = 0) -> dict:
    """Sampled verification of the standing assumptions on an instance.

    Decisions are sampled by solving each step at zero and a few random
    prices; their impacts must stay within ``d_y`` of ``Q`` in the sup norm.
    """
    c = inst.constants
    ok = c is not None and np.isfinite([c.d_y, c.d_r, c.d_lower]).all() and c.d_lower > 0
    rng = _rng(seed)
    worst = 0.0
    for st in inst.steps:
        prices = [np.zeros(inst.goal.m)] + [rng.normal(size=inst.goal.m)
                                            for _ in range(prices_per_step)]
        Y = np.array([st.solve(p).y for p in prices])
        worst = max(worst, float(q_linf_distance(inst.goal, Y).max()))
    return {"constants_ok": bool(ok), "max_impact_distance": worst,
            "impacts_within_d_y": bool(c is not None and worst <= c.d_y * (1 + 1e-12)),
            "full_dimensional": bool(inst.goal.full_dimensional)}


# ---------------------------------------------------------------------------
# serialization


def step_to_dict(step: LocalStep) -> dict:
    if isinstance(step, KnapsackStep):
        return {"kind": "knapsack", "w": step.w.tolist(), "W_cap": step.W_cap,
                "U": step.U.tolist(), "profit": step.profit.tolist()}
    if isinstance(step, AssortmentStep):
        return {"kind": "assortment", "revenue": step.revenue.tolist(),
                "pref": step.pref.tolist(), "s": step.s, "type_id": step.type_id}
    if isinstance(step, AssignmentStep):
        return {"kind": "assignment", "q": step.q.tolist(), "wload": step.wload.tolist()}
    raise InstanceError(f"cannot serialize step of type {type(step).__name__}")


def step_from_dict(d: dict) -> LocalStep:
    kind = d.get("kind")
    if kind == "knapsack":
        return KnapsackStep(np.array(d["w"], float), float(d["W_cap"]),
                            np.array(d["U"], float), np.array(d["profit"], float))
    if kind == "assortment":
        return AssortmentStep(np.array(d["revenue"], float), np.array(d["pref"], float),
                              int(d["s"]), int(d.get("type_id", 0)))
    if kind == "assignment":
        return AssignmentStep(np.array(d["q"], float), np.array(d["wload"], float))
    raise InstanceError(f"unknown step kind {kind!r}")


def _header_record(inst: Instance) -> dict:
    rec = {"format": FORMAT_NAME, "version": FORMAT_VERSION}
    rec.update({k: v for k, v in inst.header.items()})
    rec["goal"] = goalset.goal_to_dict(inst.goal)
    rec["constants"] = inst.constants.to_dict() if inst.constants is not None else None
    rec["T"] = inst.T
    return rec


def to_jsonl(inst: Instance) -> str:
    lines = [json.dumps(_header_record(inst), sort_keys=True)]
    for t, st in enumerate(inst.steps):
        rec = step_to_dict(st)
        rec["t"] = t
        lines.append(json.dumps(rec, sort_keys=True))
    return "\n".join(lines) + "\n"


def instance_hash(inst: Instance) -> str:
    return hashlib.sha256(to_jsonl(inst).encode()).hexdigest()


def from_jsonl(text: str) -> Instance:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise InstanceError("empty instance file")
    try:
        head = json.loads(lines[0])
        recs = [json.loads(ln) for ln in lines[1:]]
    except json.JSONDecodeError as exc:
        raise InstanceError(f"corrupt instance file: {exc}") from None
    return _assemble(head, recs)


def _assemble(head: dict, recs: list) -> Instance:
    if head.get("format") != FORMAT_NAME:
        raise InstanceError("not an instance file")
    if head.get("version") != FORMAT_VERSION:
        raise InstanceError(f"unsupported instance version {head.get('version')}")
    recs = sorted(recs, key=lambda r: r["t"])
    if len(recs) != head.get("T", len(recs)):
        raise InstanceError("step count does not match header")
    steps = [step_from_dict(r) for r in recs]
    goal = goalset.goal_from_dict(head["goal"])
    constants = InstanceConstants.from_dict(head["constants"]) if head.get("constants") else None
    header = {k: v for k, v in head.items()
              if k not in ("format", "version", "goal", "constants", "T")}
    return Instance(steps, goal, constants, header)


def save_instance(inst: Instance, path, binary: bool = False) -> str:
    """Write an instance; returns the content hash of its canonical text form."""
    path = Path(path)
    text = to_jsonl(inst)
    if binary:
        arrays = {"header": np.frombuffer(json.dumps(_header_record(inst), sort_keys=True)
                                          .encode(), dtype=np.uint8)}
        for t, st in enumerate(inst.steps):
            for key, val in step_to_dict(st).items():
                arrays[f"s{t}.{key}"] = (np.frombuffer(val.encode(), dtype=np.uint8)
                                         if isinstance(val, str) else np.asarray(val))
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)
    else:
        path.write_text(text)
    return hashlib.sha256(text.encode()).hexdigest()


def load_instance(path) -> Instance:
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic.startswith(b"PK"):
        with np.load(path) as z:
            head = json.loads(bytes(z["header"]).decode())
            recs = {}
            for key in z.files:
                if key == "header":
                    continue
                t, field = key[1:].split(".", 1)
                val = z[key]
                if field == "kind":
                    val = bytes(val).decode()
                elif val.ndim == 0:
                    val = val.item()
                else:
                    val = val.tolist()
                recs.setdefault(int(t), {"t": int(t)})[field] = val
        return _assemble(head, list(recs.values()))
    return from_jsonl(path.read_text())
