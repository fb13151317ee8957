"""Arrival orders over a fixed family of steps.

Time steps are 0-based here: ``order[t]`` is the index of the base step
that arrives at position ``t``.  Named partitions follow the 1-based
calendar conventions (day ``t = 1`` is a Monday, period classes are
``((t - 1) mod K) + 1``) and return 0-based index arrays.

Randomness comes from numpy's PCG64 seeded through ``SeedSequence``, with
one spawned child stream per group, so orders are reproducible across
platforms.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class PartitionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Partition:
    groups: tuple
    labels: tuple = ()

    def __post_init__(self):
        groups = tuple(np.sort(np.asarray(g, dtype=np.int64).ravel()) for g in self.groups)
        if not groups or any(g.size == 0 for g in groups):
            raise PartitionError("partition groups must be nonempty")
        allidx = np.concatenate(groups)
        T = allidx.size
        if not np.array_equal(np.sort(allidx), np.arange(T)):
            raise PartitionError("groups must be disjoint and cover 0..T-1")
        labels = tuple(self.labels) or tuple(f"group{k + 1}" for k in range(len(groups)))
        if len(labels) != len(groups):
            raise PartitionError("one label per group")
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "labels", labels)

    @property
    def T(self) -> int:
        return sum(g.size for g in self.groups)

    @property
    def K(self) -> int:
        return len(self.groups)

    def group_of(self) -> np.ndarray:
        out = np.empty(self.T, dtype=np.int64)
        for k, g in enumerate(self.groups):
            out[g] = k
        return out

    def to_dict(self) -> dict:
        return {"groups": [g.tolist() for g in self.groups], "labels": list(self.labels)}

    @classmethod
    def from_dict(cls, d: dict) -> "Partition":
        return cls(tuple(d["groups"]), tuple(d.get("labels", ())))

    @classmethod
    def from_labels(cls, labels: Sequence[int]) -> "Partition":
        """Group indices by an integer label per position (labels sorted ascending)."""
        labels = np.asarray(labels)
        keys = np.unique(labels)
        return cls(tuple(np.flatnonzero(labels == k) for k in keys),
                   tuple(f"type{int(k)}" for k in keys))


@dataclass(frozen=True, eq=False)
class ArrivalOrder:
    order: np.ndarray
    model: str = "identity"
    seed: Optional[int] = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        order = np.asarray(self.order, dtype=np.int64).ravel()
        if not np.array_equal(np.sort(order), np.arange(order.size)):
            raise PartitionError("an arrival order must be a permutation")
        object.__setattr__(self, "order", order)

    @property
    def T(self) -> int:
        return self.order.size

    def apply(self, steps: Sequence) -> list:
        if len(steps) != self.T:
            raise ValueError("order length does not match the step family")
        return [steps[i] for i in self.order]

    def to_dict(self) -> dict:
        return {"model": self.model, "seed": self.seed, "order": self.order.tolist(), **self.extra}


def _generator(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def identity_order(T: int) -> ArrivalOrder:
    return ArrivalOrder(np.arange(T), "identity")


def uniform_permutation(T: int, seed: int) -> ArrivalOrder:
    """Uniformly random permutation of ``0..T-1`` (Fisher-Yates via PCG64)."""
    if T < 1:
        raise ValueError("T must be >= 1")
    return ArrivalOrder(_generator(seed).permutation(T), "uniform", seed)


def grouped_permutation(partition: Partition, seed: int) -> ArrivalOrder:
    """Shuffle each group's items among that group's own time slots."""
    order = np.arange(partition.T)
    children = np.random.SeedSequence(seed).spawn(partition.K)
    for g, ss in zip(partition.groups, children):
        rng = np.random.Generator(np.random.PCG64(ss))
        order[g] = rng.permutation(g)
    return ArrivalOrder(order, "grouped", seed, {"K": partition.K})


def batched_order(partition: Partition) -> ArrivalOrder:
    """Group 1's items in ascending order, then group 2's, and so on."""
    return ArrivalOrder(np.concatenate(partition.groups), "batched", None, {"K": partition.K})


def named_partition(kind: str, T: int, K: Optional[int] = None) -> Partition:
    """Calendar partitions: ``weekday_weekend``, ``half_half`` or ``k_periodic``."""
    if T < 1:
        raise PartitionError("T must be >= 1")
    t = np.arange(1, T + 1)
    if kind == "weekday_weekend":
        day = ((t - 1) % 7) + 1
        groups = (np.flatnonzero(day <= 5), np.flatnonzero(day > 5))
        labels = ("weekday", "weekend")
    elif kind == "half_half":
        groups = (np.flatnonzero(t <= T / 2), np.flatnonzero(t > T / 2))
        labels = ("first_half", "second_half")
    elif kind == "k_periodic":
        if K is None or K < 1 or K > T:
            raise PartitionError("k_periodic needs 1 <= K <= T")
        cls = ((t - 1) % K) + 1
        groups = tuple(np.flatnonzero(cls == k) for k in range(1, K + 1))
        labels = tuple(f"class{k}" for k in range(1, K + 1))
    else:
        raise PartitionError(f"unknown partition kind {kind!r}")
    keep = [(g, lab) for g, lab in zip(groups, labels) if g.size]
    return Partition(tuple(g for g, _ in keep), tuple(lab for _, lab in keep))
