"""Student-level K-fold assignment."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .encoding import derive_labels
from .records import DataError, StudentRecord


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignment: Mapping[str, int]

    def __post_init__(self):
        if self.k < 2:
            raise DataError(f"K must be >= 2, got {self.k}")
        bad = {s: f for s, f in self.assignment.items() if not 0 <= f < self.k}
        if bad:
            raise DataError(f"fold indices outside [0, {self.k}): {bad}")

    def test_ids(self, fold: int) -> list[str]:
        return [s for s, f in self.assignment.items() if f == fold]

    def train_ids(self, fold: int) -> list[str]:
        return [s for s, f in self.assignment.items() if f != fold]

    def sizes(self) -> list[int]:
        counts = [0] * self.k
        for f in self.assignment.values():
            counts[f] += 1
        return counts

    def to_dict(self) -> dict:
        return {"k": self.k, "assignment": dict(self.assignment)}


def kfold_split(
    records: Sequence[StudentRecord] | Iterable[StudentRecord],
    k: int,
    seed: int,
    stratify_by_risk: bool = False,
) -> FoldPlan:
    """Shuffle students with a seeded generator and deal them round-robin.

    With ``stratify_by_risk`` each risk stratum is shuffled and dealt in turn,
    continuing the round-robin position across strata, so both the overall
    fold sizes and the per-stratum counts differ by at most one.
    """
    records = list(records)
    ids = [r.student_id for r in records]
    if len(set(ids)) != len(ids):
        raise DataError("duplicate student ids")
    if k < 2:
        raise DataError(f"K must be >= 2, got {k}")
    if len(ids) < k:
        raise DataError(f"too few students ({len(ids)}) for K={k}")
    rng = np.random.default_rng(seed)
    if stratify_by_risk:
        risk = [derive_labels(r).risk for r in records]
        strata = [[s for s, y in zip(ids, risk) if y == level] for level in (1, 0)]
    else:
        strata = [ids]
    assignment: dict[str, int] = {}
    pos = 0
    for stratum in strata:
        for j in rng.permutation(len(stratum)):
            assignment[stratum[j]] = pos % k
            pos += 1
    return FoldPlan(k, {s: assignment[s] for s in ids})
