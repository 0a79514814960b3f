"""Per-timestep feature encoding and proxy labels.

Each timestep ``t`` of a student's sequence becomes::

    [prev_correct, prev_elapsed_norm, log_gap_norm, hash(question_id) (B entries)]

``prev_correct`` and ``prev_elapsed_norm`` describe interaction ``t-1`` (both
0 at ``t=0``) because the outcome and answer time of interaction ``t`` are only
known after it is answered. The elapsed time and the log gap since the
previous interaction are z-scored with statistics fitted on training students
only, and the question id is a signed one-hot over ``B``
hash buckets. Two ids produce the same hash vector only if they land in the
same bucket with the same sign (probability ``1/(2B)`` for a uniform hash);
colliding ids are indistinguishable to the model.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, replace
from typing import Any, Iterable, Mapping

import numpy as np

from .records import DataError, StudentRecord

DEFAULT_HASH_BUCKETS = 64
N_DENSE = 3
MS_PER_DAY = 86_400_000


def hash_question(question_id: str, buckets: int) -> tuple[int, float]:
    """Stable ``(bucket, sign)`` for a question id (independent of PYTHONHASHSEED)."""
    v = int.from_bytes(hashlib.blake2b(question_id.encode(), digest_size=8).digest(), "little")
    return v % buckets, (1.0 if (v >> 63) & 1 else -1.0)


def _log_gaps(record: StudentRecord) -> np.ndarray:
    ts = np.array([e.timestamp for e in record.events], dtype=np.float64)
    return np.log1p(np.diff(ts) / 1000.0)


def _elapsed_seconds(record: StudentRecord) -> np.ndarray:
    return np.array([e.elapsed_time for e in record.events], dtype=np.float64) / 1000.0


@dataclass(frozen=True)
class EncodingConfig:
    hash_buckets: int = DEFAULT_HASH_BUCKETS
    elapsed_mean: float = 0.0
    elapsed_std: float = 1.0
    gap_mean: float = 0.0
    gap_std: float = 1.0
    static_mean: tuple[float, ...] = ()
    static_std: tuple[float, ...] = ()

    def __post_init__(self):
        if self.hash_buckets < 1:
            raise DataError(f"hash_buckets must be >= 1, got {self.hash_buckets}")
        object.__setattr__(self, "static_mean", tuple(self.static_mean))
        object.__setattr__(self, "static_std", tuple(self.static_std))

    @property
    def input_dim(self) -> int:
        return N_DENSE + self.hash_buckets

    @property
    def static_dim(self) -> int:
        return len(self.static_mean)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["static_mean"] = list(self.static_mean)
        d["static_std"] = list(self.static_std)
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "EncodingConfig":
        return cls(**d)


def _std(a: np.ndarray) -> float:
    s = float(np.std(a)) if a.size else 0.0
    return s if s > 0 else 1.0


def fit_encoding(records: Iterable[StudentRecord], hash_buckets: int = DEFAULT_HASH_BUCKETS) -> EncodingConfig:
    """Normalization statistics from the given (training) records only."""
    records = list(records)
    if not records:
        raise DataError("cannot fit an encoding on zero records")
    elapsed = np.concatenate([_elapsed_seconds(r) for r in records])
    gaps = np.concatenate([_log_gaps(r) for r in records])
    widths = {len(r.static_features) for r in records}
    if len(widths) != 1:
        raise DataError(f"inconsistent static feature widths {sorted(widths)}")
    static = np.array([r.static_features for r in records], dtype=np.float64)
    if static.shape[1]:
        s_mean = tuple(float(v) for v in static.mean(axis=0))
        s_std = tuple(_std(static[:, j]) for j in range(static.shape[1]))
    else:
        s_mean, s_std = (), ()
    return EncodingConfig(
        hash_buckets=hash_buckets,
        elapsed_mean=float(elapsed.mean()),
        elapsed_std=_std(elapsed),
        gap_mean=float(gaps.mean()) if gaps.size else 0.0,
        gap_std=_std(gaps),
        static_mean=s_mean,
        static_std=s_std,
    )


@dataclass(frozen=True)
class ProxyLabels:
    grade: float
    engagement: float
    risk: int


def derive_labels(record: StudentRecord) -> ProxyLabels:
    """Grade, engagement and risk targets built from the record itself.

    grade is the fraction answered correctly; engagement is distinct active
    UTC days over the calendar-day span (capped at 1); risk is 1 when the
    last fifth of the events (rounded up, at least one) is under 50% correct.
    """
    n = len(record.events)
    if n == 0:
        raise DataError(f"record {record.student_id!r} has no events")
    correct = record.correct
    days = [e.timestamp // MS_PER_DAY for e in record.events]
    span = max(days) - min(days) + 1
    tail = max(1, -(-n // 5))
    tail_rate = float(correct[-tail:].mean())
    return ProxyLabels(
        grade=float(correct.mean()),
        engagement=min(1.0, len(set(days)) / span),
        risk=int(tail_rate < 0.5),
    )


@dataclass(frozen=True, eq=False)
class EncodedSequence:
    student_id: str
    xs: np.ndarray
    z: np.ndarray
    correct: np.ndarray
    elapsed: np.ndarray
    labels: ProxyLabels
    targets: dict[str, Any]

    def __len__(self) -> int:
        return self.xs.shape[0]

    @property
    def next_correct(self) -> np.ndarray:
        return self.targets["next_correct"]

    def with_static(self, z: np.ndarray) -> "EncodedSequence":
        return replace(self, z=np.asarray(z, dtype=np.float64))


def encode(record: StudentRecord, enc: EncodingConfig) -> EncodedSequence:
    n = len(record.events)
    if n < 2:
        raise DataError(f"record {record.student_id!r} has {n} events; encoding needs at least 2")
    if len(record.static_features) != enc.static_dim:
        raise DataError(
            f"record {record.student_id!r} has {len(record.static_features)} static features, "
            f"encoding expects {enc.static_dim}"
        )
    correct = record.correct
    xs = np.zeros((n, enc.input_dim))
    xs[1:, 0] = correct[:-1]
    elapsed = (_elapsed_seconds(record) - enc.elapsed_mean) / enc.elapsed_std
    xs[1:, 1] = elapsed[:-1]
    xs[0, 2] = (0.0 - enc.gap_mean) / enc.gap_std
    xs[1:, 2] = (_log_gaps(record) - enc.gap_mean) / enc.gap_std
    for t, e in enumerate(record.events):
        bucket, sign = hash_question(e.question_id, enc.hash_buckets)
        xs[t, N_DENSE + bucket] = sign
    z = np.zeros(0)
    if enc.static_dim:
        z = (np.array(record.static_features) - np.array(enc.static_mean)) / np.array(enc.static_std)
    labels = derive_labels(record)
    targets = {
        "next_correct": correct[1:].astype(np.float64),
        "grade": labels.grade,
        "engagement": labels.engagement,
        "risk": float(labels.risk),
    }
    return EncodedSequence(record.student_id, xs, z, correct, elapsed, labels, targets)


def encode_all(records: Iterable[StudentRecord], enc: EncodingConfig) -> list[EncodedSequence]:
    return [encode(r, enc) for r in records]
