"""Synthetic interaction logs with planted, recoverable structure.

Every student has a latent skill ``s ~ U(0.2, 0.9)`` and every question a
difficulty ``d ~ U(0.2, 0.9)``. An answer is correct with probability
``sigmoid(a * (s - d))``, reduced by ``fatigue`` once the student has
answered ``burst`` or more questions in the current study session. Sessions
are separated by gaps of hours to days, while events inside a session are
seconds apart, so the session position is visible through the inter-event
gap feature. The single static feature is ``s`` plus Gaussian noise.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Any, Mapping

import numpy as np

from .records import DataError, InteractionEvent, StudentRecord

SKILL_RANGE = (0.2, 0.9)
DIFFICULTY_RANGE = (0.2, 0.9)
ANSWER_TOKENS = ("a", "b", "c", "d")
BASE_TIMESTAMP = 1_600_000_000_000


@dataclass(frozen=True)
class SyntheticSpec:
    n_students: int = 200
    seq_len_min: int = 30
    seq_len_max: int = 60
    n_questions: int = 50
    discrimination: float = 10.0
    fatigue: float = 0.3
    burst: int = 5
    seed: int = 0
    static_noise: float = 0.05
    session_len_max: int = 10

    def __post_init__(self):
        if self.n_students < 1:
            raise DataError(f"n_students must be >= 1, got {self.n_students}")
        if self.n_questions < 1:
            raise DataError(f"n_questions must be >= 1, got {self.n_questions}")
        if not 1 <= self.seq_len_min <= self.seq_len_max:
            raise DataError(f"need 1 <= seq_len_min <= seq_len_max, got {self.seq_len_min}, {self.seq_len_max}")
        if self.discrimination < 0 or not 0 <= self.fatigue <= 1:
            raise DataError("discrimination must be >= 0 and fatigue in [0, 1]")
        if self.burst < 1 or self.session_len_max < 1 or self.static_noise < 0:
            raise DataError("burst and session_len_max must be >= 1, static_noise >= 0")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "SyntheticSpec":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise DataError(f"unknown synthetic spec keys {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True, eq=False)
class SyntheticData:
    records: list[StudentRecord]
    answers: dict[str, str]
    difficulty: dict[str, float]
    skill: dict[str, float]


def _success_prob(a: float, s: float, d: float) -> float:
    x = float(np.clip(a * (s - d), -500.0, 500.0))
    return 1.0 / (1.0 + np.exp(-x))


def gen_synthetic(spec: SyntheticSpec, seed: int | None = None) -> SyntheticData:
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    qids = [f"q{j}" for j in range(spec.n_questions)]
    difficulty = dict(zip(qids, (float(v) for v in rng.uniform(*DIFFICULTY_RANGE, spec.n_questions))))
    answers = {q: ANSWER_TOKENS[int(rng.integers(len(ANSWER_TOKENS)))] for q in qids}

    records: list[StudentRecord] = []
    skill: dict[str, float] = {}
    for n in range(spec.n_students):
        sid = f"u{n}"
        s = float(rng.uniform(*SKILL_RANGE))
        skill[sid] = s
        z = s + spec.static_noise * float(rng.standard_normal())
        length = int(rng.integers(spec.seq_len_min, spec.seq_len_max + 1))
        ts = BASE_TIMESTAMP + int(rng.integers(0, 30 * 86_400_000))
        session_left = int(rng.integers(1, spec.session_len_max + 1))
        pos = 0
        events = []
        for _ in range(length):
            if session_left == 0:
                session_left = int(rng.integers(1, spec.session_len_max + 1))
                pos = 0
                ts += int(rng.integers(2 * 3_600_000, 72 * 3_600_000))
            q = qids[int(rng.integers(spec.n_questions))]
            p = _success_prob(spec.discrimination, s, difficulty[q])
            if pos >= spec.burst:
                p = max(0.0, p - spec.fatigue)
            correct = bool(rng.random() < p)
            if correct:
                ans = answers[q]
            else:
                wrong = [t for t in ANSWER_TOKENS if t != answers[q]]
                ans = wrong[int(rng.integers(len(wrong)))]
            elapsed = int(rng.integers(5_000, 60_000))
            events.append(InteractionEvent(ts, q, ans, elapsed, correct))
            ts += elapsed + int(rng.integers(2_000, 30_000))
            pos += 1
            session_left -= 1
        records.append(StudentRecord(sid, tuple(events), (z,)))
    return SyntheticData(records, answers, difficulty, skill)
