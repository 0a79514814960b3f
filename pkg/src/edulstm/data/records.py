"""Interaction-log records, CSV ingestion and cleaning."""

from __future__ import annotations

import csv
import logging
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

log = logging.getLogger(__name__)

EVENTS_HEADER = ("student_id", "timestamp", "question_id", "user_answer", "elapsed_time")
KT1_HEADER = ("timestamp", "solving_id", "question_id", "user_answer", "elapsed_time")
QUESTIONS_HEADER = ("question_id", "correct_answer")

DEFAULT_MIN_LEN = 5
ELAPSED_CAP_PERCENTILE = 99


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class InteractionEvent:
    timestamp: int
    question_id: str
    user_answer: str
    elapsed_time: int
    correct: bool


@dataclass(frozen=True)
class StudentRecord:
    student_id: str
    events: tuple[InteractionEvent, ...]
    static_features: tuple[float, ...] = ()

    def __len__(self) -> int:
        return len(self.events)

    @property
    def correct(self) -> np.ndarray:
        return np.array([e.correct for e in self.events], dtype=bool)


def _open_csv(path: Path, required: tuple[str, ...]):
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise DataError(f"{path}: cannot read file ({exc.strerror})") from exc
    reader = csv.reader(fh)
    header = next(reader, None)
    if header is None:
        fh.close()
        return None, None, None
    header = [h.strip() for h in header]
    missing = [c for c in required if c not in header]
    if missing:
        fh.close()
        raise DataError(f"{path}:1: missing header columns {missing} (got {header})")
    return fh, reader, {name: header.index(name) for name in header}


def _int_field(path: Path, line: int, name: str, raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise DataError(f"{path}:{line}: field {name!r} is not an integer: {raw!r}") from None


def load_questions(path: str | Path) -> dict[str, str]:
    path = Path(path)
    fh, reader, cols = _open_csv(path, QUESTIONS_HEADER)
    if fh is None:
        raise DataError(f"{path}:1: missing header")
    answers: dict[str, str] = {}
    with fh:
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(cols):
                raise DataError(f"{path}:{line}: expected {len(cols)} fields, got {len(row)}")
            answers[row[cols["question_id"]].strip()] = row[cols["correct_answer"]].strip()
    return answers


def load_static(path: str | Path) -> dict[str, tuple[float, ...]]:
    """Read ``student_id,f1,f2,...``; every row must have the same width."""
    path = Path(path)
    fh, reader, cols = _open_csv(path, ("student_id",))
    if fh is None:
        raise DataError(f"{path}:1: missing header")
    feature_cols = [c for c in cols if c != "student_id"]
    out: dict[str, tuple[float, ...]] = {}
    with fh:
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(cols):
                raise DataError(f"{path}:{line}: expected {len(cols)} fields, got {len(row)}")
            try:
                vals = tuple(float(row[cols[c]]) for c in feature_cols)
            except ValueError:
                raise DataError(f"{path}:{line}: non-numeric static feature") from None
            if not all(np.isfinite(vals)):
                raise DataError(f"{path}:{line}: non-finite static feature")
            out[row[cols["student_id"]].strip()] = vals
    return out


def _read_rows(path: Path, header: tuple[str, ...], student_id: str | None):
    fh, reader, cols = _open_csv(path, header)
    if fh is None:
        return
    with fh:
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(cols):
                raise DataError(f"{path}:{line}: expected {len(cols)} fields, got {len(row)}")
            sid = student_id if student_id is not None else row[cols["student_id"]].strip()
            if not sid:
                raise DataError(f"{path}:{line}: empty student_id")
            ts = _int_field(path, line, "timestamp", row[cols["timestamp"]])
            elapsed = _int_field(path, line, "elapsed_time", row[cols["elapsed_time"]])
            if elapsed < 0:
                raise DataError(f"{path}:{line}: negative elapsed_time {elapsed}")
            yield sid, ts, row[cols["question_id"]].strip(), row[cols["user_answer"]].strip(), elapsed


def _assemble(
    rows: Iterable[tuple[str, int, str, str, int]],
    answers: Mapping[str, str],
    static: Mapping[str, tuple[float, ...]] | None,
    counters: Counter,
) -> list[StudentRecord]:
    events: dict[str, list[InteractionEvent]] = {}
    seen: dict[str, set[tuple[int, str]]] = {}
    for sid, ts, qid, ans, elapsed in rows:
        key = (ts, qid)
        if key in seen.setdefault(sid, set()):
            counters["duplicate_row"] += 1
            continue
        seen[sid].add(key)
        if qid in answers:
            correct = ans == answers[qid]
        else:
            counters["unknown_question"] += 1
            correct = False
        events.setdefault(sid, []).append(InteractionEvent(ts, qid, ans, elapsed, correct))

    records = []
    for sid, evs in events.items():
        z: tuple[float, ...] = ()
        if static is not None:
            if sid not in static:
                raise DataError(f"no static features for student {sid!r}")
            z = static[sid]
        records.append(StudentRecord(sid, tuple(evs), z))
    for name, n in counters.items():
        if n:
            log.warning("%s: %d rows", name.replace("_", " "), n)
    return records


def load_events(
    events_path: str | Path,
    questions_path: str | Path,
    static_path: str | Path | None = None,
    counters: Counter | None = None,
) -> list[StudentRecord]:
    """Load a flattened events CSV (or a directory of per-user KT1 files).

    Correctness is the join ``user_answer == correct_answer``. Unknown question
    ids count as incorrect, and rows repeating a ``(timestamp, question_id)``
    pair for the same student are dropped; both are tallied in ``counters``.
    """
    counters = Counter() if counters is None else counters
    events_path = Path(events_path)
    answers = load_questions(questions_path)
    static = load_static(static_path) if static_path is not None else None
    if events_path.is_dir():
        files = sorted(events_path.glob("*.csv"))

        def rows():
            for f in files:
                yield from _read_rows(f, KT1_HEADER, f.stem)

        return _assemble(rows(), answers, static, counters)
    if not events_path.exists():
        raise DataError(f"{events_path}: no such file")
    return _assemble(_read_rows(events_path, EVENTS_HEADER, None), answers, static, counters)


def clean(records: Iterable[StudentRecord], min_len: int = DEFAULT_MIN_LEN) -> list[StudentRecord]:
    """Sort, de-duplicate, drop short records, cap elapsed time.

    Events are sorted by timestamp and only the first event per timestamp is
    kept, so timestamps end up strictly increasing. Records with fewer than
    ``min_len`` events are dropped. Elapsed times above the dataset's 99th
    percentile (an actual observed value, so re-cleaning is a no-op) are
    capped to it.
    """
    if min_len < 2:
        raise DataError(f"min_len must be >= 2, got {min_len}")
    kept: list[StudentRecord] = []
    for r in records:
        evs = sorted(r.events, key=lambda e: e.timestamp)
        uniq = [e for j, e in enumerate(evs) if j == 0 or e.timestamp != evs[j - 1].timestamp]
        if len(uniq) >= min_len:
            kept.append(replace(r, events=tuple(uniq)))
    if not kept:
        return []
    elapsed = np.array([e.elapsed_time for r in kept for e in r.events])
    cap = int(np.percentile(elapsed, ELAPSED_CAP_PERCENTILE, method="lower"))
    out = []
    for r in kept:
        if any(e.elapsed_time > cap for e in r.events):
            r = replace(r, events=tuple(replace(e, elapsed_time=min(e.elapsed_time, cap)) for e in r.events))
        out.append(r)
    return out


def write_events_csv(path: str | Path, records: Iterable[StudentRecord]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVENTS_HEADER)
        for r in records:
            for e in r.events:
                w.writerow([r.student_id, e.timestamp, e.question_id, e.user_answer, e.elapsed_time])


def write_questions_csv(path: str | Path, answers: Mapping[str, str]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(QUESTIONS_HEADER)
        for qid, ans in answers.items():
            w.writerow([qid, ans])


def write_static_csv(path: str | Path, records: Iterable[StudentRecord]) -> None:
    records = list(records)
    width = len(records[0].static_features) if records else 0
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["student_id"] + [f"f{j + 1}" for j in range(width)])
        for r in records:
            w.writerow([r.student_id] + [repr(float(v)) for v in r.static_features])
