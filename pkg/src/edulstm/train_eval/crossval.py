"""K-fold comparison of the fused LSTM against the baselines."""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from ..data.encoding import N_DENSE, encode_all, fit_encoding
from ..data.folds import FoldPlan
from ..data.records import DataError, StudentRecord
from ..model import TASKS, ModelConfig
from .baselines import baseline_knn, baseline_logreg, baseline_majority
from .metrics import COUNTS, RATES, Metrics, TaskMetrics
from .training import TrainConfig, evaluate, train

log = logging.getLogger(__name__)

METHODS = ("lstm", "lstm_zero_static", "majority", "logreg", "knn", "knn_dtw")
DEFAULT_METHODS = ("lstm", "majority", "logreg", "knn", "knn_dtw")


class CrossValidationError(RuntimeError):
    pass


@dataclass(frozen=True)
class BaselineOptions:
    knn_k: int = 15
    dtw_window: int = 8
    logreg_lr: float = 0.5
    logreg_iters: int = 500

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "BaselineOptions":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise CrossValidationError(f"unknown baseline option keys {sorted(unknown)}")
        return cls(**d)


@dataclass
class CvReport:
    k: int
    methods: list[str]
    folds: dict[str, list[Metrics]] = field(default_factory=dict)

    def tasks(self) -> list[str]:
        present = {t for per_fold in self.folds.values() for m in per_fold for t in m}
        return [t for t in TASKS if t in present]

    def values(self, method: str, task: str = "next_correct", metric: str = "accuracy") -> np.ndarray:
        return np.array([getattr(m[task], metric) for m in self.folds[method]])

    def mean(self, method: str, task: str = "next_correct", metric: str = "accuracy") -> float:
        return float(self.values(method, task, metric).mean())

    def std(self, method: str, task: str = "next_correct", metric: str = "accuracy") -> float:
        return float(self.values(method, task, metric).std(ddof=1))

    def aggregate(self) -> dict[str, dict[str, dict[str, dict[str, float]]]]:
        out: dict = {}
        for method in self.methods:
            tasks = [t for t in self.tasks() if t in self.folds[method][0]]
            out[method] = {
                t: {r: {"mean": self.mean(method, t, r), "std": self.std(method, t, r)} for r in RATES}
                for t in tasks
            }
        return out

    def to_dict(self) -> dict[str, Any]:
        return {
            "k": self.k,
            "methods": list(self.methods),
            "folds": {
                m: [{t: tm.to_dict() for t, tm in fold.items()} for fold in per_fold]
                for m, per_fold in self.folds.items()
            },
            "aggregate": self.aggregate(),
        }

    def csv_header(self) -> list[str]:
        return ["method", "fold"] + [f"{t}_{c}" for t in self.tasks() for c in RATES + COUNTS]

    def csv_rows(self) -> list[list[Any]]:
        tasks = self.tasks()
        rows = []
        for method in self.methods:
            for f, fold in enumerate(self.folds[method]):
                row: list[Any] = [method, f]
                for t in tasks:
                    tm = fold.get(t)
                    row += [getattr(tm, c) if tm else "" for c in RATES + COUNTS]
                rows.append(row)
            agg = self.aggregate()[method]
            for stat in ("mean", "std"):
                row = [method, stat]
                for t in tasks:
                    row += [agg[t][r][stat] if t in agg else "" for r in RATES] + [""] * len(COUNTS)
                rows.append(row)
        return rows

    def write_csv(self, path: str | Path, config_hash: str | None = None) -> None:
        with Path(path).open("w", newline="") as fh:
            if config_hash is not None:
                fh.write(f"# config_hash={config_hash}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.csv_header())
            w.writerows(self.csv_rows())

    def write_json(self, path: str | Path, config_hash: str | None = None) -> None:
        doc = {"config_hash": config_hash, **self.to_dict()}
        Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def _zero_static(seqs):
    return [s.with_static(np.zeros_like(s.z)) for s in seqs]


def run_fold(
    records: Sequence[StudentRecord],
    plan: FoldPlan,
    fold: int,
    cfg: TrainConfig,
    model_cfg: ModelConfig,
    methods: Sequence[str],
    options: BaselineOptions = BaselineOptions(),
) -> dict[str, Metrics]:
    """Train every method on the other folds and evaluate on ``fold``."""
    test_ids = set(plan.test_ids(fold))
    train_recs = [r for r in records if r.student_id not in test_ids]
    test_recs = [r for r in records if r.student_id in test_ids]
    enc = fit_encoding(train_recs, hash_buckets=model_cfg.input_dim - N_DENSE)
    if enc.static_dim != model_cfg.static_dim:
        raise CrossValidationError(
            f"model static_dim={model_cfg.static_dim} but data has {enc.static_dim} static features"
        )
    train_seqs, test_seqs = encode_all(train_recs, enc), encode_all(test_recs, enc)
    fold_cfg = replace(cfg, seed=cfg.seed + fold)
    results: dict[str, Metrics] = {}
    for method in methods:
        try:
            if method == "lstm":
                params, _ = train(train_seqs, fold_cfg, model_cfg)
                results[method] = evaluate(params, test_seqs, cfg.threshold)
            elif method == "lstm_zero_static":
                params, _ = train(_zero_static(train_seqs), fold_cfg, model_cfg)
                results[method] = evaluate(params, _zero_static(test_seqs), cfg.threshold)
            elif method == "majority":
                results[method] = baseline_majority(train_seqs, test_seqs)
            elif method == "logreg":
                results[method] = baseline_logreg(
                    train_seqs, test_seqs, options.logreg_lr, options.logreg_iters, cfg.threshold
                )
            elif method == "knn":
                results[method] = baseline_knn(train_seqs, test_seqs, options.knn_k, "euclidean_aggregate")
            elif method == "knn_dtw":
                results[method] = baseline_knn(train_seqs, test_seqs, options.knn_k, "dtw", options.dtw_window)
            else:
                raise CrossValidationError(f"unknown method {method!r}")
        except CrossValidationError:
            raise
        except Exception as exc:
            raise CrossValidationError(f"method {method!r} failed on fold {fold}: {exc}") from exc
        log.info("fold %d %s next_correct acc=%.4f", fold, method, results[method]["next_correct"].accuracy)
    return results


def _check_plan(records: Sequence[StudentRecord], plan: FoldPlan) -> None:
    ids = [r.student_id for r in records]
    if len(set(ids)) != len(ids):
        raise DataError("duplicate student ids")
    if set(ids) != set(plan.assignment):
        raise DataError("fold plan does not cover exactly the given students")
    empty = [f for f, n in enumerate(plan.sizes()) if n == 0]
    if empty:
        raise DataError(f"folds {empty} are empty")


def cross_validate(
    records: Sequence[StudentRecord],
    plan: FoldPlan,
    cfg: TrainConfig,
    model_cfg: ModelConfig,
    methods: Sequence[str] = DEFAULT_METHODS,
    options: BaselineOptions = BaselineOptions(),
    parallel_folds: int = 1,
) -> CvReport:
    """Run every method on every fold; folds may run in worker processes.

    Each fold is a pure function of its inputs and seeds, so the report is
    identical whatever ``parallel_folds`` is.
    """
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise CrossValidationError(f"unknown methods {unknown}; choose from {METHODS}")
    _check_plan(records, plan)
    records = list(records)
    args = [(records, plan, f, cfg, model_cfg, list(methods), options) for f in range(plan.k)]
    if parallel_folds > 1:
        with ProcessPoolExecutor(max_workers=parallel_folds) as pool:
            per_fold = list(pool.map(run_fold, *zip(*args)))
    else:
        per_fold = [run_fold(*a) for a in args]
    report = CvReport(plan.k, list(methods))
    for method in methods:
        report.folds[method] = [per_fold[f][method] for f in range(plan.k)]
    return report


def metrics_from_dict(d: Mapping[str, Any]) -> Metrics:
    return {t: TaskMetrics(**v) for t, v in d.items()}
