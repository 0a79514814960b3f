"""Mini-batch training of the fused LSTM and inference-mode evaluation."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from ..data.encoding import EncodedSequence
from ..model import FusedLstmParams, ModelConfig, backward, forward, init_params, loss
from ..optim import Optimizer, ScheduleSpec, clip_gradients, lr_at
from .metrics import Metrics, binary_metrics

log = logging.getLogger(__name__)

DEFAULT_LOSS_WEIGHTS = {"next_correct": 1.0, "grade": 0.25, "engagement": 0.25, "risk": 0.25}


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    optimizer: str = "adam"
    schedule: ScheduleSpec = field(default_factory=ScheduleSpec)
    dropout_rate: float = 0.5
    loss_weights: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_LOSS_WEIGHTS))
    clip_norm: float | None = 5.0
    seed: int = 0
    threshold: float = 0.5

    def __post_init__(self):
        if self.epochs < 1:
            raise TrainingError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise TrainingError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 < self.threshold < 1.0:
            raise TrainingError(f"threshold must lie in (0, 1), got {self.threshold}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise TrainingError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        if self.optimizer not in ("adam", "sgd"):
            raise TrainingError(f"unknown optimizer {self.optimizer!r}")
        if self.clip_norm is not None and not self.clip_norm > 0:
            raise TrainingError(f"clip_norm must be positive, got {self.clip_norm}")
        if any(w < 0 for w in self.loss_weights.values()):
            raise TrainingError("loss weights must be nonnegative")

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["loss_weights"] = dict(self.loss_weights)
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "TrainConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise TrainingError(f"unknown train config keys {sorted(unknown)}")
        d = dict(d)
        if "schedule" in d and not isinstance(d["schedule"], ScheduleSpec):
            d["schedule"] = ScheduleSpec.from_dict(d["schedule"])
        return cls(**d)


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    lr: float
    loss: float
    val: Metrics | None = None


def data_rng(seed: int) -> np.random.Generator:
    """Generator for shuffling and dropout; independent of the init stream."""
    return np.random.default_rng([seed, 1])


def train(
    sequences: Sequence[EncodedSequence],
    cfg: TrainConfig,
    model_cfg: ModelConfig,
    val: Sequence[EncodedSequence] | None = None,
    params: FusedLstmParams | None = None,
    on_epoch: Callable[[EpochLog], None] | None = None,
) -> tuple[FusedLstmParams, list[EpochLog]]:
    """Train from ``init_params(model_cfg, cfg.seed)`` (or ``params``).

    Each epoch shuffles the students, averages per-sequence gradients over
    each batch, clips the batch gradient and applies one optimizer step at the
    scheduled learning rate. Runs are bitwise reproducible for fixed seeds.
    """
    if len(sequences) == 0:
        raise TrainingError("empty training set")
    p = init_params(model_cfg, cfg.seed) if params is None else params
    rng = data_rng(cfg.seed)
    opt = Optimizer(cfg.optimizer)
    weights = {t: float(cfg.loss_weights.get(t, 1.0)) for t in model_cfg.tasks}
    logs: list[EpochLog] = []
    n = len(sequences)
    global_step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        lr = lr_at(cfg.schedule, epoch)
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            batch = [sequences[j] for j in order[start : start + cfg.batch_size]]
            if cfg.schedule.per == "batch":
                lr = lr_at(cfg.schedule, global_step)
            grad_sum = None
            for seq in batch:
                out, trace = forward(p, seq.xs, seq.z, "train", cfg.dropout_rate, rng)
                value = loss(out, seq.targets, weights)
                if not math.isfinite(value):
                    raise TrainingError(
                        f"non-finite loss {value} at epoch {epoch} batch {b} (student {seq.student_id})"
                    )
                epoch_loss += value
                g = backward(p, trace, seq.targets, weights)
                if grad_sum is None:
                    grad_sum = g
                else:
                    for k in grad_sum:
                        grad_sum[k] += g[k]
            grads = {k: v / len(batch) for k, v in grad_sum.items()}
            if cfg.clip_norm is not None:
                grads = clip_gradients(grads, cfg.clip_norm)
            p = p.replace(opt.step(p.tensors, grads, lr))
            global_step += 1
        entry = EpochLog(epoch, lr, epoch_loss / n, evaluate(p, val, cfg.threshold) if val else None)
        log.info("epoch %d lr=%.6g loss=%.6f", epoch, entry.lr, entry.loss)
        logs.append(entry)
        if on_epoch is not None:
            on_epoch(entry)
    return p, logs


def predict(params: FusedLstmParams, seq: EncodedSequence) -> dict[str, Any]:
    out, _ = forward(params, seq.xs, seq.z, "infer")
    return out


def evaluate(params: FusedLstmParams, sequences: Sequence[EncodedSequence], threshold: float = 0.5) -> Metrics:
    """Inference-mode metrics for every configured task.

    ``next_correct`` is scored per interaction, pooled over all students; the
    sequence heads are scored per student with continuous targets (grade,
    engagement) binarized at 0.5.
    """
    if len(sequences) == 0:
        raise TrainingError("empty evaluation set")
    preds: dict[str, list] = {t: [] for t in params.config.tasks}
    labels: dict[str, list] = {t: [] for t in params.config.tasks}
    for seq in sequences:
        out = predict(params, seq)
        for task in params.config.tasks:
            if task == "next_correct":
                preds[task].append(out[task] >= threshold)
                labels[task].append(seq.next_correct >= 0.5)
            else:
                preds[task].append(np.array([out[task] >= threshold]))
                labels[task].append(np.array([seq.targets[task] >= 0.5]))
    return {t: binary_metrics(np.concatenate(preds[t]), np.concatenate(labels[t])) for t in params.config.tasks}


__all__ = [
    "DEFAULT_LOSS_WEIGHTS",
    "EpochLog",
    "TrainConfig",
    "TrainingError",
    "evaluate",
    "predict",
    "train",
]
