"""Update rules and learning-rate schedules.

Parameters and gradients are ``dict[str, ndarray]`` mappings with identical
keys and shapes. Every function returns new arrays and leaves its inputs
untouched.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Any, Mapping

import numpy as np

Params = dict[str, np.ndarray]

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


class OptimError(ValueError):
    pass


@dataclass(frozen=True)
class ScheduleSpec:
    """Learning-rate schedule.

    ``constant`` returns ``alpha0``; ``exponential`` returns
    ``alpha0 * exp(-k * t)``; ``cyclical`` is a triangular wave that starts at
    ``base_lr``, peaks at ``max_lr`` half way through each ``period`` and comes
    back down. ``per`` selects whether ``t`` counts epochs or batches.
    """

    kind: str = "constant"
    alpha0: float = 0.001
    k: float = 0.0
    base_lr: float = 0.0001
    max_lr: float = 0.001
    period: float = 10
    per: str = "epoch"

    def __post_init__(self):
        if self.kind not in ("constant", "exponential", "cyclical"):
            raise OptimError(f"unknown schedule kind {self.kind!r}")
        if self.per not in ("epoch", "batch"):
            raise OptimError(f"schedule 'per' must be 'epoch' or 'batch', got {self.per!r}")
        if self.kind in ("constant", "exponential") and not self.alpha0 >= 0:
            raise OptimError(f"alpha0 must be nonnegative, got {self.alpha0}")
        if self.kind == "exponential" and self.k < 0:
            raise OptimError(f"decay constant k must be >= 0, got {self.k}")
        if self.kind == "cyclical":
            if not 0 < self.base_lr <= self.max_lr:
                raise OptimError(f"cyclical needs 0 < base_lr <= max_lr, got {self.base_lr}, {self.max_lr}")
            if self.period < 2:
                raise OptimError(f"cyclical period must be >= 2, got {self.period}")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ScheduleSpec":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise OptimError(f"unknown schedule keys {sorted(unknown)}")
        return cls(**d)


def lr_at(s: ScheduleSpec, t: int) -> float:
    if t < 0:
        raise OptimError(f"step index must be >= 0, got {t}")
    if s.kind == "constant":
        return float(s.alpha0)
    if s.kind == "exponential":
        return float(s.alpha0 * math.exp(-s.k * t))
    frac = (t / s.period) % 1.0
    return float(s.base_lr + (s.max_lr - s.base_lr) * (1.0 - abs(2.0 * frac - 1.0)))


def _check(w: Mapping[str, np.ndarray], g: Mapping[str, np.ndarray]) -> None:
    if w.keys() != g.keys():
        raise OptimError(f"parameter/gradient keys differ: {sorted(set(w) ^ set(g))}")
    for k in w:
        if w[k].shape != g[k].shape:
            raise OptimError(f"shape mismatch for {k}: {w[k].shape} vs {g[k].shape}")


def sgd_step(w: Mapping[str, np.ndarray], g: Mapping[str, np.ndarray], alpha: float) -> Params:
    """Plain gradient descent: ``w - alpha * g`` for every entry."""
    _check(w, g)
    if alpha < 0:
        raise OptimError(f"learning rate must be nonnegative, got {alpha}")
    return {k: w[k] - alpha * g[k] for k in w}


@dataclass
class AdamState:
    m: Params
    v: Params
    t: int = 0
    beta1: float = BETA1
    beta2: float = BETA2
    eps: float = EPS

    @classmethod
    def zeros_like(cls, w: Mapping[str, np.ndarray], **kw) -> "AdamState":
        return cls(
            m={k: np.zeros_like(a) for k, a in w.items()},
            v={k: np.zeros_like(a) for k, a in w.items()},
            **kw,
        )


def adam_step(
    w: Mapping[str, np.ndarray], g: Mapping[str, np.ndarray], state: AdamState, alpha: float
) -> tuple[Params, AdamState]:
    """One bias-corrected Adam update; returns new parameters and a new state."""
    _check(w, g)
    _check(w, state.m)
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    new_w: Params = {}
    m: Params = {}
    v: Params = {}
    for k in w:
        m[k] = b1 * state.m[k] + (1.0 - b1) * g[k]
        v[k] = b2 * state.v[k] + (1.0 - b2) * (g[k] * g[k])
        m_hat = m[k] / bc1
        v_hat = v[k] / bc2
        new_w[k] = w[k] - alpha * m_hat / (np.sqrt(v_hat) + state.eps)
    return new_w, AdamState(m, v, t, b1, b2, state.eps)


def global_norm(g: Mapping[str, np.ndarray]) -> float:
    return math.sqrt(sum(float(np.sum(a * a)) for a in g.values()))


def clip_gradients(g: Mapping[str, np.ndarray], max_norm: float) -> Params:
    """Rescale ``g`` so its global L2 norm is at most ``max_norm``."""
    if not max_norm > 0:
        raise OptimError(f"max_norm must be positive, got {max_norm}")
    norm = global_norm(g)
    if norm <= max_norm:
        return dict(g)
    scale = max_norm / norm
    return {k: a * scale for k, a in g.items()}


@dataclass
class Optimizer:
    """Small stateful wrapper the training loop drives once per batch."""

    kind: str = "adam"
    state: AdamState | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("adam", "sgd"):
            raise OptimError(f"unknown optimizer {self.kind!r}")

    def step(self, w: Mapping[str, np.ndarray], g: Mapping[str, np.ndarray], alpha: float) -> Params:
        if self.kind == "sgd":
            return sgd_step(w, g, alpha)
        if self.state is None:
            self.state = AdamState.zeros_like(w)
        new_w, self.state = adam_step(w, g, self.state, alpha)
        return new_w
