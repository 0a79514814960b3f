"""LSTM cell with static-feature fusion and independent sigmoid task heads.

For each timestep the gates see ``u = [h_prev, x_t, z]`` where ``z`` is a
per-student static vector repeated at every step::

    f = sigmoid(W_f u + b_f)      i = sigmoid(W_i u + b_i)
    g = tanh(W_c u + b_c)         o = sigmoid(W_o u + b_o)
    c = f * c_prev + i * g        h = o * tanh(c)

With ``static_in_forget_gate=False`` the forget gate reads ``[h_prev, x_t]``
only. Each task head is ``sigmoid(W_task . h + b_task)``; the sequence-level
heads (grade, engagement, risk) read the final hidden state and the
``next_correct`` head reads every hidden state from the second step on.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from . import linalg as la

TASKS = ("next_correct", "grade", "engagement", "risk")
SEQUENCE_TASKS = ("grade", "engagement", "risk")
GATES = ("f", "i", "c", "o")
PROB_CLAMP = 1e-12

CHECKPOINT_FORMAT = "edulstm.checkpoint"
CHECKPOINT_VERSION = 1

Params = dict[str, np.ndarray]


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int
    static_dim: int = 0
    hidden_dim: int = 128
    tasks: tuple[str, ...] = TASKS
    dropout_rate: float = 0.5
    static_in_forget_gate: bool = True

    def __post_init__(self):
        object.__setattr__(self, "tasks", tuple(self.tasks))
        if self.hidden_dim < 1 or self.input_dim < 1 or self.static_dim < 0:
            raise ModelError(
                f"invalid dims: input_dim={self.input_dim} static_dim={self.static_dim} "
                f"hidden_dim={self.hidden_dim}"
            )
        if not self.tasks:
            raise ModelError("at least one task is required")
        unknown = [t for t in self.tasks if t not in TASKS]
        if unknown or len(set(self.tasks)) != len(self.tasks):
            raise ModelError(f"tasks must be distinct names from {TASKS}, got {self.tasks}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ModelError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")

    @property
    def concat_dim(self) -> int:
        return self.hidden_dim + self.input_dim + self.static_dim

    def gate_width(self, gate: str) -> int:
        if gate == "f" and not self.static_in_forget_gate:
            return self.hidden_dim + self.input_dim
        return self.concat_dim

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["tasks"] = list(self.tasks)
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ModelConfig":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Name -> shape for every trainable array, in canonical order."""
    shapes: dict[str, tuple[int, ...]] = {}
    for g in GATES:
        shapes[f"W_{g}"] = (cfg.hidden_dim, cfg.gate_width(g))
    for g in GATES:
        shapes[f"b_{g}"] = (cfg.hidden_dim,)
    for task in cfg.tasks:
        shapes[f"W_{task}"] = (1, cfg.hidden_dim)
        shapes[f"b_{task}"] = (1,)
    return shapes


@dataclass
class FusedLstmParams:
    config: ModelConfig
    tensors: Params

    def __post_init__(self):
        expected = param_shapes(self.config)
        got = {k: tuple(v.shape) for k, v in self.tensors.items()}
        if got != expected:
            raise ModelError(f"parameter shapes {got} do not match config shapes {expected}")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def replace(self, tensors: Params) -> "FusedLstmParams":
        return FusedLstmParams(self.config, tensors)

    def copy(self) -> "FusedLstmParams":
        return FusedLstmParams(self.config, {k: v.copy() for k, v in self.tensors.items()})


def init_params(cfg: ModelConfig, seed: int) -> FusedLstmParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases, forget bias 1."""
    rng = np.random.default_rng(seed)
    tensors: Params = {}
    for name, shape in param_shapes(cfg).items():
        if name.startswith("W_"):
            bound = 1.0 / math.sqrt(shape[1])
            tensors[name] = rng.uniform(-bound, bound, size=shape)
        elif name == "b_f":
            tensors[name] = np.ones(shape)
        else:
            tensors[name] = np.zeros(shape)
    return FusedLstmParams(cfg, tensors)


def zero_grads(p: FusedLstmParams) -> Params:
    return {k: np.zeros_like(v) for k, v in p.tensors.items()}


@dataclass
class CellState:
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, hidden_dim: int) -> "CellState":
        return cls(la.zeros(hidden_dim), la.zeros(hidden_dim))


@dataclass
class StepTrace:
    u: np.ndarray
    f: np.ndarray
    i: np.ndarray
    g: np.ndarray
    o: np.ndarray
    c_prev: np.ndarray
    c: np.ndarray
    tanh_c: np.ndarray
    h: np.ndarray


@dataclass
class ForwardTrace:
    steps: list[StepTrace]
    masks: list[np.ndarray | None]
    outputs: dict[str, Any] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.steps)


def _gate_input(cfg: ModelConfig, gate: str, u: np.ndarray) -> np.ndarray:
    if gate == "f" and not cfg.static_in_forget_gate:
        return u[: cfg.hidden_dim + cfg.input_dim]
    return u


def step(p: FusedLstmParams, s: CellState, x: np.ndarray, z: np.ndarray) -> tuple[CellState, StepTrace]:
    cfg = p.config
    if x.shape != (cfg.input_dim,) or z.shape != (cfg.static_dim,):
        raise la.ShapeError(
            f"step: expected x of length {cfg.input_dim} and z of length {cfg.static_dim}, "
            f"got {x.shape} and {z.shape}"
        )
    u = la.concat([s.h, x, z])
    pre = {
        g: la.add(la.matvec(p[f"W_{g}"], _gate_input(cfg, g, u)), p[f"b_{g}"]) for g in GATES
    }
    f = la.sigmoid(pre["f"])
    i = la.sigmoid(pre["i"])
    g = la.tanh(pre["c"])
    o = la.sigmoid(pre["o"])
    c = la.add(la.hadamard(f, s.c), la.hadamard(i, g))
    tanh_c = la.tanh(c)
    h = la.hadamard(o, tanh_c)
    return CellState(h, c), StepTrace(u, f, i, g, o, s.c, c, tanh_c, h)


def _head(p: FusedLstmParams, task: str, h: np.ndarray) -> float:
    return float(la.matvec(p[f"W_{task}"], h)[0] + p[f"b_{task}"][0])


def forward(
    p: FusedLstmParams,
    xs,
    z,
    mode: str = "infer",
    dropout_rate: float | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[dict[str, Any], ForwardTrace]:
    """Run the cell over ``xs`` from a zero state and evaluate every task head.

    In ``train`` mode an inverted-dropout mask is drawn per timestep and applied
    to the hidden state before it reaches the heads (never to the recurrence).
    Returns ``(outputs, trace)`` where ``outputs[task]`` is a float for the
    sequence heads and an array of ``len(xs) - 1`` probabilities for
    ``next_correct`` (entry ``k`` predicts the outcome of interaction ``k + 1``).
    """
    cfg = p.config
    if mode not in ("train", "infer"):
        raise ModelError(f"mode must be 'train' or 'infer', got {mode!r}")
    if len(xs) == 0:
        raise ModelError("forward: empty sequence")
    if "next_correct" in cfg.tasks and len(xs) < 2:
        raise ModelError("forward: next_correct needs at least two timesteps")
    rate = cfg.dropout_rate if dropout_rate is None else dropout_rate
    if not 0.0 <= rate < 1.0:
        raise ModelError(f"dropout_rate must lie in [0, 1), got {rate}")
    use_mask = mode == "train" and rate > 0.0
    if use_mask and rng is None:
        raise ModelError("forward: train mode with dropout needs an rng")
    z = np.asarray(z, dtype=np.float64)

    state = CellState.zeros(cfg.hidden_dim)
    steps: list[StepTrace] = []
    masks: list[np.ndarray | None] = []
    keep = 1.0 - rate
    for x in xs:
        state, st = step(p, state, np.asarray(x, dtype=np.float64), z)
        steps.append(st)
        if use_mask:
            masks.append((rng.random(cfg.hidden_dim) < keep) / keep)
        else:
            masks.append(None)

    def dropped(t: int) -> np.ndarray:
        m = masks[t]
        return steps[t].h if m is None else la.hadamard(steps[t].h, m)

    outputs: dict[str, Any] = {}
    for task in cfg.tasks:
        if task == "next_correct":
            logits = np.array([_head(p, task, dropped(t)) for t in range(1, len(steps))])
            outputs[task] = la.sigmoid(logits)
        else:
            outputs[task] = float(la.sigmoid(np.array([_head(p, task, dropped(len(steps) - 1))]))[0])
    return outputs, ForwardTrace(steps, masks, outputs)


def _bce(y: np.ndarray, t: np.ndarray) -> np.ndarray:
    yc = np.clip(y, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return -(t * np.log(yc) + (1.0 - t) * np.log(1.0 - yc))


def _weight(weights: Mapping[str, float] | None, task: str) -> float:
    if weights is None:
        return 1.0
    return float(weights.get(task, 1.0))


def _check_targets(outputs: Mapping[str, Any], targets: Mapping[str, Any]) -> None:
    missing = [t for t in outputs if t not in targets]
    if missing:
        raise ModelError(f"missing targets for tasks {missing}")


def loss(outputs: Mapping[str, Any], targets: Mapping[str, Any], weights: Mapping[str, float] | None = None) -> float:
    """Weighted sum of per-task binary cross-entropies.

    ``next_correct`` contributes its mean over timesteps. Probabilities are
    clamped to ``[1e-12, 1 - 1e-12]`` before taking logs.
    """
    _check_targets(outputs, targets)
    total = 0.0
    for task, y in outputs.items():
        w = _weight(weights, task)
        if w == 0.0:
            continue
        bce = _bce(np.asarray(y, dtype=np.float64), np.asarray(targets[task], dtype=np.float64))
        total += w * float(np.mean(bce))
    return total


def _dlogit(y: np.ndarray, t: np.ndarray, scale: float) -> np.ndarray:
    # d BCE(sigmoid(a)) / da = y - t, zero where the clamp is active
    inside = (y > PROB_CLAMP) & (y < 1.0 - PROB_CLAMP)
    return np.where(inside, y - t, 0.0) * scale


def backward(
    p: FusedLstmParams,
    trace: ForwardTrace,
    targets: Mapping[str, Any],
    weights: Mapping[str, float] | None = None,
) -> Params:
    """Exact gradient of :func:`loss` with respect to every parameter (BPTT)."""
    cfg = p.config
    H = cfg.hidden_dim
    T = len(trace)
    if T == 0 or trace.steps[0].u.shape != (cfg.concat_dim,):
        got = trace.steps[0].u.shape if T else ()
        raise la.ShapeError(f"backward: trace input width {got} does not match params ({cfg.concat_dim},)")
    _check_targets(trace.outputs, targets)
    grads = zero_grads(p)

    # gradient w.r.t. the (undropped) hidden state coming from the heads
    dh_head = [la.zeros(H) for _ in range(T)]

    def head_back(task: str, t: int, dlogit: float) -> None:
        m = trace.masks[t]
        h_in = trace.steps[t].h if m is None else la.hadamard(trace.steps[t].h, m)
        grads[f"W_{task}"][0] += dlogit * h_in
        grads[f"b_{task}"][0] += dlogit
        dh = dlogit * p[f"W_{task}"][0]
        dh_head[t] += dh if m is None else la.hadamard(dh, m)

    for task in cfg.tasks:
        w = _weight(weights, task)
        if w == 0.0:
            continue
        y = np.asarray(trace.outputs[task], dtype=np.float64)
        tgt = np.asarray(targets[task], dtype=np.float64)
        if task == "next_correct":
            d = _dlogit(y, tgt, w / y.size)
            for k, dk in enumerate(d):
                head_back(task, k + 1, float(dk))
        else:
            head_back(task, T - 1, float(_dlogit(y, tgt, w)))

    dh_next = la.zeros(H)
    dc_next = la.zeros(H)
    for t in range(T - 1, -1, -1):
        st = trace.steps[t]
        dh = la.add(dh_head[t], dh_next)
        do = la.hadamard(dh, st.tanh_c)
        dc = la.add(dc_next, la.hadamard(la.hadamard(dh, st.o), 1.0 - st.tanh_c * st.tanh_c))
        da = {
            "f": la.hadamard(la.hadamard(dc, st.c_prev), st.f * (1.0 - st.f)),
            "i": la.hadamard(la.hadamard(dc, st.g), st.i * (1.0 - st.i)),
            "c": la.hadamard(la.hadamard(dc, st.i), 1.0 - st.g * st.g),
            "o": la.hadamard(do, st.o * (1.0 - st.o)),
        }
        du = la.zeros(cfg.concat_dim)
        for g in GATES:
            u_g = _gate_input(cfg, g, st.u)
            grads[f"W_{g}"] += la.outer(da[g], u_g)
            grads[f"b_{g}"] += da[g]
            du[: u_g.shape[0]] += la.matvec_t(p[f"W_{g}"], da[g])
        dh_next = du[:H]
        dc_next = la.hadamard(dc, st.f)
    return grads


def save_checkpoint(path: str | Path, params: FusedLstmParams, meta: Mapping[str, Any] | None = None) -> None:
    """Write a versioned JSON checkpoint.

    Floats are written with ``repr`` precision, which round-trips float64
    exactly, and keys are emitted in a fixed order so identical parameters
    produce identical bytes. ``meta`` carries anything else the caller needs
    (seed lineage, encoding statistics, config hash).
    """
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "model_config": params.config.to_dict(),
        "meta": dict(meta or {}),
        "tensors": {
            name: {"shape": list(arr.shape), "data": [float(v) for v in arr.ravel()]}
            for name, arr in params.tensors.items()
        },
    }
    Path(path).write_text(json.dumps(doc, indent=None, separators=(",", ":")) + "\n")


def load_checkpoint(path: str | Path) -> tuple[FusedLstmParams, dict[str, Any]]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ModelError(f"{path}: not an edulstm checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ModelError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    cfg = ModelConfig.from_dict(doc["model_config"])
    tensors = {
        name: np.array(spec["data"], dtype=np.float64).reshape(spec["shape"])
        for name, spec in doc["tensors"].items()
    }
    return FusedLstmParams(cfg, tensors), doc.get("meta", {})
