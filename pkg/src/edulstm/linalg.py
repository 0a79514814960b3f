"""Dense float64 vector/matrix helpers used by the recurrent model.

Matrices are 2-D ``numpy.ndarray`` objects in row-major (C) order and vectors
are 1-D arrays. Every function checks shapes explicitly, never broadcasts, and
returns a fresh array, so callers can treat all values as immutable.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

SIGMOID_CLAMP = 500.0


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


def _shape(a: np.ndarray) -> str:
    return "x".join(str(d) for d in a.shape) or "scalar"


def as_vector(values) -> np.ndarray:
    v = np.array(values, dtype=np.float64)
    if v.ndim != 1:
        raise ShapeError(f"expected a vector, got shape {_shape(v)}")
    return v


def as_matrix(values) -> np.ndarray:
    m = np.array(values, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"expected a matrix, got shape {_shape(m)}")
    return m


def zeros(rows: int, cols: int | None = None) -> np.ndarray:
    if cols is None:
        return np.zeros(rows, dtype=np.float64)
    return np.zeros((rows, cols), dtype=np.float64)


def identity(n: int) -> np.ndarray:
    return np.eye(n, dtype=np.float64)


def _same_len(a: np.ndarray, b: np.ndarray, op: str) -> None:
    if a.ndim != 1 or b.ndim != 1 or a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {_shape(a)} vs {_shape(b)}")


def matvec(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Return ``m @ v`` after checking ``m.cols == v.len``."""
    if m.ndim != 2 or v.ndim != 1 or m.shape[1] != v.shape[0]:
        raise ShapeError(f"matvec: shape mismatch {_shape(m)} vs {_shape(v)}")
    return m @ v


def matvec_t(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Return ``m.T @ v`` (used to push gradients back through a layer)."""
    if m.ndim != 2 or v.ndim != 1 or m.shape[0] != v.shape[0]:
        raise ShapeError(f"matvec_t: shape mismatch {_shape(m)}^T vs {_shape(v)}")
    return m.T @ v


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: shape mismatch {_shape(a)} vs {_shape(b)}")
    return a @ b


def concat(parts: Sequence[np.ndarray]) -> np.ndarray:
    """Concatenate vectors in order; empty parts are allowed."""
    if len(parts) == 0:
        raise ShapeError("concat: need at least one part")
    for p in parts:
        if p.ndim != 1:
            raise ShapeError(f"concat: expected vectors, got shape {_shape(p)}")
    return np.concatenate(parts).astype(np.float64, copy=False)


def sigmoid(v: np.ndarray) -> np.ndarray:
    """Logistic function with the input clamped to +/-500 to keep outputs finite."""
    x = np.clip(v, -SIGMOID_CLAMP, SIGMOID_CLAMP)
    return 1.0 / (1.0 + np.exp(-x))


def tanh(v: np.ndarray) -> np.ndarray:
    return np.tanh(v)


def hadamard(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _same_len(a, b, "hadamard")
    return a * b


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _same_len(a, b, "add")
    return a + b


def axpy(s: float, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Return ``s * a + b``."""
    _same_len(a, b, "axpy")
    return s * a + b


def outer(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 1 or b.ndim != 1:
        raise ShapeError(f"outer: expected vectors, got {_shape(a)} and {_shape(b)}")
    return np.outer(a, b)
