"""Comparison predictors for the next-interaction correctness task.

Each baseline scores the same instances as the LSTM's ``next_correct`` head:
for a student with outcomes ``c_0..c_{T-1}`` the instance at position ``t``
(``1 <= t < T``) predicts ``c_t`` using only the first ``t`` interactions.

* majority: the most frequent training label.
* logreg: logistic regression by full-batch gradient descent on aggregate
  prefix features (running correctness rate, mean normalized elapsed time,
  log event count) plus the student's static vector.
* knn: vote of the ``k`` nearest training instances, either by Euclidean
  distance over the standardized aggregate features or by DTW over the last
  ``window`` outcomes of the prefix. Every training instance tied with the
  k-th nearest distance joins the vote; a tied vote falls back to the
  training majority label.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..data.encoding import EncodedSequence
from ..linalg import sigmoid
from .dtw import binary_pattern_distances
from .metrics import Metrics, binary_metrics

TASK = "next_correct"
DEFAULT_DTW_WINDOW = 8


class BaselineError(ValueError):
    pass


def aggregate_features(seq: EncodedSequence) -> np.ndarray:
    """Prefix features for every instance ``t = 1..T-1`` (one row each)."""
    T = len(seq)
    c = seq.correct.astype(np.float64)
    counts = np.arange(1, T)
    rate = np.cumsum(c)[:-1] / counts
    elapsed = np.cumsum(seq.elapsed)[:-1] / counts
    log_count = np.log1p(counts)
    dense = np.column_stack([rate, elapsed, log_count])
    if seq.z.size:
        dense = np.hstack([dense, np.tile(seq.z, (T - 1, 1))])
    return dense


def _instances(seqs: Sequence[EncodedSequence]) -> tuple[np.ndarray, np.ndarray]:
    if len(seqs) == 0:
        raise BaselineError("empty instance set")
    X = np.vstack([aggregate_features(s) for s in seqs])
    y = np.concatenate([s.next_correct for s in seqs]) >= 0.5
    return X, y


def _majority_label(y: np.ndarray) -> bool:
    return bool(2 * int(y.sum()) >= y.size)


def baseline_majority(train: Sequence[EncodedSequence], test: Sequence[EncodedSequence]) -> Metrics:
    _, y_train = _instances(train)
    _, y_test = _instances(test)
    pred = np.full(y_test.shape, _majority_label(y_train))
    return {TASK: binary_metrics(pred, y_test)}


def fit_logreg(X: np.ndarray, y: np.ndarray, lr: float = 0.5, iters: int = 500) -> tuple[np.ndarray, float]:
    """Minimize mean logistic loss by gradient descent from zero weights."""
    w = np.zeros(X.shape[1])
    b = 0.0
    yf = y.astype(np.float64)
    n = X.shape[0]
    for _ in range(iters):
        r = sigmoid(X @ w + b) - yf
        w = w - lr * (X.T @ r) / n
        b = b - lr * float(r.sum()) / n
    return w, b


class _Standardizer:
    def __init__(self, X: np.ndarray):
        self.mean = X.mean(axis=0)
        std = X.std(axis=0)
        self.std = np.where(std > 0, std, 1.0)

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.std


def baseline_logreg(
    train: Sequence[EncodedSequence],
    test: Sequence[EncodedSequence],
    lr: float = 0.5,
    iters: int = 500,
    threshold: float = 0.5,
) -> Metrics:
    X_train, y_train = _instances(train)
    X_test, y_test = _instances(test)
    scale = _Standardizer(X_train)
    w, b = fit_logreg(scale(X_train), y_train, lr, iters)
    pred = sigmoid(scale(X_test) @ w + b) >= threshold
    return {TASK: binary_metrics(pred, y_test)}


def knn_vote(dist: np.ndarray, pos: np.ndarray, neg: np.ndarray, k: int, fallback: bool) -> bool:
    """Tie-inclusive k-NN vote over weighted reference points.

    ``dist[j]`` is the distance to reference ``j`` which stands for ``pos[j]``
    positive and ``neg[j]`` negative training instances.
    """
    order = np.argsort(dist, kind="stable")
    covered = np.cumsum((pos + neg)[order])
    cut = int(np.searchsorted(covered, k))
    chosen = dist <= dist[order[cut]]
    p, n = int(pos[chosen].sum()), int(neg[chosen].sum())
    if p == n:
        return fallback
    return p > n


def _windows(seq: EncodedSequence, window: int) -> list[tuple[int, ...]]:
    c = tuple(int(v) for v in seq.correct)
    return [c[max(0, t - window) : t] for t in range(1, len(c))]


def baseline_knn(
    train: Sequence[EncodedSequence],
    test: Sequence[EncodedSequence],
    k: int = 15,
    distance: str = "euclidean_aggregate",
    window: int = DEFAULT_DTW_WINDOW,
) -> Metrics:
    if distance not in ("euclidean_aggregate", "dtw"):
        raise BaselineError(f"unknown knn distance {distance!r}")
    X_train, y_train = _instances(train)
    X_test, y_test = _instances(test)
    if k < 1 or k > y_train.size:
        raise BaselineError(f"k={k} must lie in [1, {y_train.size}] (training instances)")
    fallback = _majority_label(y_train)

    if distance == "dtw":
        index, D = binary_pattern_distances(window)
        train_pat = np.array([index[w] for s in train for w in _windows(s, window)])
        test_pat = [index[w] for s in test for w in _windows(s, window)]
        label = y_train.astype(np.float64)
        pos = np.bincount(train_pat, weights=label, minlength=len(index))
        neg = np.bincount(train_pat, weights=1.0 - label, minlength=len(index))
        present = np.flatnonzero(pos + neg)
        votes = {
            q: knn_vote(D[q, present], pos[present], neg[present], k, fallback) for q in sorted(set(test_pat))
        }
        pred = np.array([votes[q] for q in test_pat])
        return {TASK: binary_metrics(pred, y_test)}

    scale = _Standardizer(X_train)
    A, B = scale(X_train), scale(X_test)
    ones = y_train.astype(np.float64)
    pred = np.empty(y_test.size, dtype=bool)
    for start in range(0, B.shape[0], 128):
        Q = B[start : start + 128]
        d2 = np.sum((Q[:, None, :] - A[None, :, :]) ** 2, axis=2)
        for r in range(Q.shape[0]):
            pred[start + r] = knn_vote(d2[r], ones, 1.0 - ones, k, fallback)
    return {TASK: binary_metrics(pred, y_test)}
