"""Classification losses on raw scores and their gradients w.r.t. the scores."""
from __future__ import annotations

import enum

import numpy as np

from .tensor import as_tensor


class LossKind(enum.Enum):
    # One-vs-rest squared hinge: sum_k max(0, 1 - t_k f_k)^2 with t_k = +1 for
    # the true class and -1 otherwise. Summed (not averaged) over classes.
    SQUARED_HINGE = "squared_hinge"
    # Softmax + negative log-likelihood, computed with max subtraction.
    CROSS_ENTROPY = "cross_entropy"


def _check_labels(labels: np.ndarray, k: int) -> None:
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise IndexError(f"label out of range [0, {k})")


def _targets(labels: np.ndarray, k: int) -> np.ndarray:
    t = -np.ones((labels.shape[0], k))
    t[np.arange(labels.shape[0]), labels] = 1.0
    return t


def loss_value_batch(kind: LossKind, scores, labels) -> np.ndarray:
    """Per-instance loss values for scores (B, K) and integer labels (B,)."""
    scores = as_tensor(scores)
    labels = np.asarray(labels, dtype=np.int64)
    k = scores.shape[1]
    _check_labels(labels, k)
    if kind is LossKind.SQUARED_HINGE:
        viol = np.maximum(0.0, 1.0 - _targets(labels, k) * scores)
        return np.sum(viol * viol, axis=1)
    z = scores - scores.max(axis=1, keepdims=True)
    lse = np.log(np.sum(np.exp(z), axis=1))
    return lse - z[np.arange(labels.shape[0]), labels]


def loss_grad_scores_batch(kind: LossKind, scores, labels) -> np.ndarray:
    """Gradient of each instance's loss w.r.t. its score row, shape (B, K)."""
    scores = as_tensor(scores)
    labels = np.asarray(labels, dtype=np.int64)
    k = scores.shape[1]
    _check_labels(labels, k)
    if kind is LossKind.SQUARED_HINGE:
        t = _targets(labels, k)
        viol = np.maximum(0.0, 1.0 - t * scores)
        return -2.0 * t * viol
    z = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(z)
    grad = e / e.sum(axis=1, keepdims=True)
    grad[np.arange(labels.shape[0]), labels] -= 1.0
    return grad


def loss_value(kind: LossKind, scores, label: int) -> float:
    """Loss for a single score vector (K,)."""
    return float(loss_value_batch(kind, as_tensor(scores)[None, :], np.array([label]))[0])


def loss_grad_scores(kind: LossKind, scores, label: int) -> np.ndarray:
    """Loss gradient for a single score vector (K,)."""
    return loss_grad_scores_batch(kind, as_tensor(scores)[None, :], np.array([label]))[0]
