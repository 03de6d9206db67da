"""Stateless building blocks with hand-written backward passes.

Every forward function returns ``(output, cache)``; the matching backward
takes the upstream gradient and the cache, accumulates parameter gradients
into the ``grads`` dict it is given and returns input gradients.
Arrays are row-major with the batch on the first axis.
"""
from __future__ import annotations

import numpy as np


def sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = logits - logits.max(axis=axis, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=axis, keepdims=True)


def log_softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = logits - logits.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def dense_forward(x, W, b):
    return x @ W + b, x


def dense_backward(dy, cache, W, grads, prefix):
    x = cache
    x2 = x.reshape(-1, x.shape[-1])
    dy2 = dy.reshape(-1, dy.shape[-1])
    grads[prefix + "W"] += x2.T @ dy2
    grads[prefix + "b"] += dy2.sum(axis=0)
    return dy @ W.T


def dropout(x: np.ndarray, rate: float, training: bool, rng: np.random.Generator | None):
    """Inverted dropout. Returns ``(y, mask)``; ``mask`` is None when inactive."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x, None
    if rng is None:
        raise ValueError("training-mode dropout needs an rng")
    keep = 1.0 - rate
    mask = (rng.random(x.shape) < keep) / keep
    return x * mask, mask


def dropout_backward(dy: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    return dy if mask is None else dy * mask


def softmax_xent(
    logits: np.ndarray,
    targets: np.ndarray,
    class_weights: np.ndarray | None = None,
    mask: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """Weighted mean cross-entropy over the leading axes of ``logits``.

    ``targets`` holds integer class indices with the shape of ``logits``
    minus its last axis. Positions where ``mask`` is 0 contribute nothing.
    The mean is normalised by the summed weight of the counted positions,
    so uniform weights reduce to the plain mean.
    """
    K = logits.shape[-1]
    flat = logits.reshape(-1, K)
    t = np.asarray(targets).reshape(-1).astype(np.int64)
    w = np.ones(len(t)) if class_weights is None else np.asarray(class_weights, dtype=float)[t]
    if mask is not None:
        w = w * np.asarray(mask, dtype=float).reshape(-1)
    denom = w.sum()
    logp = log_softmax(flat)
    if denom <= 0:
        return 0.0, np.zeros_like(logits)
    rows = np.arange(len(t))
    loss = -(w * logp[rows, t]).sum() / denom
    grad = np.exp(logp)
    grad[rows, t] -= 1.0
    grad *= (w / denom)[:, None]
    return float(loss), grad.reshape(logits.shape)
