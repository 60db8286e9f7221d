"""Small stable-numerics helpers shared across modules."""

from __future__ import annotations

import numpy as np


def logsumexp(x: np.ndarray, axis=None, keepdims=False):
    """Stable log-sum-exp; all -inf inputs yield -inf instead of NaN."""
    x = np.asarray(x, dtype=float)
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    out = np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True)) + m
    if keepdims:
        return out
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def softmax(x: np.ndarray, axis=-1) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    m = np.max(x, axis=axis, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=axis, keepdims=True)


def sigmoid(x):
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty_like(arr)
    pos = arr >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-arr[pos]))
    ex = np.exp(arr[~pos])
    out[~pos] = ex / (1.0 + ex)
    if np.ndim(x) == 0:
        return float(out[0])
    return out
