"""Loss functions returning ``(loss, dloss/dpred)``."""

from __future__ import annotations

import numpy as np

BCE_EPS = 1e-7


def bce_loss(pred, label):
    """Mean binary cross-entropy with predictions clamped to [eps, 1 - eps]."""
    pred = np.asarray(pred)
    y = np.broadcast_to(np.asarray(label, dtype=np.float64), pred.shape)
    p = np.clip(pred.astype(np.float64), BCE_EPS, 1 - BCE_EPS)
    loss = -np.mean(y * np.log(p) + (1 - y) * np.log(1 - p))
    grad = (p - y) / (p * (1 - p)) / p.size
    return float(loss), grad.astype(pred.dtype)


def mse_loss(pred, label):
    pred = np.asarray(pred)
    label = np.asarray(label)
    if pred.shape != label.shape:
        raise ValueError(f"mse_loss shape mismatch: pred {pred.shape} vs label {label.shape}")
    diff = pred.astype(np.float64) - label
    loss = np.mean(diff * diff)
    return float(loss), (2.0 * diff / diff.size).astype(pred.dtype)
