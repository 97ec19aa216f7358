"""Pair distances and the margin contrastive objective.

The training/evaluation distance is the Euclidean distance between the
two embeddings; the literal component-mismatch count is kept alongside it
as `mismatch_count` for score-style reporting (it is not differentiable
and is never trained on).
"""

from __future__ import annotations

import numpy as np

from ..errors import LengthMismatchError


def _check_lengths(v1, v2) -> tuple[np.ndarray, np.ndarray]:
    v1 = np.asarray(v1, dtype=np.float64)
    v2 = np.asarray(v2, dtype=np.float64)
    if v1.shape != v2.shape:
        raise LengthMismatchError(f"vector shapes differ: {v1.shape} vs {v2.shape}")
    return v1, v2


def pair_distance(v1, v2) -> float:
    """Euclidean distance between two feature vectors."""
    v1, v2 = _check_lengths(v1, v2)
    return float(np.sqrt(np.sum((v1 - v2) ** 2)))


def mismatch_count(v1, v2, tol: float = 0.0) -> int:
    """Number of components differing by more than `tol`."""
    if tol < 0:
        raise ValueError("tol must be non-negative")
    v1, v2 = _check_lengths(v1, v2)
    return int(np.count_nonzero(np.abs(v1 - v2) > tol))


def contrastive_loss(v1, v2, c: int, margin: float = 2.0) -> float:
    """c*d^2 + (1-c)*max(margin-d, 0)^2 with d the Euclidean pair distance.

    Zero exactly when a similar pair coincides (c=1, d=0) or a dissimilar
    pair is at least `margin` apart.
    """
    if margin <= 0:
        raise ValueError("margin must be positive")
    d = pair_distance(v1, v2)
    return c * d * d + (1 - c) * max(margin - d, 0.0) ** 2


def contrastive_batch(
    v1: np.ndarray, v2: np.ndarray, c: np.ndarray, margin: float
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean contrastive loss over a batch of pairs plus its embedding gradients.

    v1, v2: (B, L) embeddings; c: (B,) labels in {0, 1}.
    Returns (loss, dL/dv1, dL/dv2).
    """
    diff = v1 - v2
    d = np.sqrt(np.sum(diff * diff, axis=1))
    hinge = np.maximum(margin - d, 0.0)
    losses = c * d * d + (1.0 - c) * hinge * hinge
    b = v1.shape[0]
    loss = float(losses.sum() / b)
    # d(c*d^2)/dv1 = 2c*diff; d(hinge^2)/dv1 = -2*hinge*diff/d (zero at d >= margin).
    safe_d = np.where(d > 0.0, d, 1.0)
    coef = 2.0 * c - 2.0 * (1.0 - c) * np.where(d > 0.0, hinge / safe_d, 0.0)
    dv1 = (coef[:, None] * diff) / b
    return loss, dv1.astype(v1.dtype), (-dv1).astype(v2.dtype)
