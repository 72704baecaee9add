"""Similarity measures between normalized histograms."""

from __future__ import annotations

import numpy as np

SQRT_FLOOR = 1e-12


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"histogram shapes differ: {a.shape} vs {b.shape}")
    return a, b


def hellinger(a, b) -> float:
    """Hellinger distance ``||sqrt(a) - sqrt(b)||_2 / sqrt(2)``."""
    a, b = _pair(a, b)
    d = np.sqrt(a) - np.sqrt(b)
    return float(np.sqrt(np.sum(d * d) / 2.0))


def bhattacharyya(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.sum(np.sqrt(a * b)))


def kl_divergence(target, approx, smoothing: float = 1e-6) -> float:
    """Smoothed KL(target || approx)."""
    target, approx = _pair(target, approx)
    if not smoothing > 0:
        raise ValueError(f"smoothing must be positive, got {smoothing}")
    return float(np.sum(target * np.log((target + smoothing) / (approx + smoothing))))


def hellinger_backward(a, b) -> np.ndarray:
    """Gradient of ``hellinger(a, b)`` with respect to ``a``.

    Entries of ``a`` are floored at 1e-12 before the square root. At ``a == b``
    the distance has a cone-shaped minimum and the returned gradient is zero.
    """
    a, b = _pair(a, b)
    ra = np.sqrt(np.maximum(a, SQRT_FLOOR))
    d = ra - np.sqrt(b)
    norm = np.sqrt(np.sum(d * d))
    if norm == 0.0:
        return np.zeros_like(a)
    return d / (2.0 * np.sqrt(2.0) * norm * ra)
