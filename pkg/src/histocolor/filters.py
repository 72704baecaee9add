"""Small linear image filters with replicate borders, and their adjoints.

All filters act per channel on (H, W, C) float arrays. Adjoints are needed to
back-propagate losses defined on filter responses to the pixels.
"""

from __future__ import annotations

import functools
import math

import numpy as np

LAPLACIAN = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])
SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T.copy()


def correlate3x3(image: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """3x3 correlation with replicate padding.

    Computed as sum_k w_k (x_k - x_center) + sum(w) x_center, so zero-sum
    kernels return exact zeros on flat regions.
    """
    h, w = image.shape[:2]
    image = np.asarray(image, dtype=np.float64)
    padded = np.pad(image, ((1, 1), (1, 1), (0, 0)), mode="edge")
    out = np.zeros_like(image)
    for a in range(3):
        for b in range(3):
            if kernel[a, b] != 0.0 and (a, b) != (1, 1):
                out += kernel[a, b] * (padded[a : a + h, b : b + w] - image)
    total = float(kernel.sum())
    if total != 0.0:
        out += total * image
    return out


def correlate3x3_adjoint(grad: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    h, w = grad.shape[:2]
    gp = np.zeros((h + 2, w + 2) + grad.shape[2:])
    for a in range(3):
        for b in range(3):
            if kernel[a, b] != 0.0:
                gp[a : a + h, b : b + w] += kernel[a, b] * grad
    # fold the replicated border back onto the edge pixels
    rows = gp[1:-1].copy()
    rows[0] += gp[0]
    rows[-1] += gp[-1]
    out = rows[:, 1:-1].copy()
    out[:, 0] += rows[:, 0]
    out[:, -1] += rows[:, -1]
    return out


def gaussian_taps(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian of standard deviation ``sigma``, radius ceil(3 sigma)."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    taps = np.exp(-0.5 * (x / sigma) ** 2)
    return taps / taps.sum()


@functools.lru_cache(maxsize=16)
def blur_matrix(n: int, sigma: float) -> np.ndarray:
    """(n, n) matrix applying the 1-D Gaussian with replicate padding (read-only, cached)."""
    taps = gaussian_taps(sigma)
    radius = len(taps) // 2
    m = np.zeros((n, n))
    rows = np.arange(n)
    for t, wt in enumerate(taps):
        cols = np.clip(rows + t - radius, 0, n - 1)
        np.add.at(m, (rows, cols), wt)
    m.setflags(write=False)
    return m


def gaussian_blur(image: np.ndarray, sigma: float) -> np.ndarray:
    mh = blur_matrix(image.shape[0], sigma)
    mw = blur_matrix(image.shape[1], sigma)
    out = np.empty(image.shape)
    for c in range(image.shape[2]):
        out[:, :, c] = mh @ image[:, :, c] @ mw.T
    return out


def gaussian_blur_adjoint(grad: np.ndarray, sigma: float) -> np.ndarray:
    mh = blur_matrix(grad.shape[0], sigma)
    mw = blur_matrix(grad.shape[1], sigma)
    out = np.empty(grad.shape)
    for c in range(grad.shape[2]):
        out[:, :, c] = mh.T @ grad[:, :, c] @ mw
    return out
