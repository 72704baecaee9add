"""Differentiable RGB-uv histogram feature.

Images are float arrays of shape (H, W, 3) with values in [0, 1]. The
histogram is an (h, h, 3) array indexed as ``hist[u, v, c]`` where ``c`` is
the primary channel (R, G, B) used for the log-chroma projection.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "DegenerateImageError",
    "HistogramParams",
    "LogChromaPlanes",
    "CHANNEL_PAIRS",
    "check_image",
    "project_log_chroma",
    "kernel_weight",
    "compute_histogram",
    "histogram_backward",
    "histogram_vjp",
    "write_hgf",
    "read_hgf",
    "hgf_bytes",
]

HGF_MAGIC = b"HGF1"

# (primary, u-denominator, v-denominator) for c = R, G, B
CHANNEL_PAIRS = ((0, 1, 2), (1, 0, 2), (2, 0, 1))


class DegenerateImageError(ValueError):
    """Raised when an image has zero total intensity (all black)."""


@dataclass(frozen=True)
class HistogramParams:
    h: int = 64
    tau: float = 0.02
    epsilon: float = 1.0 / 255.0
    uv_min: float = -3.0
    uv_max: float = 3.0

    def __post_init__(self):
        if int(self.h) != self.h or self.h < 2:
            raise ValueError(f"bin count must be an integer >= 2, got {self.h}")
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not self.uv_min < self.uv_max:
            raise ValueError("uv_min must be smaller than uv_max")

    @property
    def centers(self) -> np.ndarray:
        return np.linspace(self.uv_min, self.uv_max, self.h)

    def as_dict(self) -> dict:
        return {
            "h": self.h,
            "tau": self.tau,
            "epsilon": self.epsilon,
            "uv_min": self.uv_min,
            "uv_max": self.uv_max,
        }


@dataclass(frozen=True)
class LogChromaPlanes:
    """Per-pixel log-chroma coordinates.

    ``u`` and ``v`` have shape (N, 3), one column per primary channel, and
    ``intensity`` has shape (N,). Pixels are flattened in row-major order.
    """

    u: np.ndarray
    v: np.ndarray
    intensity: np.ndarray
    shape: tuple


def check_image(image) -> np.ndarray:
    """Validate an image and return it as a float64 (H, W, 3) array."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got shape {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError("image must have at least one pixel")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ValueError("image values must lie in [0, 1]")
    return img


def project_log_chroma(image, params: HistogramParams = HistogramParams()) -> LogChromaPlanes:
    img = check_image(image)
    flat = img.reshape(-1, 3)
    logs = np.log(flat + params.epsilon)
    u = np.empty_like(flat)
    v = np.empty_like(flat)
    for c, (p, q, r) in enumerate(CHANNEL_PAIRS):
        u[:, c] = logs[:, p] - logs[:, q]
        v[:, c] = logs[:, p] - logs[:, r]
    intensity = np.sqrt(np.einsum("ij,ij->i", flat, flat))
    return LogChromaPlanes(u=u, v=v, intensity=intensity, shape=img.shape)


def kernel_weight(du, dv, tau):
    """Inverse-quadratic bin weight for log-chroma offsets ``du``, ``dv``."""
    du = np.abs(du) / tau
    dv = np.abs(dv) / tau
    return 1.0 / (1.0 + du * du) / (1.0 + dv * dv)


def _axis_weights(coord: np.ndarray, centers: np.ndarray, tau: float):
    """Return (N, h) kernel factors and the scaled offsets they came from."""
    d = coord[:, None] - centers[None, :]
    d *= 1.0 / tau
    k = d * d
    k += 1.0
    np.reciprocal(k, out=k)
    return k, d


CHUNK = 2048


def _canonical_order(flat: np.ndarray) -> np.ndarray:
    # sum pixels in color order so the result ignores pixel positions
    return np.lexsort((flat[:, 2], flat[:, 1], flat[:, 0]))


def _chunks(n):
    for start in range(0, n, CHUNK):
        yield slice(start, min(start + CHUNK, n))


def _unnormalized(planes: LogChromaPlanes, params: HistogramParams):
    centers = params.centers
    hu = np.zeros((params.h, params.h, 3))
    n = planes.intensity.shape[0]
    for sl in _chunks(n):
        for c in range(3):
            ku, _ = _axis_weights(planes.u[sl, c], centers, params.tau)
            kv, _ = _axis_weights(planes.v[sl, c], centers, params.tau)
            kv *= planes.intensity[sl, None]
            hu[:, :, c] += ku.T @ kv
    total = math.fsum(hu.ravel())
    if not total > 0.0:
        raise DegenerateImageError("degenerate image: total intensity is zero")
    return hu, total


def _sorted_planes(img: np.ndarray, params: HistogramParams):
    flat = img.reshape(-1, 3)
    order = _canonical_order(flat)
    return order, project_log_chroma(flat[order][None], params)


def compute_histogram(image, params: HistogramParams = HistogramParams()) -> np.ndarray:
    """Normalized (h, h, 3) RGB-uv histogram of ``image``."""
    img = check_image(image)
    _, planes = _sorted_planes(img, params)
    hu, total = _unnormalized(planes, params)
    return hu / total


def histogram_backward(image, params: HistogramParams, upstream) -> np.ndarray:
    """Gradient of ``sum(upstream * compute_histogram(image))`` w.r.t. pixels."""
    return histogram_vjp(image, params, lambda hist: upstream)[1]


def histogram_vjp(image, params: HistogramParams, upstream_fn):
    """Forward pass plus a backward pass driven by ``upstream_fn(hist)``.

    Returns ``(hist, grad)``; sharing the forward pass saves one evaluation
    when the upstream gradient depends on the histogram itself.
    """
    img = check_image(image)
    order, planes = _sorted_planes(img, params)
    hu, total = _unnormalized(planes, params)
    hist = hu / total
    upstream = np.asarray(upstream_fn(hist), dtype=np.float64)
    if upstream.shape != (params.h, params.h, 3):
        raise ValueError(
            f"upstream must have shape {(params.h, params.h, 3)}, got {upstream.shape}"
        )
    if not np.all(np.isfinite(upstream)):
        raise ValueError("upstream gradient contains non-finite values")
    if not np.any(upstream):
        return hist, np.zeros_like(img)

    centers = params.centers
    tau = params.tau
    loss = float(np.sum(upstream * hu)) / total
    g_hu = [np.ascontiguousarray((upstream[:, :, c] - loss) / total) for c in range(3)]

    flat = img.reshape(-1, 3)[order]
    n = flat.shape[0]
    grad_u = np.empty((n, 3))
    grad_v = np.empty((n, 3))
    grad_y = np.zeros(n)
    iy = planes.intensity
    for sl in _chunks(n):
        for c in range(3):
            ku, du = _axis_weights(planes.u[sl, c], centers, tau)
            kv, dv = _axis_weights(planes.v[sl, c], centers, tau)
            a = kv @ g_hu[c].T  # sum_j g[i, j] kv[x, j]
            b = ku @ g_hu[c]  # sum_i g[i, j] ku[x, i]
            grad_y[sl] += np.einsum("ij,ij->i", ku, a)
            # d/dI of (1 + d^2)^-1 with d = (I - center) / tau
            ku *= ku
            ku *= du
            kv *= kv
            kv *= dv
            grad_u[sl, c] = (-2.0 / tau) * iy[sl] * np.einsum("ij,ij->i", ku, a)
            grad_v[sl, c] = (-2.0 / tau) * iy[sl] * np.einsum("ij,ij->i", kv, b)

    inv = 1.0 / (flat + params.epsilon)
    grad = np.zeros_like(flat)
    for c, (p, q, r) in enumerate(CHANNEL_PAIRS):
        grad[:, p] += (grad_u[:, c] + grad_v[:, c]) * inv[:, p]
        grad[:, q] -= grad_u[:, c] * inv[:, q]
        grad[:, r] -= grad_v[:, c] * inv[:, r]
    safe = np.where(iy > 0, iy, 1.0)
    grad += np.where(iy[:, None] > 0, flat / safe[:, None], 0.0) * grad_y[:, None]
    out = np.empty_like(grad)
    out[order] = grad
    return hist, out.reshape(img.shape)


def hgf_bytes(hist) -> bytes:
    hist = np.asarray(hist)
    if hist.ndim != 3 or hist.shape[0] != hist.shape[1] or hist.shape[2] != 3:
        raise ValueError(f"expected an (h, h, 3) histogram, got shape {hist.shape}")
    header = HGF_MAGIC + struct.pack("<I", hist.shape[0])
    return header + np.ascontiguousarray(hist, dtype="<f4").tobytes()


def write_hgf(path, hist) -> None:
    from .imageio import atomic_write_bytes

    atomic_write_bytes(path, hgf_bytes(hist))


def read_hgf(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 8 or data[:4] != HGF_MAGIC:
        raise ValueError(f"{path}: not an HGF1 histogram file")
    (h,) = struct.unpack("<I", data[4:8])
    expected = 8 + h * h * 3 * 4
    if len(data) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(data)}")
    hist = np.frombuffer(data, dtype="<f4", offset=8).reshape(h, h, 3).astype(np.float64)
    # float32 storage loses the exact unit sum
    return hist / hist.sum()
