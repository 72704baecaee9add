"""Image decode/encode and atomic file writes."""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import cv2
import numpy as np


class GrayscaleImageError(ValueError):
    pass


def atomic_write_bytes(path, data: bytes) -> None:
    """Write ``data`` to ``path`` via a temp file in the same directory + rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        # mkstemp creates 0600; give the result the usual umask-derived mode
        umask = os.umask(0)
        os.umask(umask)
        os.fchmod(fd, 0o666 & ~umask)
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def read_image(path, allow_gray: bool = False) -> np.ndarray:
    """Decode an 8/16-bit PNG or JPEG into a float64 RGB array in [0, 1].

    Grayscale files raise :class:`GrayscaleImageError` unless ``allow_gray``
    is set, in which case the single channel is replicated.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise OSError(f"cannot decode image: {path}")
    if raw.dtype == np.uint8:
        scale = 255.0
    elif raw.dtype == np.uint16:
        scale = 65535.0
    else:
        raise OSError(f"unsupported sample type {raw.dtype} in {path}")
    if raw.ndim == 2 or raw.shape[2] == 1 or (raw.shape[2] == 2):
        if not allow_gray:
            raise GrayscaleImageError(
                f"{path} is a grayscale image; colorizing grayscale input is not supported"
            )
        gray = raw if raw.ndim == 2 else raw[:, :, 0]
        return np.repeat(gray[:, :, None].astype(np.float64) / scale, 3, axis=2)
    rgb = raw[:, :, 2::-1] if raw.shape[2] == 3 else raw[:, :, [2, 1, 0]]
    return np.ascontiguousarray(rgb, dtype=np.float64) / scale


def encode_png(image, bits: int = 8) -> bytes:
    img = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    if bits == 8:
        data = np.round(img * 255.0).astype(np.uint8)
    elif bits == 16:
        data = np.round(img * 65535.0).astype(np.uint16)
    else:
        raise ValueError("bits must be 8 or 16")
    ok, buf = cv2.imencode(".png", np.ascontiguousarray(data[:, :, ::-1]))
    if not ok:
        raise OSError("PNG encoding failed")
    return buf.tobytes()


def write_image(path, image, bits: int = 8) -> None:
    atomic_write_bytes(path, encode_png(image, bits))


def resize_bilinear(image, height: int, width: int) -> np.ndarray:
    img = np.ascontiguousarray(image, dtype=np.float64)
    return cv2.resize(img, (width, height), interpolation=cv2.INTER_LINEAR)
