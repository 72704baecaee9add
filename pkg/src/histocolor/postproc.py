"""High-resolution recoloring via a fitted global color mapping.

The recoloring is optimized on a 256x256 copy of the image; the color change
is then captured by a least-squares degree-2 polynomial in (R, G, B) and
applied pointwise at full resolution.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from .histogram import HistogramParams, check_image
from .imageio import resize_bilinear
from .recolor import RecolorConfig, recolor

log = logging.getLogger(__name__)

WORK_SIZE = 256
TERMS = ("1", "R", "G", "B", "R^2", "G^2", "B^2", "RG", "RB", "GB")


def poly_features(flat: np.ndarray) -> np.ndarray:
    r, g, b = flat[:, 0], flat[:, 1], flat[:, 2]
    return np.stack([np.ones_like(r), r, g, b, r * r, g * g, b * b, r * g, r * b, g * b], axis=1)


def identity_coefficients() -> np.ndarray:
    coef = np.zeros((len(TERMS), 3))
    coef[1, 0] = coef[2, 1] = coef[3, 2] = 1.0
    return coef


@dataclass(frozen=True)
class ColorMapping:
    """Degree-2 polynomial color map; ``coefficients[t, c]`` weighs term t for output channel c."""

    coefficients: np.ndarray
    residual: float = 0.0
    kind: str = "global_poly"

    def __post_init__(self):
        coef = np.asarray(self.coefficients, dtype=np.float64)
        if coef.shape != (len(TERMS), 3):
            raise ValueError(f"expected ({len(TERMS)}, 3) coefficients, got {coef.shape}")
        if not np.all(np.isfinite(coef)):
            raise ValueError("mapping coefficients must be finite")
        object.__setattr__(self, "coefficients", coef)

    @classmethod
    def identity(cls) -> "ColorMapping":
        return cls(identity_coefficients())

    def to_json(self) -> str:
        doc = {
            "kind": self.kind,
            "terms": list(TERMS),
            # 30 numbers: 10 terms for each of the R, G, B outputs
            "coefficients": {ch: [float(v) for v in self.coefficients[:, c]] for c, ch in enumerate("RGB")},
            "residual_rmse": float(self.residual),
        }
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ColorMapping":
        doc = json.loads(text)
        if doc.get("kind") != "global_poly":
            raise ValueError(f"unsupported mapping kind {doc.get('kind')!r}")
        coef = np.stack([np.asarray(doc["coefficients"][ch], dtype=np.float64) for ch in "RGB"], axis=1)
        return cls(coef, float(doc.get("residual_rmse", 0.0)))


def fit_mapping(small_in, small_out) -> ColorMapping:
    """Least-squares fit of ``small_out`` as a degree-2 polynomial of ``small_in`` colors.

    A rank-deficient design (e.g. a constant image) falls back to the best
    per-channel constant offset.
    """
    small_in = check_image(small_in)
    small_out = check_image(small_out)
    if small_in.shape != small_out.shape:
        raise ValueError("input and output images must have the same dimensions")
    x = small_in.reshape(-1, 3)
    y = small_out.reshape(-1, 3)
    if x.shape[0] < len(TERMS):
        raise ValueError(f"need at least {len(TERMS)} pixels to fit a mapping")
    design = poly_features(x)
    if np.linalg.matrix_rank(design) < len(TERMS):
        log.warning("color mapping design is rank deficient; falling back to a constant offset")
        coef = identity_coefficients()
        coef[0] = (y - x).mean(axis=0)
    else:
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = design @ coef - y
    return ColorMapping(coef, float(np.sqrt(np.mean(resid * resid))))


def apply_mapping(full, mapping: ColorMapping) -> np.ndarray:
    img = check_image(full)
    flat = img.reshape(-1, 3)
    out = np.empty_like(flat)
    # row blocks bound the size of the feature matrix on large images
    step = 1 << 18
    for start in range(0, flat.shape[0], step):
        block = flat[start : start + step]
        out[start : start + step] = poly_features(block) @ mapping.coefficients
    return np.clip(out, 0.0, 1.0).reshape(img.shape)


@dataclass
class HiresResult:
    image: np.ndarray
    small_in: np.ndarray
    small_out: np.ndarray
    mapping: ColorMapping | None
    trace: list


def recolor_hires_detailed(full, h_target, cfg: RecolorConfig = RecolorConfig(),
                           params: HistogramParams = HistogramParams(),
                           size: int = WORK_SIZE) -> HiresResult:
    img = check_image(full)
    if img.shape[0] <= size and img.shape[1] <= size:
        out, trace = recolor(img, h_target, cfg, params)
        return HiresResult(out, img, out, None, trace)
    small_in = np.clip(resize_bilinear(img, size, size), 0.0, 1.0)
    small_out, trace = recolor(small_in, h_target, cfg, params)
    mapping = fit_mapping(small_in, small_out)
    return HiresResult(apply_mapping(img, mapping), small_in, small_out, mapping, trace)


def recolor_hires(full, h_target, cfg: RecolorConfig = RecolorConfig(),
                  params: HistogramParams = HistogramParams()) -> np.ndarray:
    """Recolor at 256x256 and carry the color change to full resolution."""
    return recolor_hires_detailed(full, h_target, cfg, params).image
