"""Target histogram generation: interpolation and sampling from a pool."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .histogram import (
    DegenerateImageError,
    HistogramParams,
    compute_histogram,
    read_hgf,
    write_hgf,
)
from .imageio import atomic_write_text, read_image

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}


def interpolate(h1, h2, delta: float) -> np.ndarray:
    """Convex combination ``delta * h1 + (1 - delta) * h2``."""
    h1 = np.asarray(h1, dtype=np.float64)
    h2 = np.asarray(h2, dtype=np.float64)
    if h1.shape != h2.shape:
        raise ValueError(f"histogram shapes differ: {h1.shape} vs {h2.shape}")
    if not 0.0 <= delta <= 1.0:
        raise ValueError(f"delta must lie in [0, 1], got {delta}")
    if delta == 1.0:
        return h1.copy()
    if delta == 0.0:
        return h2.copy()
    return delta * h1 + (1.0 - delta) * h2


@dataclass
class TargetDraw:
    hist: np.ndarray
    first: str
    second: str | None
    delta: float


@dataclass
class HistogramPool:
    entries: list = field(default_factory=list)
    ids: list = field(default_factory=list)
    rng_seed: int = 0
    errors: list = field(default_factory=list)

    def __post_init__(self):
        self._rng = np.random.default_rng(self.rng_seed)

    def __len__(self):
        return len(self.entries)

    def add(self, source_id: str, hist) -> None:
        hist = np.asarray(hist, dtype=np.float64)
        if self.entries and hist.shape != self.entries[0].shape:
            raise ValueError(
                f"{source_id}: shape {hist.shape} does not match pool shape {self.entries[0].shape}"
            )
        self.entries.append(hist)
        self.ids.append(source_id)

    def reseed(self, seed: int) -> None:
        self.rng_seed = seed
        self._rng = np.random.default_rng(seed)

    def draw(self) -> TargetDraw:
        if not self.entries:
            raise ValueError("cannot sample from an empty histogram pool")
        if len(self.entries) == 1:
            return TargetDraw(self.entries[0].copy(), self.ids[0], None, 1.0)
        i, j = self._rng.choice(len(self.entries), size=2, replace=False)
        delta = float(self._rng.uniform(0.0, 1.0))
        hist = interpolate(self.entries[i], self.entries[j], delta)
        return TargetDraw(hist, self.ids[i], self.ids[j], delta)

    def save(self, directory) -> None:
        """Write one HGF1 file per entry plus ``manifest.json``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        files = []
        for k, (sid, hist) in enumerate(zip(self.ids, self.entries)):
            name = f"{k:04d}.hgf"
            write_hgf(directory / name, hist)
            files.append({"id": sid, "file": name})
        manifest = {"seed": self.rng_seed, "entries": files}
        atomic_write_text(directory / "manifest.json", json.dumps(manifest, indent=2) + "\n")

    @classmethod
    def load(cls, directory, seed: int | None = None) -> "HistogramPool":
        directory = Path(directory)
        manifest = json.loads((directory / "manifest.json").read_text())
        pool = cls(rng_seed=manifest["seed"] if seed is None else seed)
        for item in manifest["entries"]:
            pool.add(item["id"], read_hgf(directory / item["file"]))
        return pool


def sample_target(pool: HistogramPool) -> np.ndarray:
    return pool.draw().hist


def pool_from_images(paths, params: HistogramParams = HistogramParams(), seed: int = 0) -> HistogramPool:
    """Build a pool from image files; unreadable or all-black files are skipped."""
    pool = HistogramPool(rng_seed=seed)
    for path in paths:
        path = Path(path)
        try:
            hist = compute_histogram(read_image(path, allow_gray=True), params)
        except DegenerateImageError:
            log.warning("skipping %s: degenerate (all-black) image", path)
            pool.errors.append((str(path), "degenerate image"))
            continue
        except (OSError, ValueError) as exc:
            log.warning("skipping %s: %s", path, exc)
            pool.errors.append((str(path), str(exc)))
            continue
        pool.add(path.name, hist)
    return pool


def pool_from_directory(directory, params: HistogramParams = HistogramParams(), seed: int = 0) -> HistogramPool:
    """Load a serialized pool, or build one from the images and .hgf files found."""
    directory = Path(directory)
    if (directory / "manifest.json").is_file():
        return HistogramPool.load(directory, seed=seed)
    files = sorted(p for p in directory.iterdir() if p.is_file())
    pool = pool_from_images([p for p in files if p.suffix.lower() in IMAGE_SUFFIXES], params, seed)
    for p in files:
        if p.suffix.lower() == ".hgf":
            pool.add(p.name, read_hgf(p))
    return pool
