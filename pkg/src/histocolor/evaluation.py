"""Batch histogram-similarity evaluation (KL and Hellinger, RGB-uv and RGB)."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .histogram import HistogramParams, check_image, compute_histogram, read_hgf
from .imageio import read_image
from .metrics import hellinger, kl_divergence

METRICS = ("kl_uv", "hellinger_uv", "kl_rgb", "hellinger_rgb")


def rgb_histogram(image, bins: int = 16) -> np.ndarray:
    """Hard-binned, normalized (b, b, b) histogram over [0, 1]^3."""
    if int(bins) != bins or bins < 2:
        raise ValueError("bins must be an integer >= 2")
    img = check_image(image)
    idx = np.minimum((img.reshape(-1, 3) * bins).astype(np.int64), bins - 1)
    flat = (idx[:, 0] * bins + idx[:, 1]) * bins + idx[:, 2]
    counts = np.bincount(flat, minlength=bins ** 3).astype(np.float64)
    return (counts / counts.sum()).reshape(bins, bins, bins)


@dataclass
class EvalItem:
    source: str
    target: str
    kl_uv: float | None = None
    hellinger_uv: float | None = None
    kl_rgb: float | None = None
    hellinger_rgb: float | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class EvalReport:
    items: list
    params: HistogramParams = field(default_factory=HistogramParams)
    rgb_bins: int = 16
    smoothing: float = 1e-6

    @property
    def failures(self) -> list:
        return [it for it in self.items if not it.ok]

    @property
    def aggregates(self) -> dict:
        """Arithmetic mean of each metric over the items that report it."""
        out = {}
        for m in METRICS:
            vals = [getattr(it, m) for it in self.items if it.ok and getattr(it, m) is not None]
            out[m] = math.fsum(vals) / len(vals) if vals else None
        return out

    def header(self) -> dict:
        return {
            "tool": f"histocolor {__version__}",
            "histogram_params": self.params.as_dict(),
            "rgb_bins": self.rgb_bins,
            "kl": f"KL(target || output) with additive smoothing {self.smoothing:g}",
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        for key, value in self.header().items():
            buf.write(f"# {key}: {json.dumps(value) if isinstance(value, dict) else value}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(("source", "target") + METRICS + ("status",))
        for it in self.items:
            writer.writerow(
                [it.source, it.target]
                + [_fmt(getattr(it, m)) for m in METRICS]
                + ["ok" if it.ok else f"error: {it.error}"]
            )
        agg = self.aggregates
        writer.writerow(["mean", ""] + [_fmt(agg[m]) for m in METRICS] + [f"{len(self.failures)} failed"])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "header": self.header(),
            "items": [asdict(it) for it in self.items],
            "aggregates": self.aggregates,
            "failed": len(self.failures),
        }
        return json.dumps(doc, indent=2) + "\n"


def _fmt(value):
    return "" if value is None else f"{value:.10g}"


def _load_target(path: Path, params: HistogramParams, bins: int):
    if path.suffix.lower() == ".hgf":
        hist = read_hgf(path)
        if hist.shape[0] != params.h:
            raise ValueError(f"{path}: histogram has {hist.shape[0]} bins, expected {params.h}")
        return hist, None
    img = read_image(path)
    return compute_histogram(img, params), rgb_histogram(img, bins)


def evaluate_pair(output, target, params: HistogramParams = HistogramParams(),
                  bins: int = 16, smoothing: float = 1e-6, label=None) -> EvalItem:
    """All four metrics for one (output image, target image or .hgf) pair.

    Errors are recorded on the returned item rather than raised. A target
    given only as an RGB-uv histogram has no RGB-space metrics.
    """
    source, target_id = label if label is not None else (str(output), str(target))
    item = EvalItem(source, target_id)
    try:
        img = read_image(output)
        h_out = compute_histogram(img, params)
        h_tgt, rgb_tgt = _load_target(Path(target), params, bins)
        item.kl_uv = kl_divergence(h_tgt, h_out, smoothing)
        item.hellinger_uv = hellinger(h_out, h_tgt)
        if rgb_tgt is not None:
            rgb_out = rgb_histogram(img, bins)
            item.kl_rgb = kl_divergence(rgb_tgt, rgb_out, smoothing)
            item.hellinger_rgb = hellinger(rgb_out, rgb_tgt)
    except (OSError, ValueError) as exc:
        item.error = str(exc)
    return item


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("HISTOCOLOR_THREADS", "1")))
    except ValueError:
        return 1


def evaluate_batch(pairs, params: HistogramParams = HistogramParams(), bins: int = 16,
                   smoothing: float = 1e-6, workers: int | None = None, labels=None) -> EvalReport:
    """Evaluate (output, target) pairs in order.

    ``labels`` optionally gives the (source, target) ids written to the
    report in place of the paths.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("empty evaluation set")
    labels = [None] * len(pairs) if labels is None else list(labels)
    if len(labels) != len(pairs):
        raise ValueError("labels must match pairs one to one")
    jobs = [(o, t, lab) for (o, t), lab in zip(pairs, labels)]
    workers = default_workers() if workers is None else workers

    def run(job):
        return evaluate_pair(job[0], job[1], params, bins, smoothing, job[2])

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            items = list(pool.map(run, jobs))
    else:
        items = [run(j) for j in jobs]
    return EvalReport(items, params, bins, smoothing)


def read_pairs_manifest(path) -> list:
    """Read ``output,target`` rows as ((output, target), (output id, target id)).

    Relative paths resolve against the manifest's folder; the ids are the
    strings exactly as written.
    """
    path = Path(path)
    base = path.parent
    pairs = []
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if rows and [c.strip().lower() for c in rows[0][:2]] == ["output", "target"]:
        rows = rows[1:]
    for row in rows:
        if len(row) < 2:
            raise ValueError(f"{path}: expected 'output,target' rows, got {row!r}")
        ids = tuple(c.strip() for c in row[:2])
        out, tgt = (Path(c) if Path(c).is_absolute() else base / c for c in ids)
        pairs.append(((out, tgt), ids))
    return pairs
