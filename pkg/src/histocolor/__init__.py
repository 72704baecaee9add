"""Histogram-guided image recoloring with a differentiable RGB-uv histogram."""

__version__ = "0.1.0"

from .histogram import (  # noqa: E402
    DegenerateImageError,
    HistogramParams,
    compute_histogram,
    histogram_backward,
    project_log_chroma,
    read_hgf,
    write_hgf,
)
from .metrics import bhattacharyya, hellinger, hellinger_backward, kl_divergence  # noqa: E402
from .sampler import HistogramPool, interpolate, pool_from_directory, sample_target  # noqa: E402
from .recolor import (  # noqa: E402
    LossBreakdown,
    OptimizationError,
    RecolorConfig,
    laplacian_loss,
    recolor,
    recolor_objective,
    sobel_loss,
    variance_loss,
)
from .postproc import ColorMapping, apply_mapping, fit_mapping, recolor_hires  # noqa: E402
from .evaluation import EvalReport, evaluate_batch, rgb_histogram  # noqa: E402

__all__ = [
    "__version__",
    "DegenerateImageError",
    "HistogramParams",
    "compute_histogram",
    "histogram_backward",
    "project_log_chroma",
    "read_hgf",
    "write_hgf",
    "bhattacharyya",
    "hellinger",
    "hellinger_backward",
    "kl_divergence",
    "HistogramPool",
    "interpolate",
    "pool_from_directory",
    "sample_target",
    "LossBreakdown",
    "OptimizationError",
    "RecolorConfig",
    "laplacian_loss",
    "recolor",
    "recolor_objective",
    "sobel_loss",
    "variance_loss",
    "ColorMapping",
    "apply_mapping",
    "fit_mapping",
    "recolor_hires",
    "EvalReport",
    "evaluate_batch",
    "rgb_histogram",
]
