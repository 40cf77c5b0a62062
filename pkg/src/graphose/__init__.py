"""Pose-graph to layout-mask conditioning pipeline."""

import os as _os

# single-threaded BLAS by default: thin GEMMs gain nothing from threads here
# and fixed threading keeps runs bit-reproducible
_os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")

__version__ = "0.1.0"

from .graph import MISSING, PoseGraph, neighbor_index, normalize_positions, validate
from .surrogate import RasterSpec, render_fixed_node_masks, render_surrogate
from .synth import SynthConfig, sample_pretrain_graph

__all__ = [
    "MISSING",
    "PoseGraph",
    "RasterSpec",
    "SynthConfig",
    "neighbor_index",
    "normalize_positions",
    "render_fixed_node_masks",
    "render_surrogate",
    "sample_pretrain_graph",
    "validate",
    "__version__",
]
