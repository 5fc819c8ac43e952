"""Sparse hierarchical occupancy grids and ray samplers."""
from ._native import ACTIVE as _ACTIVE
from .grid import (
    DenseGrid, GridTransform, Level, Ray, TraversalEvent, binarize, clip_ray, deserialize_dense,
    serialize_dense, voxel_at,
)
from .sampling import (
    CascadeGrid, Kernel, SampleBuffer, StepSchedule, sample_branch, sample_cascade, sample_rays,
    sample_skip,
)
from .traversal import (
    Analyzer, AnalyzerState, DistanceGrid, build_distance, cd_next, dda_next, hdda_next,
    iter_events, trace,
)
from .tree import Accessor, SparseGrid, build_sparse, deserialize, memory_bytes, serialize

__version__ = "0.1.0"


def backend_name() -> str:
    return _ACTIVE.NAME
