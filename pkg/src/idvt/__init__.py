"""Social recommendation with interest-aware denoising and view-guided tuning."""

__version__ = "0.1.0"

from .dataset_io import Dataset, RawRecords, load_ratings, load_raw, load_trust, preprocess, split
from .sparse_graph import (
    NormalizedAdjacency,
    SparseBinaryMatrix,
    build_interaction_matrix,
    build_social_matrix,
    common_items,
    symmetric_normalize,
)

__all__ = [
    "Dataset",
    "RawRecords",
    "NormalizedAdjacency",
    "SparseBinaryMatrix",
    "build_interaction_matrix",
    "build_social_matrix",
    "common_items",
    "load_ratings",
    "load_raw",
    "load_trust",
    "preprocess",
    "split",
    "symmetric_normalize",
    "__version__",
]
