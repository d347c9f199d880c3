"""Super-BPD segmentation: boundary-to-pixel direction fields, super-BPD
forests, region-graph merging and segmentation metrics."""

__version__ = "0.1.0"

from ._backend import available_backends, backend_name, set_backend, use_backend
from .errors import (
    DegenerateSegmentationError,
    DimensionMismatchError,
    FieldValidationError,
    FormatError,
    NoBoundaryError,
    SuperBPDError,
    UnsupportedVersionError,
)
from .field import (
    FieldDiscrepancy,
    boundary_sites,
    field_discrepancy,
    gt_field,
    nearest_site_transform,
    perturb,
)
from .forest import ParentForest, PartitionConfig, build_forest, flatten, next_pixel
from .imaging import read_field, read_labels, viz_boundaries, viz_field, write_field, write_labels
from .metrics import MetricReport, contingency, covering, evaluate, pri, vi
from .segmenter import (
    RegionGraph,
    SegConfig,
    build_rag,
    edge_similarity,
    merge_nearby_roots,
    partition_graph,
    segment,
)
