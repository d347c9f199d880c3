"""Boundary-to-pixel direction fields.

A direction field is a float32 array of shape (H, W, 2) holding unit vectors
``(d_row, d_col)``; rows grow downward. A label map is an integer array of
shape (H, W).

Region boundaries are represented by *sites*: the midpoints between 4-adjacent
pixels with different labels. Sites sit at half-integer coordinates, so no
pixel centre ever coincides with one and every pixel gets a well-defined
direction. The image frame is not a boundary.
"""
from typing import NamedTuple

import numpy as np

from . import _backend
from .errors import (
    DegenerateSegmentationError,
    DimensionMismatchError,
    FieldValidationError,
    NoBoundaryError,
)

UNIT_TOL = 1e-4


class FieldDiscrepancy(NamedTuple):
    total: float
    l2_term: float
    angle_term: float


def check_labels(labels):
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise DimensionMismatchError(f"label map must be 2-D, got shape {labels.shape}")
    if labels.size == 0:
        raise DimensionMismatchError("empty label map")
    if not np.issubdtype(labels.dtype, np.integer):
        raise ValueError(f"labels must be integers, got {labels.dtype}")
    if labels.min() < 0:
        raise ValueError("labels must be non-negative")
    return labels


def check_field(field, tol=UNIT_TOL):
    """Validate shape and unit norm; return the field as C-contiguous float32."""
    field = np.ascontiguousarray(field, dtype=np.float32)
    if field.ndim != 3 or field.shape[2] != 2:
        raise DimensionMismatchError(f"direction field must have shape (H, W, 2), got {field.shape}")
    if field.shape[0] < 2 or field.shape[1] < 2:
        raise DimensionMismatchError(f"direction field must be at least 2x2, got {field.shape[:2]}")
    norm = np.hypot(field[..., 0].astype(np.float64), field[..., 1].astype(np.float64))
    bad = ~(np.abs(norm - 1.0) <= tol)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise FieldValidationError(
            f"{int(bad.sum())} non-unit vectors (first at row {r}, col {c}, norm {norm[r, c]:.6g})"
        )
    return field


def boundary_sites(gt):
    """Midpoints between 4-adjacent pixels with different labels.

    Returns an (n, 2) float array of ``(row, col)`` half-integer coordinates
    in row-major order of the midpoint. Empty when the map has one label.
    """
    gt = check_labels(gt)
    h, w = gt.shape
    hr, hc = np.nonzero(gt[:, :-1] != gt[:, 1:])
    vr, vc = np.nonzero(gt[:-1, :] != gt[1:, :])
    # doubled coordinates: horizontal pairs -> (2r, 2c+1), vertical -> (2r+1, 2c)
    ys = np.concatenate([2 * hr, 2 * vr + 1])
    xs = np.concatenate([2 * hc + 1, 2 * vc])
    order = np.argsort(ys * (2 * w) + xs, kind="stable")
    return np.stack([ys[order], xs[order]], axis=1).astype(np.float64) / 2.0


def _site_grid(sites, width, height):
    sites = np.asarray(sites, dtype=np.float64).reshape(-1, 2)
    if len(sites) == 0:
        raise NoBoundaryError("no boundary: the site set is empty")
    doubled = sites * 2.0
    grid_pos = np.rint(doubled).astype(np.int64)
    if not np.array_equal(grid_pos, doubled):
        raise ValueError("site coordinates must be multiples of 0.5")
    ys, xs = grid_pos[:, 0], grid_pos[:, 1]
    gh, gw = 2 * height - 1, 2 * width - 1
    if ys.min() < 0 or xs.min() < 0 or ys.max() >= gh or xs.max() >= gw:
        raise ValueError("site outside the raster")
    grid = np.full((gh, gw), -1, dtype=np.int64)
    grid[ys, xs] = np.arange(len(sites))
    if (grid >= 0).sum() != len(sites):
        raise ValueError("duplicate sites")
    return grid


def nearest_site_squared(sites, width, height, num_threads=None):
    """Nearest site index and *four times* the squared distance, both exact integers."""
    grid = _site_grid(sites, width, height)
    if num_threads is None:
        num_threads = _backend.default_threads()
    return _backend.kernels().nearest_sites(grid, num_threads)


def nearest_site_transform(sites, width, height, num_threads=None):
    """Exact Euclidean nearest boundary site for every pixel centre.

    Equidistant sites resolve to the smallest site index.

    Returns
    -------
    index : (H, W) int64 array
    distance : (H, W) float64 array, always >= 0.5 for midpoint sites
    """
    index, quad = nearest_site_squared(sites, width, height, num_threads)
    return index, np.sqrt(quad) / 2.0


def gt_field(gt, num_threads=None):
    """Direction field of a ground-truth label map.

    Each vector points from the pixel's nearest boundary site to the pixel.
    """
    gt = check_labels(gt)
    h, w = gt.shape
    if h < 2 or w < 2:
        raise DimensionMismatchError(f"label map must be at least 2x2, got {gt.shape}")
    sites = boundary_sites(gt)
    if len(sites) == 0:
        raise DegenerateSegmentationError("degenerate segmentation: a single label has no boundary")
    index, quad = nearest_site_squared(sites, w, h, num_threads)
    doubled_sites = np.rint(sites * 2.0).astype(np.int64)
    rr, cc = np.mgrid[0:h, 0:w]
    d_row = 2 * rr - doubled_sites[index, 0]
    d_col = 2 * cc - doubled_sites[index, 1]
    norm = np.sqrt(quad)
    field = np.stack([d_row / norm, d_col / norm], axis=-1).astype(np.float32)
    return field


def perturb(field, sigma_deg, seed):
    """Rotate every vector by an independent N(0, sigma_deg) angle."""
    if sigma_deg < 0:
        raise ValueError("sigma_deg must be >= 0")
    field = check_field(field)
    if sigma_deg == 0:
        return field.copy()
    rng = np.random.default_rng(seed)
    angle = np.deg2rad(rng.normal(0.0, sigma_deg, size=field.shape[:2]))
    cos, sin = np.cos(angle), np.sin(angle)
    d0 = field[..., 0].astype(np.float64)
    d1 = field[..., 1].astype(np.float64)
    out = np.stack([cos * d0 - sin * d1, sin * d0 + cos * d1], axis=-1)
    out /= np.hypot(out[..., 0], out[..., 1])[..., None]
    return out.astype(np.float32)


def vector_angle(a, b):
    """Angle in [0, pi] between vectors along the last axis.

    Exactly 0 for identical and exactly pi for negated float32 vectors, which
    arccos of a float dot product does not give.
    """
    dot = a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1]
    cross = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    return np.arctan2(np.abs(cross), dot)


def region_weights(gt):
    """Per-pixel weight 1/sqrt(|region containing the pixel|)."""
    gt = check_labels(gt)
    _, inverse, counts = np.unique(gt.ravel(), return_inverse=True, return_counts=True)
    return (1.0 / np.sqrt(counts.astype(np.float64)))[inverse].reshape(gt.shape)


def field_discrepancy(gt_field, pred, gt, alpha=1.0):
    """Weighted L2 plus squared-angle discrepancy between two direction fields."""
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    a = np.asarray(gt_field, dtype=np.float64)
    b = np.asarray(pred, dtype=np.float64)
    gt = check_labels(gt)
    if a.shape != b.shape or a.shape[:2] != gt.shape or a.shape[-1:] != (2,):
        raise DimensionMismatchError(
            f"shape mismatch: gt_field {a.shape}, pred {b.shape}, labels {gt.shape}"
        )
    weight = region_weights(gt)
    l2 = ((a - b) ** 2).sum(axis=-1)
    angle = vector_angle(a, b)
    l2_term = float((weight * l2).sum())
    angle_term = float((weight * angle**2).sum())
    return FieldDiscrepancy(l2_term + alpha * angle_term, l2_term, angle_term)
