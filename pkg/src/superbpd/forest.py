"""Partition a direction field into super-BPDs.

Each pixel is linked to the 8-neighbour its direction points at, provided the
two directions agree to within ``theta_a``; otherwise it becomes a root. The
resulting parent pointers form a forest whose trees are the super-BPDs.
"""
import math
from dataclasses import dataclass

import numpy as np

from . import _backend
from .field import check_field

# N, NE, E, SE, S, SW, W, NW
NEIGHBOURS = ((-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1))
_INV_SQRT2 = 0.7071067811865476


@dataclass(frozen=True)
class PartitionConfig:
    theta_a: float = 45.0  # degrees

    def __post_init__(self):
        if not 0.0 < self.theta_a < 180.0:
            raise ValueError(f"theta_a must lie in (0, 180) degrees, got {self.theta_a}")


@dataclass(eq=False)
class ParentForest:
    """Row-major parent pointers plus the sorted array of self-parented roots."""

    height: int
    width: int
    parent: np.ndarray
    roots: np.ndarray

    @classmethod
    def from_parent(cls, parent, height, width):
        parent = np.ascontiguousarray(parent, dtype=np.int64)
        roots = np.flatnonzero(parent == np.arange(parent.shape[0]))
        return cls(height, width, parent, roots)

    @property
    def size(self):
        return self.height * self.width

    def find(self, p):
        """Root of pixel index ``p`` (no compression)."""
        parent = self.parent
        for _ in range(self.size + 1):
            q = parent[p]
            if q == p:
                return int(p)
            p = q
        raise RuntimeError("parent pointers contain a cycle")

    def validate(self):
        """Raise if the forest invariants do not hold."""
        n = self.size
        parent = self.parent
        if parent.shape != (n,):
            raise ValueError(f"parent has shape {parent.shape}, expected ({n},)")
        if parent.min() < 0 or parent.max() >= n:
            raise ValueError("parent index out of range")
        self_parented = np.flatnonzero(parent == np.arange(n))
        if not np.array_equal(self_parented, self.roots):
            raise ValueError("roots differ from the set of self-parented pixels")
        # every pixel must reach a self-parented pixel
        jump = parent.copy()
        for _ in range(max(1, math.ceil(math.log2(max(n, 2)))) + 1):
            jump = jump[jump]
        if not np.all(parent[jump] == jump):
            raise ValueError("parent pointers contain a cycle")


def next_pixel(field, p):
    """The 8-neighbour pointed to by the direction at ``p = (row, col)``.

    Returns ``None`` when that neighbour is off the raster. Exact ties go to
    the first neighbour in N, NE, E, SE, S, SW, W, NW order.
    """
    h, w = field.shape[:2]
    r, c = p
    d0, d1 = float(field[r, c, 0]), float(field[r, c, 1])
    best, best_dot = 0, -math.inf
    for k, (dr, dc) in enumerate(NEIGHBOURS):
        scale = _INV_SQRT2 if dr and dc else 1.0
        dot = d0 * (dr * scale) + d1 * (dc * scale)
        if dot > best_dot:
            best, best_dot = k, dot
    nr, nc = r + NEIGHBOURS[best][0], c + NEIGHBOURS[best][1]
    if 0 <= nr < h and 0 <= nc < w:
        return nr, nc
    return None


def build_forest(field, cfg=PartitionConfig(), *, validate=True):
    """Group pixels into super-BPD trees.

    A pixel takes its next pixel as parent when the angle between their
    directions is strictly below ``cfg.theta_a``. Cycles (possible on noisy
    fields) are broken by making their smallest pixel index a root.
    ``validate=False`` skips the unit-norm check for already checked fields.
    """
    if validate:
        field = check_field(field)
    h, w = field.shape[:2]
    k = _backend.kernels()
    # angle < theta  <=>  dot > cos(theta) for angles in [0, pi]
    parent = k.build_parents(field, math.cos(math.radians(cfg.theta_a)))
    parent = k.break_cycles(parent)
    return ParentForest.from_parent(parent, h, w)


def flatten(forest):
    """Label every pixel with the pixel index of its root.

    The labels double as a fully compressed parent array, so flattening
    ``ParentForest.from_parent(labels.ravel(), ...)`` gives the same labels.
    """
    labels = _backend.kernels().flatten(forest.parent)
    return labels.reshape(forest.height, forest.width)
