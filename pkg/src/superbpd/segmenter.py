"""Segmentation from super-BPDs.

Pipeline: super-BPD forest -> merge nearby roots (initial segments) -> region
adjacency graph -> direction similarity per edge -> greedy merging with
size-adaptive thresholds and repulsion, then tiny-region cleanup.
"""
import math
import time
from dataclasses import dataclass

import numpy as np

from . import _backend
from .field import check_field
from .forest import ParentForest, PartitionConfig, build_forest, flatten


@dataclass(frozen=True)
class SegConfig:
    """Merge parameters. Angles in radians, areas in pixels.

    ``theta_l`` / ``theta_s`` have no published values; the defaults were
    picked on synthetic label maps (disjoint from the acceptance fixtures)
    and are not normative. ``root_guard`` turns on the departing-roots check
    of :func:`merge_nearby_roots`.
    """

    steps: int = 3
    s0: float = math.pi / 18
    theta_l: float = math.radians(150.0)
    theta_s: float = math.radians(130.0)
    a_s: int = 1500
    a_t: int = 200
    root_guard: bool = True

    def __post_init__(self):
        if int(self.steps) != self.steps or self.steps < 0:
            raise ValueError(f"steps must be a non-negative integer, got {self.steps}")
        if not 0.0 <= self.s0 <= math.pi:
            raise ValueError(f"s0 must lie in [0, pi], got {self.s0}")
        if not 0.0 <= self.theta_s < self.theta_l <= math.pi:
            raise ValueError(
                f"need 0 <= theta_s < theta_l <= pi, got theta_s={self.theta_s}, theta_l={self.theta_l}"
            )
        if not 0 < self.a_t < self.a_s:
            raise ValueError(f"need 0 < a_t < a_s, got a_t={self.a_t}, a_s={self.a_s}")


def merge_nearby_roots(forest, field=None, theta_a=45.0, *, validate=True):
    """Initial segmentation: hang each root on a root in its forward 3x3 half-window.

    Roots are visited in raster order; the candidates are (r, c+1), (r+1, c-1),
    (r+1, c), (r+1, c+1) and the last root among them becomes the parent. All
    new links point forward in raster order, so no cycle can appear.

    If ``field`` is given, a candidate q of root r is skipped when q points
    away from r, or r away from q, i.e. the direction lies within
    ``theta_a`` degrees of the offset between them. Such pairs sit on two
    sides of a boundary (or at a junction) rather than on one medial axis.
    """
    k = _backend.kernels()
    if field is None:
        parent = k.merge_roots(forest.parent, forest.height, forest.width)
    else:
        if validate:
            field = check_field(field)
        # small slack so exact diagonals count as inside the cone on both backends
        thr = math.cos(math.radians(theta_a)) - 1e-6
        parent = k.merge_roots(forest.parent, forest.height, forest.width, field, thr)
    return ParentForest.from_parent(parent, forest.height, forest.width)


@dataclass(eq=False)
class RegionGraph:
    """Region adjacency graph over initial segments, keyed by root pixel.

    Edge ``e`` joins ``edge_u[e] < edge_v[e]``; its boundary pairs are
    ``pair_p[pair_ptr[e]:pair_ptr[e+1]]`` (pixels in region u) against the
    same slice of ``pair_q`` (pixels in region v), in raster discovery order.
    """

    height: int
    width: int
    regions: np.ndarray
    areas: np.ndarray
    edge_u: np.ndarray
    edge_v: np.ndarray
    pair_ptr: np.ndarray
    pair_p: np.ndarray
    pair_q: np.ndarray
    similarity: np.ndarray = None

    @property
    def n_edges(self):
        return len(self.edge_u)

    def boundary(self, e):
        lo, hi = self.pair_ptr[e], self.pair_ptr[e + 1]
        return self.pair_p[lo:hi], self.pair_q[lo:hi]

    def edge_index(self):
        """Region indices (positions in ``regions``) of every edge end."""
        return np.searchsorted(self.regions, self.edge_u), np.searchsorted(self.regions, self.edge_v)

    def area_of(self):
        return dict(zip(self.regions.tolist(), self.areas.tolist()))


def build_rag(labels, forest):
    """Adjacency graph of a label map whose labels are the roots of ``forest``."""
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    h, w = labels.shape
    flat = labels.ravel()
    regions = forest.roots
    areas = np.bincount(flat, minlength=h * w)[regions]
    if areas.sum() != h * w:
        raise ValueError("labels are not the roots of the given forest")

    p, q = _backend.kernels().boundary_pairs(labels)
    lp, lq = flat[p], flat[q]
    swap = lp > lq
    u = np.where(swap, lq, lp)
    v = np.where(swap, lp, lq)
    pp = np.where(swap, q, p)
    qq = np.where(swap, p, q)
    # stable: pairs of one edge keep their discovery order
    order = np.argsort(u * (h * w) + v, kind="stable")
    u, v, pp, qq = u[order], v[order], pp[order], qq[order]
    if len(u):
        start = np.flatnonzero(np.r_[True, (u[1:] != u[:-1]) | (v[1:] != v[:-1])])
    else:
        start = np.zeros(0, dtype=np.int64)
    ptr = np.append(start, len(u)).astype(np.int64)
    return RegionGraph(h, w, regions, areas, u[start], v[start], ptr, pp, qq)


def _segment_means(values, ptr):
    lo = np.minimum.reduceat(values, ptr[:-1])
    hi = np.maximum.reduceat(values, ptr[:-1])
    mean = np.add.reduceat(values, ptr[:-1]) / np.diff(ptr)
    # keeps constant segments exact
    return np.clip(mean, lo, hi)


def _similarities(field, forest, p, q, ptr, steps):
    dot, cross = _backend.kernels().pair_products(field, forest.parent, p, q, int(steps))
    angle = np.arctan2(np.abs(cross), dot)
    return np.clip(math.pi - _segment_means(angle, ptr), 0.0, math.pi)


def edge_similarity(field, forest, boundary, steps=3):
    """Direction similarity of one edge: pi minus the mean angle between the
    directions ``steps`` parent hops inside each side of every boundary pair.

    ``forest`` is the super-BPD forest *before* root merging, so the walk stays
    inside a stripe; it stops early at a root.
    """
    field = check_field(field)
    p = np.ascontiguousarray(boundary[0], dtype=np.int64)
    q = np.ascontiguousarray(boundary[1], dtype=np.int64)
    if len(p) == 0 or len(p) != len(q):
        raise ValueError("boundary must be a non-empty pair of equal-length index arrays")
    ptr = np.array([0, len(p)], dtype=np.int64)
    return float(_similarities(field, forest, p, q, ptr, steps)[0])


def edge_similarities(field, forest, graph, steps=3, *, validate=True):
    """Similarity of every edge of ``graph``; also stored on ``graph.similarity``."""
    if validate:
        field = check_field(field)
    if graph.n_edges == 0:
        graph.similarity = np.zeros(0)
    else:
        graph.similarity = _similarities(
            field, forest, graph.pair_p, graph.pair_q, graph.pair_ptr, steps
        )
    return graph.similarity


class RegionPartition:
    """Result of :func:`partition_graph`: a class representative per region.

    Regions are addressed by their position in ``graph.regions``. ``trace``
    lists every attractive edge as it was consumed and every tiny merge, as
    ``(phase, similarity, a, b, merged)`` with ``a``/``b`` the class
    representatives at that moment.
    """

    PHASES = ("attract", "tiny")

    def __init__(self, graph, rep, trace):
        self.graph = graph
        self.rep = rep
        kind, sim, a, b, merged = trace
        self.trace = [
            (self.PHASES[k], s, x, y, m)
            for k, s, x, y, m in zip(kind.tolist(), sim.tolist(), a.tolist(), b.tolist(), merged.tolist())
        ]

    def find(self, i):
        return int(self.rep[i])

    def representatives(self):
        return self.rep.copy()

    def n_classes(self):
        return len(np.unique(self.rep))

    def class_areas(self):
        """Total area of each class, keyed by representative."""
        area = np.bincount(self.rep, weights=self.graph.areas, minlength=len(self.rep))
        return {int(r): int(area[r]) for r in np.unique(self.rep)}


def partition_graph(graph, cfg=SegConfig()):
    """Greedy merge of the region graph.

    1. Edges with similarity below ``s0`` make their regions repulsive.
    2. The other edges, by decreasing similarity (ties by ascending region
       pair), merge their regions when the similarity exceeds the
       size-dependent threshold and the two current classes are not
       repulsive. A merge pools areas and repulsion sets; the larger class
       (then the smaller index) stays representative.
    3. Classes still smaller than ``a_t`` join the non-repulsive neighbour
       class with the highest edge similarity, smallest class first.
    """
    if graph.similarity is None:
        raise ValueError("graph has no similarities; run edge_similarities first")
    eu, ev = graph.edge_index()
    sim = np.ascontiguousarray(graph.similarity, dtype=np.float64)
    attractive = np.flatnonzero(sim >= cfg.s0)
    order = attractive[np.lexsort((ev[attractive], eu[attractive], -sim[attractive]))]
    rep, trace = _backend.kernels().partition(
        np.ascontiguousarray(graph.areas, dtype=np.int64),
        np.ascontiguousarray(eu, dtype=np.int64),
        np.ascontiguousarray(ev, dtype=np.int64),
        sim,
        np.ascontiguousarray(order, dtype=np.int64),
        float(cfg.s0),
        float(cfg.theta_l),
        float(cfg.theta_s),
        int(cfg.a_s),
        int(cfg.a_t),
    )
    return RegionPartition(graph, rep, trace)


def relabel_sequential(labels):
    """Relabel to 0..K-1 in raster order of first occurrence."""
    labels = np.asarray(labels)
    flat = labels.ravel()
    uniq, first, inverse = np.unique(flat, return_index=True, return_inverse=True)
    rank = np.empty(len(uniq), dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(len(uniq))
    return rank[inverse.ravel()].reshape(labels.shape)


def final_labels(graph, part, initial):
    """Map an initial segmentation through a partition to labels 0..K-1."""
    h, w = initial.shape
    lut = np.empty(h * w, dtype=np.int64)
    lut[graph.regions] = np.arange(len(graph.regions))
    cls = part.rep[lut[initial.ravel()]]
    out = _backend.kernels().relabel_dense(np.ascontiguousarray(cls), len(graph.regions))
    return out.reshape(h, w)


def segment(field, cfg_part=PartitionConfig(), cfg_seg=SegConfig(), timings=None):
    """Full segmentation of a direction field.

    If ``timings`` is a dict, per-stage wall times (ms) are stored in it.
    Returns an int64 label map with labels 0..K-1 in raster order.
    """
    field = check_field(field)
    clock = time.perf_counter
    stamps = [("start", clock())]

    forest = build_forest(field, cfg_part, validate=False)
    stamps.append(("forest", clock()))
    if cfg_seg.root_guard:
        merged = merge_nearby_roots(forest, field, cfg_part.theta_a, validate=False)
    else:
        merged = merge_nearby_roots(forest)
    stamps.append(("merge_roots", clock()))
    initial = flatten(merged)
    stamps.append(("flatten", clock()))
    graph = build_rag(initial, merged)
    stamps.append(("rag", clock()))
    edge_similarities(field, forest, graph, cfg_seg.steps, validate=False)
    stamps.append(("similarity", clock()))
    part = partition_graph(graph, cfg_seg)
    stamps.append(("partition", clock()))
    labels = final_labels(graph, part, initial)
    stamps.append(("relabel", clock()))

    if timings is not None:
        for (_, t0), (name, t1) in zip(stamps, stamps[1:]):
            timings[name] = (t1 - t0) * 1e3
        timings["total"] = (stamps[-1][1] - stamps[0][1]) * 1e3
    return labels
