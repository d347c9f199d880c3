"""Wall-clock timing of the segmentation stages on synthetic fields."""
import math
import time

import numpy as np

from . import _backend
from .field import gt_field, perturb
from .forest import PartitionConfig
from .segmenter import SegConfig, segment
from .synthetic import voronoi

STAGES = ("forest", "merge_roots", "flatten", "rag", "similarity", "partition", "relabel", "total")


def parse_size(text):
    """``"384"`` -> (384, 384); ``"390x470"`` -> (390, 470) as (height, width)."""
    parts = str(text).lower().split("x")
    if len(parts) == 1:
        parts = parts * 2
    if len(parts) != 2:
        raise ValueError(f"bad size {text!r}; use N or HxW")
    h, w = (int(p) for p in parts)
    if h < 2 or w < 2:
        raise ValueError(f"size must be at least 2x2, got {text!r}")
    return h, w


def bench_field(height, width, k=24, seed=7, sigma_deg=0.0):
    """Direction field of a seeded Voronoi map.

    The seed points are drawn in normalised coordinates, so one ``(k, seed)``
    gives the same picture at every size.
    """
    labels = voronoi(height, width, k, seed)
    field = gt_field(labels)
    if sigma_deg > 0:
        field = perturb(field, sigma_deg, seed)
    return labels, field


def time_segment(field, repeats=5, cfg_part=PartitionConfig(), cfg_seg=SegConfig(), warmup=1):
    """Median per-stage times (ms) over ``repeats`` runs, plus the labels."""
    labels = None
    for _ in range(warmup):
        labels = segment(field, cfg_part, cfg_seg)
    runs = {name: [] for name in STAGES}
    for _ in range(repeats):
        t = {}
        labels = segment(field, cfg_part, cfg_seg, timings=t)
        for name in STAGES:
            runs[name].append(t[name])
    return {name: float(np.median(v)) for name, v in runs.items()}, labels


def doubling_ratio(n1, t1, n2, t2):
    """Time growth per doubling of the pixel count between two measurements."""
    return (t2 / t1) ** (1.0 / math.log2(n2 / n1))


def scaling_table(sizes, repeats=5, k=24, seed=7, sigma_deg=0.0, cfg_part=PartitionConfig(),
                  cfg_seg=SegConfig(), backend=None):
    """Time the pipeline at each size; returns a list of row dicts.

    Each row holds ``height``, ``width``, ``pixels``, the stage medians, the
    label map and ``ratio``: growth of the total per pixel-count doubling
    relative to the previous row (None on the first row).
    """
    rows = []
    previous = None
    with _backend.use_backend(backend or _backend.backend_name()):
        for h, w in sizes:
            _, field = bench_field(h, w, k, seed, sigma_deg)
            med, labels = time_segment(field, repeats, cfg_part, cfg_seg)
            row = {"height": h, "width": w, "pixels": h * w, "ms": med, "labels": labels, "ratio": None}
            if previous is not None and row["pixels"] != previous["pixels"]:
                row["ratio"] = doubling_ratio(previous["pixels"], previous["ms"]["total"],
                                              row["pixels"], med["total"])
            rows.append(row)
            previous = row
    return rows


def format_table(rows):
    head = ["size", "pixels"] + list(STAGES) + ["x/doubling"]
    lines = ["\t".join(head)]
    for row in rows:
        cells = [f"{row['height']}x{row['width']}", str(row["pixels"])]
        cells += [f"{row['ms'][name]:.3f}" for name in STAGES]
        cells.append("-" if row["ratio"] is None else f"{row['ratio']:.3f}")
        lines.append("\t".join(cells))
    return "\n".join(lines)


def clock_ms(fn, *args, repeats=5):
    """Median wall time of ``fn(*args)`` in ms, and its last result."""
    times = []
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(*args)
        times.append((time.perf_counter() - t0) * 1e3)
    return float(np.median(times)), out
