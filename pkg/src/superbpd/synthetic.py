"""Seeded synthetic label maps for tests and benchmarks.

Voronoi maps assign every pixel to the nearest of ``k`` uniformly drawn seed
points (squared Euclidean distance, ties to the lower seed index), so the same
seed gives the same map on every platform.
"""
import numpy as np


def voronoi(height, width, k, seed):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0.0, 1.0, size=(k, 2)) * [height, width]
    rr, cc = np.mgrid[0:height, 0:width]
    best = np.zeros((height, width), dtype=np.int64)
    best_d = np.full((height, width), np.inf)
    for i, (pr, pc) in enumerate(pts):
        d = (rr - pr) ** 2 + (cc - pc) ** 2
        closer = d < best_d
        best[closer] = i
        best_d[closer] = d[closer]
    return best


def disc(height, width, radius=None, center=None):
    """Label 1 inside a disc, 0 outside."""
    if center is None:
        center = ((height - 1) / 2.0, (width - 1) / 2.0)
    if radius is None:
        radius = min(height, width) / 3.0
    rr, cc = np.mgrid[0:height, 0:width]
    return (((rr - center[0]) ** 2 + (cc - center[1]) ** 2) <= radius**2).astype(np.int64)


def nested_rectangles(height, width, levels=3, margin=None):
    """Concentric rectangles labelled 0 (outermost) to ``levels``."""
    if margin is None:
        margin = min(height, width) // (2 * (levels + 1))
    labels = np.zeros((height, width), dtype=np.int64)
    for lv in range(1, levels + 1):
        m = lv * margin
        labels[m : height - m, m : width - m] = lv
    return labels


def half_planes(height, width, axis=1):
    labels = np.zeros((height, width), dtype=np.int64)
    if axis == 1:
        labels[:, width // 2 :] = 1
    else:
        labels[height // 2 :, :] = 1
    return labels


def acceptance_fixtures():
    """The 20 seeded maps of the recovery and robustness suites: (name, labels)."""
    out = []
    sizes = [128, 160, 192, 224, 256]
    for i in range(12):
        k = 3 + i % 6
        h = sizes[i % 5]
        w = sizes[(i + 2) % 5]
        out.append((f"voronoi-k{k}-{h}x{w}-s{i}", voronoi(h, w, k, seed=1000 + i)))
    for i, (h, w) in enumerate([(128, 128), (160, 200), (256, 192), (224, 256)]):
        out.append((f"disc-{h}x{w}", disc(h, w, radius=min(h, w) * (0.25 + 0.05 * i))))
    for i, (h, w, lv) in enumerate([(128, 160, 2), (192, 192, 3), (256, 224, 3), (200, 256, 4)]):
        out.append((f"rects{lv}-{h}x{w}", nested_rectangles(h, w, levels=lv)))
    return out
