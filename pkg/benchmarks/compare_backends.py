"""Time every kernel on the compiled and the numpy backend, and check that
both return identical arrays.

    python3 benchmarks/compare_backends.py --size 384 --repeats 5
"""
import argparse
import math
import sys

import numpy as np

from superbpd import _backend, bench, field, forest, segmenter
from superbpd.field import _site_grid, boundary_sites


def kernel_cases(h, w, k, seed, sigma):
    labels, f = bench.bench_field(h, w, k, seed, sigma)
    grid = _site_grid(boundary_sites(labels), w, h)
    cos_a = math.cos(math.radians(45.0))
    thr = cos_a - 1e-6
    with _backend.use_backend("python"):
        fr = forest.build_forest(f)
        merged = segmenter.merge_nearby_roots(fr, f)
        initial = forest.flatten(merged)
        graph = segmenter.build_rag(initial, merged)
        segmenter.edge_similarities(f, fr, graph)
    raw_parent = _backend.BACKENDS["python"].build_parents(f, cos_a)
    eu, ev = graph.edge_index()
    sim = graph.similarity
    cfg = segmenter.SegConfig()
    attractive = np.flatnonzero(sim >= cfg.s0)
    order = attractive[np.lexsort((ev[attractive], eu[attractive], -sim[attractive]))]
    cls = np.arange(len(graph.regions), dtype=np.int64)[np.searchsorted(graph.regions, initial.ravel())]
    return [
        ("nearest_sites", (grid, 1)),
        ("build_parents", (f, cos_a)),
        ("break_cycles", (raw_parent,)),
        ("flatten", (fr.parent,)),
        ("merge_roots", (fr.parent, h, w, f, thr)),
        ("boundary_pairs", (np.ascontiguousarray(initial),)),
        ("pair_products", (f, fr.parent, graph.pair_p, graph.pair_q, 3)),
        ("partition", (graph.areas, eu, ev, sim, order, cfg.s0, cfg.theta_l, cfg.theta_s, cfg.a_s, cfg.a_t)),
        ("relabel_dense", (cls, len(graph.regions))),
    ]


def _copy(args):
    # break_cycles works in place
    return tuple(a.copy() if isinstance(a, np.ndarray) else a for a in args)


def _same(a, b):
    if isinstance(a, tuple):
        return len(a) == len(b) and all(_same(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", default="384", help="N or HxW (default 384)")
    ap.add_argument("--k", type=int, default=24)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--sigma", type=float, default=10.0, help="field noise in degrees (default 10)")
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args(argv)

    if "compiled" not in _backend.available_backends():
        print("compiled extension not built; nothing to compare", file=sys.stderr)
        return 1
    h, w = bench.parse_size(args.size)
    cases = kernel_cases(h, w, args.k, args.seed, args.sigma)
    print(f"# {h}x{w}, sigma {args.sigma} deg, median of {args.repeats}")
    print("kernel\tpython_ms\tcompiled_ms\tspeedup\tidentical")
    mismatches = 0
    for name, kargs in cases:
        res = {}
        for backend in ("python", "compiled"):
            fn = getattr(_backend.BACKENDS[backend], name)
            times = []
            out = None
            for _ in range(args.repeats):
                a = _copy(kargs)
                t, out = bench.clock_ms(fn, *a, repeats=1)
                times.append(t)
            res[backend] = (float(np.median(times)), out)
        same = _same(res["python"][1], res["compiled"][1])
        mismatches += not same
        tp, tc = res["python"][0], res["compiled"][0]
        print(f"{name}\t{tp:.3f}\t{tc:.3f}\t{tp / tc:.1f}x\t{same}")

    _, f = bench.bench_field(h, w, args.k, args.seed, args.sigma)
    totals = {}
    for backend in ("python", "compiled"):
        with _backend.use_backend(backend):
            med, labels = bench.time_segment(f, args.repeats)
            totals[backend] = (med["total"], labels)
    same = np.array_equal(totals["python"][1], totals["compiled"][1])
    mismatches += not same
    tp, tc = totals["python"][0], totals["compiled"][0]
    print(f"segment (end to end)\t{tp:.3f}\t{tc:.3f}\t{tp / tc:.1f}x\t{same}")
    return 1 if mismatches else 0


if __name__ == "__main__":
    sys.exit(main())
