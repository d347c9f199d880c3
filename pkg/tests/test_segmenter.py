import math

import numpy as np
import pytest

from superbpd import field, forest, metrics, segmenter, synthetic
from superbpd.forest import ParentForest, PartitionConfig
from superbpd.segmenter import RegionGraph, SegConfig

from oracles import adjacency, merge_roots_scan



def forest_with_roots(h, w, roots):
    """Forest whose listed pixels are roots; every other pixel hangs on the first root."""
    idx = [r * w + c for r, c in roots]
    parent = np.full(h * w, idx[0], dtype=np.int64)
    parent[idx] = idx
    return ParentForest.from_parent(parent, h, w)


def toy_graph(areas, edges):
    """Region graph with regions 0..n-1 and ``edges`` as (u, v, similarity)."""
    n = len(areas)
    eu = np.array([e[0] for e in edges], dtype=np.int64)
    ev = np.array([e[1] for e in edges], dtype=np.int64)
    sim = np.array([e[2] for e in edges], dtype=np.float64)
    ptr = np.arange(len(edges) + 1, dtype=np.int64)
    g = RegionGraph(1, sum(areas), np.arange(n, dtype=np.int64), np.array(areas, dtype=np.int64),
                    eu, ev, ptr, eu.copy(), ev.copy())
    g.similarity = sim
    return g


def groups(part):
    rep = part.representatives()
    out = {}
    for i, r in enumerate(rep.tolist()):
        out.setdefault(r, []).append(i)
    return sorted(out.values())


def pipeline(f, guard=True):
    fr = forest.build_forest(f)
    merged = segmenter.merge_nearby_roots(fr, f if guard else None)
    initial = forest.flatten(merged)
    g = segmenter.build_rag(initial, merged)
    segmenter.edge_similarities(f, fr, g)
    return fr, merged, initial, g


# -- merge_nearby_roots ------------------------------------------------------------

def test_adjacent_roots_merge(backend):
    fr = forest_with_roots(10, 10, [(5, 5), (5, 6)])
    out = segmenter.merge_nearby_roots(fr)
    assert out.parent[55] == 56
    assert out.roots.tolist() == [56]


def test_isolated_root_unchanged(backend):
    fr = forest_with_roots(10, 10, [(5, 5), (2, 8)])
    out = segmenter.merge_nearby_roots(fr)
    assert out.roots.tolist() == [28, 55]
    assert np.array_equal(out.parent, fr.parent)


def test_diagonal_chain_collapses(backend):
    fr = forest_with_roots(5, 5, [(k, k) for k in range(5)])
    out = segmenter.merge_nearby_roots(fr)
    assert out.roots.tolist() == [24]
    assert [out.parent[k * 6] for k in range(4)] == [6, 12, 18, 24]


def test_last_candidate_wins(backend):
    # E, SW and S are all roots; S is the last in scan order
    fr = forest_with_roots(4, 4, [(1, 1), (1, 2), (2, 0), (2, 1)])
    out = segmenter.merge_nearby_roots(fr)
    assert out.parent[5] == 9


@pytest.mark.parametrize("seed", range(6))
def test_merge_matches_scan(backend, seed):
    rng = np.random.default_rng(seed)
    h, w = rng.integers(3, 25, 2)
    if seed % 2:
        f = field.gt_field(synthetic.voronoi(h, w, 5, seed))
    else:
        a = rng.uniform(0, 2 * np.pi, (h, w))
        f = np.stack([np.sin(a), np.cos(a)], -1).astype(np.float32)
    fr = forest.build_forest(f)
    plain = segmenter.merge_nearby_roots(fr)
    assert np.array_equal(plain.parent, merge_roots_scan(fr.parent, h, w))
    guarded = segmenter.merge_nearby_roots(fr, f)
    assert np.array_equal(guarded.parent, merge_roots_scan(fr.parent, h, w, f))
    plain.validate()
    guarded.validate()


def test_guard_keeps_departing_roots_apart(backend):
    # two roots side by side pointing away from each other
    f = np.zeros((1, 2, 2), dtype=np.float32)
    f[0, 0] = (0, -1)
    f[0, 1] = (0, 1)
    f = np.concatenate([f, f])
    fr = ParentForest.from_parent(np.arange(4), 2, 2)
    # columns still merge vertically, but never across
    assert segmenter.merge_nearby_roots(fr, f).roots.tolist() == [2, 3]
    assert len(segmenter.merge_nearby_roots(fr).roots) == 1


# -- build_rag -------------------------------------------------------------------

def rag_of(labels):
    labels = np.asarray(labels, dtype=np.int64)
    h, w = labels.shape
    # relabel every region by its last pixel so labels are roots of a forest
    flat = labels.ravel()
    roots = {}
    for i, v in enumerate(flat.tolist()):
        roots[v] = i
    rl = np.array([roots[v] for v in flat.tolist()]).reshape(h, w)
    fr = ParentForest.from_parent(rl.ravel(), h, w)
    return rl, segmenter.build_rag(rl, fr)


def test_rag_half_planes(backend):
    _, g = rag_of(synthetic.half_planes(4, 4))
    assert g.n_edges == 1
    assert len(g.boundary(0)[0]) == 4
    assert g.areas.tolist() == [8, 8]


def test_rag_checkerboard_blocks(backend):
    lab = np.kron(np.array([[0, 1], [2, 3]]), np.ones((2, 2), dtype=int))
    _, g = rag_of(lab)
    assert g.n_edges == 4
    assert len(g.regions) == 4


def test_rag_single_region(backend):
    _, g = rag_of(np.zeros((3, 5), dtype=int))
    assert g.n_edges == 0
    assert g.areas.tolist() == [15]


@pytest.mark.parametrize("seed", range(5))
def test_rag_matches_brute_adjacency(backend, seed):
    lab = synthetic.voronoi(23, 31, 7, seed)
    rl, g = rag_of(lab)
    assert set(zip(g.edge_u.tolist(), g.edge_v.tolist())) == adjacency(rl)
    assert g.areas.sum() == rl.size
    h, w = rl.shape
    flat = rl.ravel()
    seen = []
    for e in range(g.n_edges):
        p, q = g.boundary(e)
        assert len(p) > 0
        assert np.all(flat[p] == g.edge_u[e]) and np.all(flat[q] == g.edge_v[e])
        dr = np.abs(p // w - q // w)
        dc = np.abs(p % w - q % w)
        assert np.all(dr + dc == 1)
        seen += [tuple(sorted(x)) for x in zip(p.tolist(), q.tolist())]
    # every cross-label 4-adjacent pair appears exactly once
    brute = []
    for r in range(h):
        for c in range(w):
            for rr, cc in ((r, c + 1), (r + 1, c)):
                if rr < h and cc < w and rl[r, c] != rl[rr, cc]:
                    brute.append((r * w + c, rr * w + cc))
    assert sorted(seen) == sorted(brute)


# -- edge similarity ------------------------------------------------------------------

def roots_forest(h, w):
    return ParentForest.from_parent(np.arange(h * w), h, w)


def test_similarity_identical_is_pi(backend):
    f = np.zeros((2, 4, 2), dtype=np.float32)
    f[..., 1] = 1
    s = segmenter.edge_similarity(f, roots_forest(2, 4), (np.array([1, 5]), np.array([2, 6])))
    assert s == math.pi


def test_similarity_opposite_is_zero(backend):
    f = np.zeros((2, 4, 2), dtype=np.float32)
    f[:, :2, 1] = -1
    f[:, 2:, 1] = 1
    s = segmenter.edge_similarity(f, roots_forest(2, 4), (np.array([1, 5]), np.array([2, 6])))
    assert s == 0.0


@pytest.mark.parametrize("steps", [0, 3])
def test_similarity_straight_gt_boundary(backend, steps):
    lab = synthetic.half_planes(12, 10)
    f = field.gt_field(lab)
    fr = forest.build_forest(f)
    rl, g = rag_of(lab)
    segmenter.edge_similarities(f, fr, g, steps)
    assert g.similarity.tolist() == [0.0]


def test_similarity_walks_parents(backend):
    # p's own direction opposes q, but one step up its tree agrees
    f = np.zeros((1, 3, 2), dtype=np.float32)
    f[0, 0] = (0, 1)
    f[0, 1] = (0, -1)
    f[0, 2] = (0, -1)
    f = np.concatenate([f, f])
    parent = np.arange(6)
    parent[1] = 0
    fr = ParentForest.from_parent(parent, 2, 3)
    pair = (np.array([1]), np.array([2]))
    assert segmenter.edge_similarity(f, fr, pair, steps=0) == math.pi
    assert segmenter.edge_similarity(f, fr, pair, steps=1) == 0.0
    # beyond the root the walk stays put
    assert segmenter.edge_similarity(f, fr, pair, steps=5) == 0.0


def test_similarity_mean_angle(backend):
    # two pairs at 90 and 0 degrees: mean 45, S = 3pi/4
    f = np.zeros((2, 2, 2), dtype=np.float32)
    f[..., 1] = 1
    f[0, 1] = (1, 0)
    s = segmenter.edge_similarity(f, roots_forest(2, 2), (np.array([0, 2]), np.array([1, 3])))
    assert s == pytest.approx(0.75 * math.pi, abs=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_similarity_range_and_symmetry(backend, seed):
    rng = np.random.default_rng(seed)
    f = field.perturb(field.gt_field(synthetic.voronoi(40, 40, 6, seed)), 30, seed)
    fr, merged, initial, g = pipeline(f)
    assert np.all((g.similarity >= 0) & (g.similarity <= math.pi))
    for e in rng.choice(g.n_edges, size=min(10, g.n_edges), replace=False):
        p, q = g.boundary(e)
        assert segmenter.edge_similarity(f, fr, (q, p)) == segmenter.edge_similarity(f, fr, (p, q))


# -- partition --------------------------------------------------------------------------

def test_large_regions_identical_merge(backend):
    part = segmenter.partition_graph(toy_graph([2000, 2000], [(0, 1, math.pi)]))
    assert groups(part) == [[0, 1]]


def test_repulsive_pair_never_merges(backend):
    part = segmenter.partition_graph(toy_graph([2000, 2000], [(0, 1, 0.0)]))
    assert groups(part) == [[0], [1]]


def test_repulsion_propagates_through_merge(backend):
    # A-C repulsive; A-B merges first, so B-C must be refused
    g = toy_graph([2000, 2000, 2000], [(0, 1, 3.0), (1, 2, 2.9), (0, 2, 0.0)])
    part = segmenter.partition_graph(g)
    assert groups(part) == [[0, 1], [2]]
    assert [t[4] for t in part.trace] == [True, False]


def test_small_threshold_chain(backend):
    # 0-1 both large: 2.5 < theta_l, kept apart. 1-2 small side: 2.4 > theta_s
    g = toy_graph([2000, 2000, 500], [(0, 1, 2.5), (1, 2, 2.4)])
    assert groups(segmenter.partition_graph(g)) == [[0], [1, 2]]


def test_threshold_uses_current_class_area(backend):
    # 0-1 merge as small regions (2.6 > theta_s) into a class of 2000; the
    # class is then large, so 1-2 at 2.5 needs theta_l and fails
    g = toy_graph([1000, 1000, 2000], [(0, 1, 2.6), (1, 2, 2.5)])
    part = segmenter.partition_graph(g)
    assert groups(part) == [[0, 1], [2]]
    assert part.class_areas() == {0: 2000, 2: 2000}


def test_order_by_similarity_then_index(backend):
    g = toy_graph([300, 300, 300, 300], [(2, 3, 2.5), (0, 1, 2.5), (1, 2, 2.9)])
    part = segmenter.partition_graph(g)
    consumed = [(t[1], t[2], t[3]) for t in part.trace if t[0] == "attract"]
    # 1-2 first, then the tie (0,1) before (2,3); the survivor keeps the lower index on equal areas
    assert consumed[0] == (2.9, 1, 2)
    assert consumed[1] == (2.5, 0, 1)
    assert groups(part) == [[0, 1, 2, 3]]


def test_tiny_region_joins_best_non_repulsive(backend):
    # 2 is tiny; to 0 repulsive, to 1 weak but attractive
    cfg = SegConfig()
    g = toy_graph([2000, 2000, 50], [(0, 1, 0.05), (0, 2, 0.1), (1, 2, 1.0)])
    part = segmenter.partition_graph(g, cfg)
    assert groups(part) == [[0], [1, 2]]
    assert part.trace[-1][0] == "tiny"


def test_tiny_region_with_only_repulsive_neighbours_stays(backend):
    g = toy_graph([2000, 50], [(0, 1, 0.01)])
    assert groups(segmenter.partition_graph(g)) == [[0], [1]]


def test_tiny_prefers_highest_similarity(backend):
    g = toy_graph([2000, 2000, 100], [(0, 2, 1.2), (1, 2, 1.9), (0, 1, 0.0)])
    assert groups(segmenter.partition_graph(g)) == [[0], [1, 2]]


def test_partition_requires_similarity():
    g = toy_graph([10, 10], [(0, 1, 1.0)])
    g.similarity = None
    with pytest.raises(ValueError):
        segmenter.partition_graph(g)


def replay_ok(g, part, s0):
    """Replay the trace; check soundness and area conservation at every merge."""
    n = len(g.regions)
    cls = list(range(n))
    eu, ev = g.edge_index()
    rep_pairs = [(a, b) for a, b, s in zip(eu.tolist(), ev.tolist(), g.similarity.tolist()) if s < s0]
    total = int(g.areas.sum())
    for _, _, a, b, merged in part.trace:
        if not merged:
            continue
        ca, cb = cls[a], cls[b]
        cls = [ca if c == cb else c for c in cls]
        for x, y in rep_pairs:
            if cls[x] == cls[y]:
                return False
        area = {}
        for i, c in enumerate(cls):
            area[c] = area.get(c, 0) + int(g.areas[i])
        if sum(area.values()) != total:
            return False
    # final classes agree with the trace
    final = part.representatives()
    same = [[cls[i] == cls[j] for j in range(n)] for i in range(n)]
    return same == [[final[i] == final[j] for j in range(n)] for i in range(n)]


@pytest.mark.parametrize("seed", range(6))
def test_partition_invariants(backend, seed):
    lab = synthetic.voronoi(60, 60, 6, seed)
    f = field.perturb(field.gt_field(lab), 25, seed)
    _, _, _, g = pipeline(f)
    cfg = SegConfig(a_s=60, a_t=10)
    part = segmenter.partition_graph(g, cfg)
    sims = [t[1] for t in part.trace if t[0] == "attract"]
    assert all(x >= y for x, y in zip(sims, sims[1:]))
    assert all(s >= cfg.s0 for s in sims)
    assert sum(part.class_areas().values()) == 3600
    assert replay_ok(g, part, cfg.s0)


# -- segment ------------------------------------------------------------------------------

def test_segment_two_regions(backend):
    lab = synthetic.half_planes(64, 80)
    out = segmenter.segment(field.gt_field(lab))
    assert out.max() == 1
    assert metrics.covering(out, lab) >= 0.95


def test_segment_noisy_voronoi(backend):
    lab = synthetic.voronoi(128, 128, 5, 3)
    out = segmenter.segment(field.perturb(field.gt_field(lab), 10, 5))
    assert metrics.covering(out, lab) >= 0.90


def test_segment_uniform_field(backend):
    f = np.zeros((16, 16, 2), dtype=np.float32)
    f[..., 1] = 1
    fr = forest.build_forest(f)
    assert len(fr.roots) == 16
    assert np.all(segmenter.segment(f) == 0)


def test_segment_labels_raster_order(backend):
    lab = synthetic.voronoi(96, 96, 6, 4)
    out = segmenter.segment(field.gt_field(lab))
    _, first = np.unique(out.ravel(), return_index=True)
    assert np.all(np.diff(first) > 0)
    assert out.min() == 0


def test_segment_deterministic_and_timed(backend):
    f = field.perturb(field.gt_field(synthetic.voronoi(80, 90, 5, 1)), 10, 2)
    t = {}
    a = segmenter.segment(f, timings=t)
    b = segmenter.segment(f.copy())
    assert np.array_equal(a, b)
    assert set(t) == {"forest", "merge_roots", "flatten", "rag", "similarity", "partition", "relabel", "total"}


def test_segment_literal_root_merge_still_runs(backend):
    f = field.gt_field(synthetic.voronoi(64, 64, 4, 2))
    out = segmenter.segment(f, PartitionConfig(), SegConfig(root_guard=False))
    assert out.shape == (64, 64)


def test_relabel_sequential():
    out = segmenter.relabel_sequential(np.array([[7, 7, 3], [9, 3, 7]]))
    assert out.tolist() == [[0, 0, 1], [2, 1, 0]]


@pytest.mark.parametrize("kw", [
    dict(theta_s=3.0, theta_l=2.0),
    dict(a_t=2000),
    dict(s0=-0.1),
    dict(steps=-1),
    dict(steps=1.5),
])
def test_segconfig_rejects(kw):
    with pytest.raises(ValueError):
        SegConfig(**kw)


def test_segconfig_defaults():
    cfg = SegConfig()
    assert (cfg.steps, cfg.a_s, cfg.a_t) == (3, 1500, 200)
    assert cfg.s0 == math.pi / 18
    assert PartitionConfig().theta_a == 45.0
    assert cfg.theta_s < cfg.theta_l
