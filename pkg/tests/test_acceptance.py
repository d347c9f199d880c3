"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

Run alone with ``pytest -m acceptance -s``; the summary is also printed at
the end of a full run.
"""
import math
import time

import numpy as np
import pytest

from superbpd import _backend, bench, cli, field, forest, imaging, metrics, segmenter, synthetic

from oracles import brute_nearest, brute_sites, covering_exhaustive, rand_index_pairs

pytestmark = pytest.mark.acceptance


@pytest.fixture(scope="module")
def fixtures():
    return [(name, lab, field.gt_field(lab)) for name, lab in synthetic.acceptance_fixtures()]


def test_criterion_1_gt_recovery(fixtures, criterion):
    t0 = time.perf_counter()
    bad = []
    worst = [1.0, 1.0, 0.0]
    for name, lab, _ in fixtures:
        # timed from the label map: field generation counts too
        out = segmenter.segment(field.gt_field(lab))
        r = metrics.evaluate(out, [lab])
        worst = [min(worst[0], r.covering), min(worst[1], r.pri), max(worst[2], r.vi)]
        if not (r.covering >= 0.95 and r.pri >= 0.95 and r.vi <= 0.30):
            bad.append(name)
    elapsed = time.perf_counter() - t0
    ok = not bad and elapsed < 5.0
    detail = (f"{20 - len(bad)}/20 maps; worst covering {worst[0]:.4f}, PRI {worst[1]:.4f}, "
              f"VI {worst[2]:.4f}; {elapsed:.2f} s")
    criterion(1, "GT recovery (covering>=0.95, PRI>=0.95, VI<=0.30, <5 s)", ok, detail)
    assert not bad, bad
    assert elapsed < 5.0


def test_criterion_2_noise_robustness(fixtures, criterion):
    cov = []
    for i, (_, lab, f) in enumerate(fixtures):
        out = segmenter.segment(field.perturb(f, 10.0, 7000 + i))
        cov.append(metrics.covering(out, lab))
    good = sum(c >= 0.90 for c in cov)
    ok = good >= 18
    criterion(2, "noise robustness (sigma=10, covering>=0.90 on >=18/20)", ok,
              f"{good}/20, min covering {min(cov):.4f}")
    assert ok


def weak_boundary_field(seed, size=128, sigma=15.0, band=6, gap=0.2):
    """Two half-planes; noise only in a ``band``-px strip along a ``gap`` fraction of the boundary."""
    lab = synthetic.half_planes(size, size)
    f = field.gt_field(lab)
    rr, cc = np.mgrid[0:size, 0:size]
    centre = (size - 1) / 2.0
    rows = int(round(gap * size))
    r0 = (size - rows) // 2
    mask = (np.abs(cc - centre) <= band / 2) & (rr >= r0) & (rr < r0 + rows)
    noisy = field.perturb(f, sigma, seed)
    f = f.copy()
    f[mask] = noisy[mask]
    return lab, f


def test_criterion_3_weak_boundary(criterion):
    kept = 0
    for seed in range(10):
        _, f = weak_boundary_field(seed)
        kept += len(np.unique(segmenter.segment(f))) == 2
    ok = kept >= 8
    criterion(3, "weak-boundary separation (2 regions in >=8/10 seeds)", ok, f"{kept}/10")
    assert ok


def test_criterion_4_distance_transform(criterion):
    rng = np.random.default_rng(2024)
    done = 0
    mismatched = 0
    while done < 100:
        h, w = (int(v) for v in rng.integers(2, 65, 2))
        kind = done % 3
        if kind == 0:
            lab = synthetic.voronoi(h, w, int(rng.integers(2, 12)), int(rng.integers(1 << 30)))
        elif kind == 1:
            lab = rng.integers(0, int(rng.integers(2, 5)), (h, w))
        else:
            coarse = rng.integers(0, 3, (h // 5 + 1, w // 5 + 1))
            lab = np.kron(coarse, np.ones((5, 5), dtype=np.int64))[:h, :w]
        if len(np.unique(lab)) < 2:
            continue
        sites = field.boundary_sites(lab)
        doubled = (2 * sites).astype(np.int64)
        idx, d4 = field.nearest_site_squared(sites, w, h)
        ref_idx, ref_d4 = brute_nearest(brute_sites(lab), h, w)
        if not (np.array_equal(doubled, brute_sites(lab)) and np.array_equal(idx, ref_idx)
                and np.array_equal(d4, ref_d4)):
            mismatched += 1
        done += 1
    ok = mismatched == 0
    criterion(4, "distance transform equals brute force (100 maps, exact)", ok,
              f"{100 - mismatched}/100 exact, backend {_backend.backend_name()}")
    assert ok


def test_criterion_5_metric_oracles(criterion):
    rng = np.random.default_rng(55)
    err = 0.0
    for _ in range(50):
        h, w = (int(v) for v in rng.integers(1, 17, 2))
        pred = rng.integers(0, int(rng.integers(1, 7)), (h, w))
        gt = rng.integers(0, int(rng.integers(1, 7)), (h, w))
        err = max(err, abs(metrics.pri(pred, [gt]) - rand_index_pairs(pred, gt)))
        err = max(err, abs(metrics.covering(pred, gt) - covering_exhaustive(pred, gt)))
    x = rng.integers(0, 5, (16, 16))
    vi_self = metrics.vi(x, [x])
    rows = np.repeat([[0], [1]], 8, axis=0).repeat(16, axis=1)
    vi_cross = metrics.vi(rows, [rows.T])
    ok = err <= 1e-9 and abs(vi_self) <= 1e-9 and abs(vi_cross - 2 * math.log(2)) <= 1e-9
    criterion(5, "metric oracles (50 pairs, 1e-9)", ok,
              f"max oracle error {err:.2e}; VI(x,x)={vi_self:.1e}; crossing VI={vi_cross:.12f}")
    assert ok


def vortex(h, w, rng):
    cr, cc = rng.uniform(0, h), rng.uniform(0, w)
    rr, ccg = np.mgrid[0:h, 0:w]
    a = np.arctan2(rr - cr, ccg - cc) + rng.uniform(0, np.pi) * rng.choice([-1, 1])
    return a


def smooth(h, w, rng):
    coarse = rng.uniform(-np.pi, np.pi, (5, 5))
    rr = np.linspace(0, 4, h)
    cc = np.linspace(0, 4, w)
    # bilinear upsampling of a coarse random angle grid
    r0 = np.minimum(rr.astype(int), 3)
    c0 = np.minimum(cc.astype(int), 3)
    fr = (rr - r0)[:, None]
    fc = (cc - c0)[None, :]
    g = coarse
    return ((1 - fr) * (1 - fc) * g[r0][:, c0] + (1 - fr) * fc * g[r0][:, c0 + 1]
            + fr * (1 - fc) * g[r0 + 1][:, c0] + fr * fc * g[r0 + 1][:, c0 + 1])


def test_criterion_6_forest_invariants(criterion):
    rng = np.random.default_rng(6)
    failures = 0
    with_cycles = 0
    for i in range(1000):
        kind = i % 3
        if kind == 0:
            a = rng.uniform(-np.pi, np.pi, (32, 32))
        elif kind == 1:
            a = smooth(32, 32, rng)
        else:
            a = vortex(32, 32, rng)
        f = np.stack([np.sin(a), np.cos(a)], -1).astype(np.float32)
        theta = 45.0 if i % 2 == 0 else float(rng.uniform(10, 170))
        cfg = forest.PartitionConfig(theta)
        raw = _backend.kernels().build_parents(f, math.cos(math.radians(theta)))
        fr = forest.build_forest(f, cfg)
        with_cycles += not np.array_equal(raw, fr.parent)
        try:
            fr.validate()
            lab = forest.flatten(fr).ravel()
            assert np.array_equal(fr.parent[lab], lab)
            assert np.array_equal(np.unique(lab), fr.roots)
        except (AssertionError, ValueError):
            failures += 1
    ok = failures == 0
    criterion(6, "forest invariants on 1000 random 32x32 fields", ok,
              f"{failures} failures; {with_cycles} fields needed cycle breaking")
    assert ok


def test_criterion_7_runtime(criterion):
    _, f = bench.bench_field(390, 470, k=24, seed=7)
    med, _ = bench.time_segment(f, repeats=5)
    rows = bench.scaling_table([(192, 192), (384, 384), (768, 768)], repeats=5)
    ratios = [r["ratio"] for r in rows[1:]]
    ok = med["total"] <= 100.0 and all(r <= 2.3 for r in ratios)
    criterion(7, "runtime (390x470 <= 100 ms; <= 2.3x per pixel doubling)", ok,
              f"{med['total']:.1f} ms at 390x470; per-doubling ratios "
              + ", ".join(f"{r:.2f}" for r in ratios)
              + "; totals " + ", ".join(f"{r['ms']['total']:.1f}" for r in rows)
              + f" ms; backend {_backend.backend_name()}")
    assert med["total"] <= 100.0
    assert all(r <= 2.3 for r in ratios)


def _cli_runs(tmp, capsys):
    """Every subcommand once; returns the output files and captured stdout per command."""
    lab = synthetic.voronoi(72, 88, 5, 8)
    imaging.write_labels(lab, tmp / "gt.pgm")
    imaging.write_labels(synthetic.disc(72, 88), tmp / "gt2.pgm")
    (tmp / "bench").mkdir(exist_ok=True)
    steps = [
        ("gt-field", ["gt-field", tmp / "gt.pgm", tmp / "f.bpdf", "--viz", tmp / "f.ppm"],
         ["f.bpdf", "f.ppm"]),
        ("perturb", ["perturb", tmp / "f.bpdf", 10, 4, tmp / "n.bpdf"], ["n.bpdf"]),
        ("partition", ["partition", tmp / "n.bpdf", tmp / "p.pgm", "--viz", tmp / "p.ppm"], ["p.pgm", "p.ppm"]),
        ("segment", ["segment", tmp / "n.bpdf", tmp / "s.pgm", "--viz", tmp / "s.ppm", "--timing"],
         ["s.pgm", "s.ppm"]),
        ("eval", ["eval", tmp / "s.pgm", tmp / "gt.pgm", tmp / "gt2.pgm", "--detail"], []),
        ("viz", ["viz", tmp / "s.pgm", tmp / "v.ppm", "--base", tmp / "f.ppm"], ["v.ppm"]),
        ("bench", ["bench", "64", "48x96", "--repeats", "1", "--sigma", "5", "--out-dir", tmp / "bench"],
         ["bench/bench-64x64.pgm", "bench/bench-48x96.pgm"]),
    ]
    files = {}
    stdout = {}
    for name, argv, outs in steps:
        code = cli.main([str(a) for a in argv] + ["--manifest", str(tmp / f"{name}.json")])
        captured = capsys.readouterr()
        assert code == 0, (name, captured.err)
        files[name] = [(tmp / o).read_bytes() for o in outs]
        # bench prints timings, which are not expected to repeat
        stdout[name] = None if name == "bench" else captured.out
    return files, stdout


def test_criterion_8_cli_determinism(tmp_path, capsys, criterion):
    # same paths both times: eval --detail echoes them
    fa, sa = _cli_runs(tmp_path, capsys)
    fb, sb = _cli_runs(tmp_path, capsys)
    differ = [n for n in fa if fa[n] != fb[n] or sa[n] != sb[n]]
    ok = not differ
    n_files = sum(len(v) for v in fa.values())
    criterion(8, "CLI determinism (every command twice, byte-identical outputs)", ok,
              f"{len(fa)} commands, {n_files} files" + (f"; differ: {differ}" if differ else ""))
    assert ok


def test_criterion_9_discrepancy(criterion):
    lab = np.zeros((8, 8), dtype=np.int64)
    lab[:, 5:] = 1
    f = field.gt_field(lab)
    zero = field.field_discrepancy(f, f, lab).total
    uniform = np.zeros((6, 7, 2), dtype=np.float32)
    uniform[..., 1] = 1
    one = np.zeros((6, 7), dtype=np.int64)
    pred = uniform.copy()
    pred[2, 3] *= -1
    pred[4, 0] *= -1
    d = field.field_discrepancy(uniform, pred, one, alpha=1.0)
    w = 1 / math.sqrt(42)
    expect = 2 * w * (4 + math.pi**2)
    rel = abs(d.total - expect) / expect
    ok = zero == 0 and rel <= 1e-6
    criterion(9, "field discrepancy (self = 0; two flipped pixels = 2 w (4 + pi^2))", ok,
              f"self {zero}; flip {d.total:.9f} vs {expect:.9f} (rel {rel:.1e})")
    assert ok
